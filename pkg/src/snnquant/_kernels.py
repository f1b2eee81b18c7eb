"""Shared numba helpers for the simulation kernels.

The counter-based uniform draws here mirror ``fixed_point.fold_key`` /
``uniform_stream`` exactly, so in-kernel stochastic rounding reproduces
the vectorized quantization path bit for bit.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .fixed_point import FixedFormat, Rounding

U64 = np.uint64
GOLDEN = U64(0x9E3779B97F4A7C15)
MIX1 = U64(0xBF58476D1FE4E5B9)
MIX2 = U64(0x94D049BB133111EB)
FOLD_MULT = U64(0x2545F4914F6CDD1D)

# layout of a packed per-group quantization descriptor
Q_ON, Q_SCALE, Q_INV, Q_LO, Q_HI, Q_MINC, Q_MAXC, Q_MODE = range(8)


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> U64(30))) * MIX1
    z = (z ^ (z >> U64(27))) * MIX2
    return z ^ (z >> U64(31))


@njit(inline="always")
def fold1(key, part):
    return mix64((key ^ U64(part)) * FOLD_MULT + GOLDEN)


@njit(inline="always")
def elem_uniform(key, elem):
    z = mix64(key + (U64(elem) + U64(1)) * GOLDEN)
    return np.float64(z >> U64(11)) * (2.0**-53)


@njit(inline="always")
def q_scalar(x, q, key_t, elem, sat, sat_idx):
    """Scalar fixed-point quantization matching ``quantize_codes``."""
    if x < q[Q_LO]:
        x = q[Q_LO]
        sat[sat_idx] += 1
    elif x > q[Q_HI]:
        x = q[Q_HI]
        sat[sat_idx] += 1
    s = x * q[Q_SCALE]
    c = math.floor(s)
    fr = s - c
    if q[Q_MODE] == 1.0:
        if fr >= 0.5:
            c += 1.0
    elif q[Q_MODE] == 2.0:
        if elem_uniform(key_t, elem) < fr:
            c += 1.0
    if c < q[Q_MINC]:
        c = q[Q_MINC]
    elif c > q[Q_MAXC]:
        c = q[Q_MAXC]
    return c * q[Q_INV]


def pack_quant(fmt: FixedFormat | None, rounding: Rounding) -> np.ndarray:
    """Pack a format + rounding into the flat descriptor the kernels read."""
    q = np.zeros(8, dtype=np.float64)
    if fmt is None:
        return q
    mode = {Rounding.TRUNCATE: 0.0, Rounding.NEAREST: 1.0, Rounding.STOCHASTIC: 2.0}
    q[Q_ON] = 1.0
    q[Q_SCALE] = 2.0**fmt.frac_bits
    q[Q_INV] = 2.0**-fmt.frac_bits
    q[Q_LO] = fmt.min_value
    q[Q_HI] = fmt.max_value
    q[Q_MINC] = float(fmt.min_code)
    q[Q_MAXC] = float(fmt.max_code)
    q[Q_MODE] = mode[rounding]
    return q
