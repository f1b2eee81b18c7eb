"""Bit-exact signed fixed-point (Qi.f) values and rounding schemes.

A format ``Qi.f`` has one sign bit, ``i`` integer bits and ``f`` fractional
bits in two's complement, covering ``[-2**i, 2**i - 2**-f]`` in steps of
``eps = 2**-f``.  Three rounding schemes are provided: truncation (floor
toward -inf), round-to-nearest with half-way cases rounding up, and
unbiased stochastic rounding driven by a counter-based generator so that
a given (seed, site, element, step) always reproduces the same draw
regardless of evaluation order.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "FixedFormat",
    "FixedValue",
    "Rounding",
    "quantize",
    "quantize_array",
    "quantize_codes",
    "decode_codes",
    "saturation_count",
    "required_int_bits",
    "fold_key",
    "uniform_stream",
    "format_to_str",
    "parse_format",
    "FP32_TAG",
    "FP32_BITS",
]

FP32_TAG = "FP32"
FP32_BITS = 32

_FORMAT_RE = re.compile(r"^Q(\d+)\.(\d+)$")


@dataclass(frozen=True)
class FixedFormat:
    """Qi.f precision descriptor: sign bit + int_bits + frac_bits."""

    int_bits: int
    frac_bits: int

    def __post_init__(self) -> None:
        if self.int_bits < 0 or self.frac_bits < 0:
            raise ValueError(f"bit counts must be non-negative, got {self}")

    @property
    def total_bits(self) -> int:
        return 1 + self.int_bits + self.frac_bits

    @property
    def epsilon(self) -> float:
        """Precision: the gap between adjacent representable values."""
        return 2.0 ** -self.frac_bits

    @property
    def min_value(self) -> float:
        return -(2.0 ** self.int_bits)

    @property
    def max_value(self) -> float:
        return 2.0 ** self.int_bits - 2.0 ** -self.frac_bits

    @property
    def min_code(self) -> int:
        return -(1 << (self.int_bits + self.frac_bits))

    @property
    def max_code(self) -> int:
        return (1 << (self.int_bits + self.frac_bits)) - 1

    def __str__(self) -> str:
        return f"Q{self.int_bits}.{self.frac_bits}"


def format_to_str(fmt: FixedFormat | None) -> str:
    """Report spelling of a format: "Qi.f", or "FP32" for full precision."""
    return FP32_TAG if fmt is None else str(fmt)


def parse_format(text: str) -> FixedFormat | None:
    """Inverse of :func:`format_to_str`."""
    if text == FP32_TAG:
        return None
    m = _FORMAT_RE.match(text)
    if m is None:
        raise ValueError(f"not a fixed-point format: {text!r}")
    return FixedFormat(int(m.group(1)), int(m.group(2)))


@dataclass(frozen=True)
class FixedValue:
    """One quantized number: a two's-complement code plus its format."""

    code: int
    fmt: FixedFormat

    def __post_init__(self) -> None:
        if not self.fmt.min_code <= self.code <= self.fmt.max_code:
            raise ValueError(f"code {self.code} outside {self.fmt} range")

    def decode(self) -> float:
        return self.code * self.fmt.epsilon


class Rounding(Enum):
    """Rounding scheme applied when a real value falls between codes."""

    TRUNCATE = "TR"
    NEAREST = "RN"
    STOCHASTIC = "SR"

    @classmethod
    def from_name(cls, name: str) -> "Rounding":
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise ValueError(f"unknown rounding scheme: {name!r}")


# --- counter-based uniform stream (splitmix64) ------------------------------
#
# Stochastic rounding draws come from a stateless mix of
# (run seed, parameter id, timestep, element index), so a draw does not
# depend on how many other draws happened before it.

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1FE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FOLD_MULT = np.uint64(0x2545F4914F6CDD1D)
_KEY_INIT = np.uint64(0x517CC1B727220A95)
_U53 = float(2.0 ** -53)


def _finalize(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _part_to_u64(part: int | str) -> np.uint64:
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return np.uint64(int.from_bytes(digest, "little"))
    return np.uint64(part & 0xFFFFFFFFFFFFFFFF)


def fold_key(*parts: int | str) -> int:
    """Fold seed/site/step identifiers into one 64-bit stream key."""
    with np.errstate(over="ignore"):
        h = _KEY_INIT
        for part in parts:
            h = _finalize((h ^ _part_to_u64(part)) * _FOLD_MULT + _GOLDEN)
    return int(h)


def uniform_stream(key: int, n: int, offset: int = 0) -> np.ndarray:
    """``n`` uniforms in [0, 1) at positions offset..offset+n of stream ``key``."""
    with np.errstate(over="ignore"):
        idx = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
        z = _finalize(np.uint64(key) + idx * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * _U53


# --- quantization -----------------------------------------------------------


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite input")


def quantize_codes(
    x: np.ndarray | float,
    fmt: FixedFormat,
    rounding: Rounding = Rounding.NEAREST,
    key: int = 0,
    offset: int = 0,
) -> np.ndarray:
    """Quantize to integer codes; saturates at the format's range ends.

    ``key`` identifies the stochastic-rounding stream (ignored by the
    deterministic schemes); flat element index within ``x``, plus
    ``offset``, selects the draw.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    # scaling by a power of two is exact in binary floating point, so the
    # fractional part below is the true distance to the quantization floor
    scaled = np.clip(x, fmt.min_value, fmt.max_value) * 2.0 ** fmt.frac_bits
    base = np.floor(scaled)
    frac = scaled - base
    if rounding is Rounding.TRUNCATE:
        code = base
    elif rounding is Rounding.NEAREST:
        code = base + (frac >= 0.5)
    else:
        draws = uniform_stream(key, x.size, offset).reshape(x.shape)
        code = base + (draws < frac)
    return np.clip(code, fmt.min_code, fmt.max_code).astype(np.int64)


def decode_codes(codes: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) * fmt.epsilon


def quantize_array(
    x: np.ndarray,
    fmt: FixedFormat,
    rounding: Rounding = Rounding.NEAREST,
    key: int = 0,
) -> np.ndarray:
    """Quantize an array, returning the decoded (exactly representable) values."""
    return decode_codes(quantize_codes(x, fmt, rounding, key), fmt)


def quantize(
    x: float,
    fmt: FixedFormat,
    rounding: Rounding = Rounding.NEAREST,
    key: int = 0,
    index: int = 0,
) -> FixedValue:
    """Quantize one real number to a :class:`FixedValue`.

    ``index`` is the element position within the stream ``key`` for
    stochastic rounding.
    """
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite input: {x!r}")
    code = quantize_codes(np.float64(x), fmt, rounding, key, offset=index)
    return FixedValue(int(code), fmt)


def saturation_count(x: np.ndarray, fmt: FixedFormat) -> int:
    """How many elements fall outside the representable range (get clamped)."""
    x = np.asarray(x, dtype=np.float64)
    return int(np.count_nonzero((x < fmt.min_value) | (x > fmt.max_value)))


def required_int_bits(observed_max_abs: float) -> int:
    """Integer bitwidth needed to cover a parameter's observed magnitude."""
    if observed_max_abs < 0:
        raise ValueError("observed magnitude must be non-negative")
    if observed_max_abs == 0:
        return 0
    return max(0, math.ceil(math.log2(1.0 + observed_max_abs)))
