"""Memory model, trade-off reward, and candidate selection.

Memory is counted exactly: weights contribute element-count times their
bitwidth, every neuron parameter group likewise, with full-precision
groups at 32 bits.  Candidates are ranked by ``reward = accuracy -
mu * normalized_memory`` and the final front keeps everything not
dominated in (accuracy up, memory down).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .fixed_point import FP32_BITS, FixedFormat

__all__ = [
    "Candidate",
    "group_bits",
    "memory_footprint",
    "normalized_memory",
    "reward",
    "select_best",
    "pareto_front",
]


@dataclass
class Candidate:
    """An evaluated configuration: what it costs and what it achieves."""

    label: str
    accuracy: float
    memory_bits: int
    m_norm: float = 0.0
    rewards: dict[float, float] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def group_bits(fmt: FixedFormat | None) -> int:
    """Storage bitwidth of one element: 1 + i + f, or 32 at full precision."""
    return FP32_BITS if fmt is None else fmt.total_bits


def memory_footprint(
    counts: Mapping[str, int], formats: Mapping[str, FixedFormat | None]
) -> int:
    """Exact model footprint in bits over its parameter groups."""
    total = 0
    for name, count in counts.items():
        if name not in formats:
            raise ValueError(f"group {name!r} has no resolved format")
        total += count * group_bits(formats[name])
    return total


def normalized_memory(mem_q: int, mem_fp: int) -> float:
    """Quantized footprint as a fraction of the full-precision footprint."""
    if mem_fp <= 0:
        raise ValueError("full-precision footprint must be positive")
    return mem_q / mem_fp


def reward(accuracy: float, m_norm: float, tradeoff_mu: float) -> float:
    """Trade-off benefit of a candidate; all three inputs live in [0, 1]."""
    return accuracy - tradeoff_mu * m_norm


def select_best(candidates: Sequence[Candidate], tradeoff_mu: float) -> Candidate:
    """Highest-reward candidate; ties go to less memory, then label order."""
    if not candidates:
        raise ValueError("no candidates to select from")
    return min(
        candidates,
        key=lambda c: (-reward(c.accuracy, c.m_norm, tradeoff_mu), c.memory_bits, c.label),
    )


def pareto_front(candidates: Sequence[Candidate]) -> list[Candidate]:
    """Candidates not dominated in (higher accuracy, lower memory).

    A candidate is dominated when another is at least as good on both
    axes and strictly better on one.  The front comes back sorted by
    memory ascending (accuracy as tie-break).
    """
    front = []
    for c in candidates:
        dominated = any(
            (o.accuracy >= c.accuracy and o.memory_bits < c.memory_bits)
            or (o.accuracy > c.accuracy and o.memory_bits <= c.memory_bits)
            for o in candidates
        )
        if not dominated:
            front.append(c)
    return sorted(front, key=lambda c: (c.memory_bits, c.accuracy, c.label))
