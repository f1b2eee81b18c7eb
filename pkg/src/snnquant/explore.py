"""Pruned design-space exploration over quantization configurations.

The grid is scheme x (per-axis precision level, descending) x rounding.
A configuration passes when its accuracy stays within ``acc_target`` of
the full-precision baseline.  When a configuration fails at a position
whose other axes all sit at their first (highest-precision) level, the
failing axis's bound shrinks to just above the failure, skipping every
lower precision on that axis; a failure at the all-first position shrinks
the first axis.  Pruning is heuristic by design (it may skip configs that
would have passed); ``brute_force`` enumerates the same grid exhaustively
and serves as the testing oracle.

Workers > 1 evaluate grid points speculatively; results commit strictly
in grid order and speculative evaluations invalidated by a later prune
are discarded and logged, so the candidate set never depends on
scheduling.
"""

from __future__ import annotations

import itertools
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .fixed_point import FP32_TAG, Rounding
from .quantize import ParamGroupSpec, ParamKind, QuantConfig, QuantScheme, resolve_formats
from .select import Candidate, memory_footprint, normalized_memory

__all__ = [
    "SearchSpace",
    "ExplorationResult",
    "explore",
    "brute_force",
    "make_model_evaluator",
    "axis_format_str",
]

Evaluator = Callable[[QuantConfig], tuple[float, int]]


@dataclass(frozen=True)
class SearchSpace:
    """Inputs of the search: schemes, precision levels, roundings, axes."""

    axes: tuple[str, ...]
    levels: tuple[int, ...]
    schemes: tuple[QuantScheme, ...] = (QuantScheme.PTQ, QuantScheme.ITQ)
    roundings: tuple[Rounding, ...] = (
        Rounding.TRUNCATE,
        Rounding.NEAREST,
        Rounding.STOCHASTIC,
    )
    acc_target: float = 0.01

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("precision level list must not be empty")
        if list(self.levels) != sorted(set(self.levels), reverse=True):
            raise ValueError("levels must be strictly descending")
        if not self.axes:
            raise ValueError("need at least one search axis")
        if not self.schemes or not self.roundings:
            raise ValueError("schemes and roundings must not be empty")
        if not 0.0 <= self.acc_target <= 1.0:
            raise ValueError("acc_target must lie in [0, 1]")

    @property
    def grid_size(self) -> int:
        return (
            len(self.schemes)
            * len(self.roundings)
            * len(self.levels) ** len(self.axes)
        )


@dataclass
class ExplorationResult:
    candidates: list[Candidate]
    prune_log: list[dict]
    evaluated: list[dict]
    n_evaluations: int
    n_discarded: int
    acc_fp: float


def _config_at(
    space: SearchSpace, scheme: QuantScheme, rounding: Rounding, idx: Sequence[int], seed: int
) -> QuantConfig:
    frac = {axis: space.levels[idx[a] - 1] for a, axis in enumerate(space.axes)}
    return QuantConfig.make(scheme, rounding, frac, seed=seed)


def _successor(idx: list[int], bounds: list[int]) -> bool:
    """Advance a 1-based odometer in place; False when exhausted.

    An index left above its (freshly shrunk) bound invalidates its whole
    subtree, so the carry starts at the shallowest violated axis.
    """
    n = len(idx)
    violated = next((a for a in range(n) if idx[a] > bounds[a]), None)
    if violated is not None:
        a = violated
        for b in range(a, n):
            idx[b] = 1
    else:
        a = n - 1
        idx[a] += 1
    while idx[a] > bounds[a]:
        idx[a] = 1
        a -= 1
        if a < 0:
            return False
        idx[a] += 1
    return True


def _prune_axis(idx: Sequence[int]) -> int | None:
    """Axis whose bound shrinks after a failure at ``idx``, if any.

    The failing position must sit at the first level on every other axis;
    the all-first position resolves to the first axis.
    """
    for a in range(len(idx)):
        if all(idx[b] == 1 for b in range(len(idx)) if b != a):
            return a
    return None


def explore(
    space: SearchSpace,
    evaluate: Evaluator,
    acc_fp: float,
    seed: int = 0,
    prune: bool = True,
    workers: int = 1,
) -> ExplorationResult:
    """Run the pruned sweep; returns candidates plus a full audit trail."""
    threshold = acc_fp - space.acc_target
    candidates: list[Candidate] = []
    prune_log: list[dict] = []
    evaluated: list[dict] = []
    n_evals = 0
    n_discarded = 0

    def eval_point(scheme: QuantScheme, idx: tuple[int, ...]):
        out = []
        for rounding in space.roundings:
            config = _config_at(space, scheme, rounding, idx, seed)
            acc, mem = evaluate(config)
            out.append((config, acc, mem))
        return out

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for scheme in space.schemes:
            bounds = [len(space.levels)] * len(space.axes)
            idx = [1] * len(space.axes)
            pending: dict[tuple[int, ...], Future] = {}

            def fill_frontier():
                sim = list(idx)
                sim_ok = True
                queued = 0
                while queued < workers and sim_ok:
                    key = tuple(sim)
                    if key not in pending:
                        pending[key] = pool.submit(eval_point, scheme, key)
                    queued += 1
                    sim_ok = _successor(sim, bounds)

            while True:
                key = tuple(idx)
                if pool is not None:
                    fill_frontier()
                    results = pending.pop(key).result()
                else:
                    results = eval_point(scheme, key)
                n_evals += len(results)
                any_failed = False
                for config, acc, mem in results:
                    passed = acc >= threshold
                    any_failed |= not passed
                    evaluated.append(
                        {
                            "scheme": scheme.value,
                            "rounding": config.rounding.value,
                            "indices": list(key),
                            "accuracy": acc,
                            "memory_bits": mem,
                            "passed": passed,
                        }
                    )
                    if passed:
                        candidates.append(
                            Candidate(
                                label=config.label(),
                                accuracy=acc,
                                memory_bits=mem,
                                extra={
                                    "scheme": scheme.value,
                                    "rounding": config.rounding.value,
                                    "axis_frac": dict(config.axis_frac),
                                    "indices": list(key),
                                },
                            )
                        )
                if any_failed and prune:
                    axis = _prune_axis(key)
                    if axis is not None and bounds[axis] >= key[axis]:
                        prune_log.append(
                            {
                                "event": "prune",
                                "scheme": scheme.value,
                                "axis": space.axes[axis],
                                "from_index": key[axis],
                                "old_bound": bounds[axis],
                                "new_bound": key[axis] - 1,
                                "trigger": list(key),
                                "reason": "accuracy_below_target",
                            }
                        )
                        bounds[axis] = key[axis] - 1
                        if pool is not None:
                            # drop speculative points that fell inside the
                            # pruned region
                            for pkey in list(pending):
                                if any(
                                    pkey[a] > bounds[a] for a in range(len(bounds))
                                ):
                                    pending.pop(pkey)
                                    n_discarded += len(space.roundings)
                                    prune_log.append(
                                        {
                                            "event": "speculative_discard",
                                            "scheme": scheme.value,
                                            "indices": list(pkey),
                                            "reason": "pruned_before_commit",
                                        }
                                    )
                if not _successor(idx, bounds):
                    break
            for pkey in list(pending):
                pending.pop(pkey)
                n_discarded += len(space.roundings)
                prune_log.append(
                    {
                        "event": "speculative_discard",
                        "scheme": scheme.value,
                        "indices": list(pkey),
                        "reason": "scheme_exhausted",
                    }
                )
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)
    return ExplorationResult(
        candidates=candidates,
        prune_log=prune_log,
        evaluated=evaluated,
        n_evaluations=n_evals,
        n_discarded=n_discarded,
        acc_fp=acc_fp,
    )


def brute_force(
    space: SearchSpace, evaluate: Evaluator, acc_fp: float, seed: int = 0
) -> list[Candidate]:
    """Exhaustive enumeration of the same grid, no pruning (testing oracle)."""
    threshold = acc_fp - space.acc_target
    out: list[Candidate] = []
    level_indices = range(1, len(space.levels) + 1)
    for scheme in space.schemes:
        for idx in itertools.product(*[level_indices] * len(space.axes)):
            for rounding in space.roundings:
                config = _config_at(space, scheme, rounding, idx, seed)
                acc, mem = evaluate(config)
                if acc >= threshold:
                    out.append(
                        Candidate(
                            label=config.label(),
                            accuracy=acc,
                            memory_bits=mem,
                            extra={
                                "scheme": scheme.value,
                                "rounding": rounding.value,
                                "axis_frac": dict(config.axis_frac),
                                "indices": list(idx),
                            },
                        )
                    )
    return out


def axis_format_str(
    specs: Sequence[ParamGroupSpec],
    axes,
    axis: str,
    frac: int | None,
) -> str:
    """Report string for one axis: concrete Qi.f for a single-group axis,
    the literal-``i`` placeholder when the axis spans several groups."""
    if frac is None:
        return FP32_TAG
    names = list(axes[axis])
    if len(names) == 1:
        spec = next(s for s in specs if s.name == names[0])
        return f"Q{spec.int_bits}.{frac}"
    return f"Qi.{frac}"


def make_model_evaluator(
    baseline,
    specs: Sequence[ParamGroupSpec],
    train_dataset,
    test_dataset,
    train_kwargs: dict | None = None,
) -> Evaluator:
    """Evaluator over a real model: PTQ quantizes the trained baseline,
    ITQ retrains from scratch under simulated quantization."""
    from .quantize import apply_ptq, train_itq

    counts = baseline.element_counts()
    axes = baseline.axes()
    train_kwargs = dict(train_kwargs or {})

    def evaluate(config: QuantConfig) -> tuple[float, int]:
        if config.scheme is QuantScheme.PTQ:
            model = apply_ptq(baseline, config, specs)
        else:
            fresh = type(baseline)(baseline.params, baseline.seed)
            model = train_itq(fresh, config, specs, train_dataset, **train_kwargs)
            if hasattr(model, "assign_labels"):
                model.assign_labels(train_dataset)
        accuracy = model.evaluate(test_dataset)
        formats = resolve_formats(specs, config, axes).by_group
        memory = memory_footprint(counts, formats)
        return accuracy, memory

    return evaluate
