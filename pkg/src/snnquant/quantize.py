"""Significance-aware quantization of named parameter groups.

A model declares its quantizable parameters as groups.  Constants get a
format fixed by their value; variables get integer bits from the range
observed while running the workload at full precision, and fractional
bits from the search configuration.  Both PTQ (quantize a trained model
once) and ITQ (train against a quantized view backed by full-precision
masters) are supported for any model implementing the small protocol
below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Protocol, Sequence

from .fixed_point import (
    FP32_BITS,
    FixedFormat,
    Rounding,
    format_to_str,
    parse_format,
    required_int_bits,
)

__all__ = [
    "ParamKind",
    "QuantScheme",
    "GroupDef",
    "ParamGroupSpec",
    "QuantConfig",
    "ResolvedQuant",
    "QuantizableModel",
    "constant_format",
    "classify_and_size",
    "resolve_formats",
    "specs_to_dict",
    "specs_from_dict",
    "apply_ptq",
    "train_itq",
]

# constants pack into a single byte unless their integer part alone
# needs more; integer-valued constants drop the fractional bits entirely
_CONSTANT_TOTAL_BITS = 8


class ParamKind(Enum):
    CONSTANT = "constant"
    VARIABLE = "variable"


class QuantScheme(Enum):
    PTQ = "PTQ"
    ITQ = "ITQ"

    @classmethod
    def from_name(cls, name: str) -> "QuantScheme":
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise ValueError(f"unknown quantization scheme: {name!r}")


@dataclass(frozen=True)
class GroupDef:
    """Declaration of one quantizable parameter group of a model."""

    name: str
    kind: ParamKind
    family: str  # "weight" or "neuron"; constants follow their family


@dataclass
class ParamGroupSpec:
    """Sized parameter group: bitwidth requirements minus the frac choice."""

    name: str
    kind: ParamKind
    family: str
    element_count: int
    observed_min: float
    observed_max: float
    int_bits: int
    constant_fmt: FixedFormat | None = None  # set iff kind is CONSTANT

    def resolved(self, frac_bits: int | None) -> FixedFormat | None:
        """Format of this group at the given fractional bitwidth."""
        if self.kind is ParamKind.CONSTANT:
            raise ValueError(f"group {self.name} is a constant")
        if frac_bits is None:
            return None
        return FixedFormat(self.int_bits, frac_bits)


class QuantizableModel(Protocol):
    """What a model must expose to take part in quantization."""

    def group_defs(self) -> Sequence[GroupDef]: ...

    def element_counts(self) -> Mapping[str, int]: ...

    def constant_values(self) -> Mapping[str, float]: ...

    def observed_ranges(self) -> Mapping[str, tuple[float, float]]: ...


def constant_format(value: float) -> FixedFormat:
    """Value-determined format of a constant parameter.

    Zero needs only the sign bit.  Integer values take no fractional
    bits.  Everything else is packed into one byte: integer bits sized to
    the magnitude, the rest fractional.
    """
    if value == 0:
        return FixedFormat(0, 0)
    int_bits = required_int_bits(abs(value))
    if float(value).is_integer():
        return FixedFormat(int_bits, 0)
    return FixedFormat(int_bits, max(0, _CONSTANT_TOTAL_BITS - 1 - int_bits))


def classify_and_size(model: QuantizableModel, workload=None) -> list[ParamGroupSpec]:
    """Size every declared group from a full-precision run of the workload.

    ``workload``, when given, is a callable that trains/runs the model so
    ranges get populated; pass None for a model that already ran.
    """
    if workload is not None:
        workload(model)
    counts = model.element_counts()
    constants = model.constant_values()
    observed = model.observed_ranges()
    specs: list[ParamGroupSpec] = []
    for group in model.group_defs():
        if group.kind is ParamKind.CONSTANT:
            value = constants[group.name]
            fmt = constant_format(value)
            specs.append(
                ParamGroupSpec(
                    name=group.name,
                    kind=group.kind,
                    family=group.family,
                    element_count=counts[group.name],
                    observed_min=value,
                    observed_max=value,
                    int_bits=fmt.int_bits,
                    constant_fmt=fmt,
                )
            )
            continue
        if group.name not in observed:
            raise ValueError(
                f"workload produced no range data for group {group.name!r}"
            )
        lo, hi = observed[group.name]
        specs.append(
            ParamGroupSpec(
                name=group.name,
                kind=group.kind,
                family=group.family,
                element_count=counts[group.name],
                observed_min=lo,
                observed_max=hi,
                int_bits=required_int_bits(max(abs(lo), abs(hi))),
            )
        )
    return specs


@dataclass(frozen=True)
class QuantConfig:
    """One point of the design space.

    ``axis_frac`` maps each search axis to a fractional bitwidth, or None
    for full precision on that axis.  Axes name variable groups (an axis
    may cover several groups, e.g. all neuron-state variables).
    """

    scheme: QuantScheme
    rounding: Rounding
    axis_frac: tuple[tuple[str, int | None], ...]
    seed: int = 0

    @classmethod
    def make(
        cls,
        scheme: QuantScheme | str,
        rounding: Rounding | str,
        axis_frac: Mapping[str, int | None],
        seed: int = 0,
    ) -> "QuantConfig":
        if isinstance(scheme, str):
            scheme = QuantScheme.from_name(scheme)
        if isinstance(rounding, str):
            rounding = Rounding.from_name(rounding)
        return cls(scheme, rounding, tuple(axis_frac.items()), seed)

    @property
    def frac_by_axis(self) -> dict[str, int | None]:
        return dict(self.axis_frac)

    def label(self) -> str:
        parts = [self.scheme.value, self.rounding.value]
        for axis, frac in self.axis_frac:
            parts.append(f"{axis}.{'FP32' if frac is None else frac}")
        return "-".join(parts)

    def is_identity(self) -> bool:
        return all(frac is None for _, frac in self.axis_frac)


@dataclass(frozen=True)
class ResolvedQuant:
    """Per-group formats plus the rounding scheme, ready to execute."""

    formats: tuple[tuple[str, FixedFormat | None], ...]
    rounding: Rounding
    seed: int

    @property
    def by_group(self) -> dict[str, FixedFormat | None]:
        return dict(self.formats)

    def tags(self) -> dict[str, str]:
        return {name: format_to_str(fmt) for name, fmt in self.formats}

    @classmethod
    def from_tags(cls, tags: Mapping[str, str], rounding: Rounding, seed: int):
        fmts = tuple((name, parse_format(tag)) for name, tag in tags.items())
        return cls(fmts, rounding, seed)


def resolve_formats(
    specs: Sequence[ParamGroupSpec],
    config: QuantConfig,
    axes: Mapping[str, Sequence[str]],
) -> ResolvedQuant:
    """Turn an axis-level config into per-group formats.

    Variables take their axis's fractional bits on top of their sized
    integer bits.  Constants snap to their value-determined format
    whenever any variable of the same family is quantized, and stay at
    full precision otherwise (quantizing a family pulls its constants
    into fixed-point storage with it).
    """
    frac_by_axis = config.frac_by_axis
    unknown = set(frac_by_axis) - set(axes)
    if unknown:
        raise ValueError(f"config references unknown axes: {sorted(unknown)}")
    by_name = {spec.name: spec for spec in specs}
    group_frac: dict[str, int | None] = {}
    for axis, names in axes.items():
        for name in names:
            if name not in by_name:
                raise ValueError(f"axis {axis!r} references unknown group {name!r}")
            group_frac[name] = frac_by_axis.get(axis)

    quantized_families = {
        by_name[name].family
        for name, frac in group_frac.items()
        if frac is not None
    }
    formats: list[tuple[str, FixedFormat | None]] = []
    for spec in specs:
        if spec.kind is ParamKind.VARIABLE:
            if spec.name not in group_frac:
                raise ValueError(f"variable group {spec.name!r} is on no axis")
            formats.append((spec.name, spec.resolved(group_frac[spec.name])))
        else:
            active = spec.family in quantized_families
            formats.append((spec.name, spec.constant_fmt if active else None))
    return ResolvedQuant(tuple(formats), config.rounding, config.seed)


def specs_to_dict(specs: Sequence[ParamGroupSpec]) -> list[dict]:
    out = []
    for s in specs:
        out.append(
            {
                "name": s.name,
                "kind": s.kind.value,
                "family": s.family,
                "element_count": s.element_count,
                "observed_min": s.observed_min,
                "observed_max": s.observed_max,
                "int_bits": s.int_bits,
                "constant_fmt": None
                if s.constant_fmt is None
                else format_to_str(s.constant_fmt),
            }
        )
    return out


def specs_from_dict(items: Sequence[Mapping]) -> list[ParamGroupSpec]:
    specs = []
    for d in items:
        specs.append(
            ParamGroupSpec(
                name=d["name"],
                kind=ParamKind(d["kind"]),
                family=d["family"],
                element_count=int(d["element_count"]),
                observed_min=float(d["observed_min"]),
                observed_max=float(d["observed_max"]),
                int_bits=int(d["int_bits"]),
                constant_fmt=None
                if d["constant_fmt"] is None
                else parse_format(d["constant_fmt"]),
            )
        )
    return specs


def apply_ptq(model, config: QuantConfig, specs: Sequence[ParamGroupSpec]):
    """Quantize a trained full-precision model once, per the config.

    Returns a new model whose stored parameters are snapped to their
    formats and whose dynamic state is simulated in fixed point from now
    on.  The input model is not modified.
    """
    resolved = resolve_formats(specs, config, model.axes())
    return model.quantized_copy(resolved)


def train_itq(model, config: QuantConfig, specs: Sequence[ParamGroupSpec], dataset, **train_kw):
    """Train an untrained model with simulated quantization.

    Full-precision master parameters receive the learning updates while
    all dynamics read the quantized view; the returned model holds the
    final quantized snapshot.
    """
    resolved = resolve_formats(specs, config, model.axes())
    model.set_training_quantization(resolved)
    model.train(dataset, **train_kw)
    model.snapshot_quantized()
    return model
