"""Single-layer unsupervised SNN: conductance-based LIF neurons with
adaptive thresholds, hard winner-take-all lateral inhibition, rate-coded
inputs, and pair-wise weight-dependent STDP.

The weight update is
``dw = -eta_pre * x_post * w**mu``            on a presynaptic spike,
``dw = +eta_post * x_pre * (w_max - w)**mu``  on a postsynaptic spike,
with traces jumping to 1 on their own spike and decaying exponentially,
and weights clamped to [0, w_max] after every update.

The per-timestep simulation lives in one numba kernel shared by training
and inference; quantized runs keep full-precision masters for learned
parameters while all dynamics read (and state variables store) values
snapped to their fixed-point formats every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np
from numba import njit

from .datasets import ImageDataset
from .fixed_point import FixedFormat, Rounding, fold_key, quantize_array
from .quantize import GroupDef, ParamKind, ResolvedQuant

__all__ = ["UsnnParams", "UsnnModel", "encode_rate", "encode_image", "apply_stdp"]

UNASSIGNED = -1

_U64 = np.uint64

# packed per-group quantization descriptor indices (see _kernels.pack_quant)
from ._kernels import (  # noqa: E402
    Q_ON as _Q_ON,
    fold1 as _fold1,
    pack_quant as _pack_quant,
    q_scalar as _q_scalar,
)


@dataclass(frozen=True)
class UsnnParams:
    """Hyperparameters; defaults follow the reference network constants."""

    n_inputs: int = 784
    n_neurons: int = 100
    w_max: float = 0.7
    w_init_max: float = 0.3
    w_init_sparsity: float = 0.0  # fraction of synapses starting at zero
    eta_pre: float = 1e-4
    eta_post: float = 1e-2
    stdp_mu: float = 1.0
    v_rest: float = -65.0
    v_reset: float = -65.0
    v_thresh_base: float = -52.0
    theta_step: float = 0.05
    theta_decay_tau: float = 0.0  # ms; 0 disables decay
    e_exc: float = 0.0
    tau_mem: float = 100.0
    tau_syn: float = 5.0
    tau_trace: float = 20.0
    dt: float = 1.0
    presentation_ms: float = 350.0
    rest_ms: float = 150.0
    max_rate_hz: float = 63.75
    inhibit_ms: float = 5.0
    # per-neuron L1 weight normalization applied after each presentation;
    # 0 disables it (it is the standard stabilizer for this architecture,
    # not part of the learning rule itself)
    norm_target: float = 0.0

    def __post_init__(self) -> None:
        if self.w_max <= 0:
            raise ValueError("w_max must be positive")
        if min(self.tau_mem, self.tau_syn, self.tau_trace, self.dt) <= 0:
            raise ValueError("time constants and dt must be positive")
        if self.eta_pre < 0 or self.eta_post < 0:
            raise ValueError("learning rates must be non-negative")

    @property
    def presentation_steps(self) -> int:
        return int(round(self.presentation_ms / self.dt))

    @property
    def rest_steps(self) -> int:
        return int(round(self.rest_ms / self.dt))


def desk_digit_profile(**overrides) -> UsnnParams:
    """Hyperparameters tuned for the desk-scale digit benchmark runs."""
    base = dict(
        n_inputs=784,
        n_neurons=100,
        eta_post=0.02,
        tau_trace=80.0,
        theta_decay_tau=100000.0,
        w_init_sparsity=0.75,
        norm_target=40.0,
    )
    base.update(overrides)
    return UsnnParams(**base)


def encode_rate(
    pixel: int, max_rate_hz: float, dt_ms: float, n_steps: int, rng: np.random.Generator
) -> np.ndarray:
    """Rate-coded spike train for one pixel: per-bin Bernoulli thinning of a
    Poisson process at (pixel/255) * max_rate."""
    if not 0 <= pixel <= 255:
        raise ValueError(f"pixel {pixel} outside 0-255")
    p = (pixel / 255.0) * max_rate_hz * dt_ms / 1000.0
    return rng.random(n_steps) < p


def encode_image(
    image: np.ndarray,
    max_rate_hz: float,
    dt_ms: float,
    n_steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """(n_steps, n_pixels) boolean spike raster for a whole image."""
    rates = image.reshape(-1).astype(np.float64) / 255.0
    p = rates * (max_rate_hz * dt_ms / 1000.0)
    return rng.random((n_steps, p.size)) < p


def apply_stdp(
    w: np.ndarray,
    x_pre: np.ndarray,
    x_post: np.ndarray,
    pre_spikes: np.ndarray,
    post_spikes: np.ndarray,
    params: UsnnParams,
) -> np.ndarray:
    """Pair-wise weight-dependent STDP on a weight matrix, in place.

    ``pre_spikes``/``post_spikes`` are boolean vectors for this timestep;
    returns the applied deltas (post-clamp).
    """
    before = w.copy()
    pre_idx = np.flatnonzero(pre_spikes)
    if pre_idx.size:
        cols = w[:, pre_idx]
        cols -= params.eta_pre * x_post[:, None] * cols**params.stdp_mu
        w[:, pre_idx] = np.clip(cols, 0.0, params.w_max)
    post_idx = np.flatnonzero(post_spikes)
    if post_idx.size:
        rows = w[post_idx, :]
        rows += params.eta_post * x_pre[None, :] * (params.w_max - rows) ** params.stdp_mu
        w[post_idx, :] = np.clip(rows, 0.0, params.w_max)
    return w - before


@njit(cache=True, nogil=True)
def _run_usnn(
    w,
    w_eff,
    v,
    theta,
    g,
    x_pre,
    x_post,
    inhib,
    in_spikes,
    winners,
    obs,
    sat,
    learn,
    mem_rate,
    syn_decay,
    trace_decay,
    theta_decay,
    v_rest,
    e_exc,
    v_reset,
    v_thresh_base,
    theta_step,
    inhib_steps,
    eta_pre,
    eta_post,
    stdp_mu,
    w_max,
    qw,
    qv,
    qt,
    key_w,
    key_v,
    key_t,
):
    n_steps = in_spikes.shape[0]
    n_in = in_spikes.shape[1]
    n = v.shape[0]
    for t in range(n_steps):
        kw = _fold1(key_w, t)
        kv = _fold1(key_v, t)
        kt = _fold1(key_t, t)

        # decay traces, conductance, optional threshold adaptation decay
        for j in range(n_in):
            x_pre[j] *= trace_decay
        for i in range(n):
            x_post[i] *= trace_decay
            g[i] *= syn_decay
            if learn and theta_decay < 1.0:
                theta[i] *= theta_decay

        # presynaptic spikes: drive conductance, depress weights
        for j in range(n_in):
            if in_spikes[t, j]:
                for i in range(n):
                    wij = w_eff[i, j]
                    g[i] += wij
                    if learn and x_post[i] > 0.0 and eta_pre > 0.0:
                        if stdp_mu == 1.0:
                            dw = -eta_pre * x_post[i] * wij
                        else:
                            dw = -eta_pre * x_post[i] * wij**stdp_mu
                        nw = w[i, j] + dw
                        if nw < 0.0:
                            nw = 0.0
                        elif nw > w_max:
                            nw = w_max
                        w[i, j] = nw
                        if nw < obs[0]:
                            obs[0] = nw
                        if nw > obs[1]:
                            obs[1] = nw
                        if qw[_Q_ON] != 0.0:
                            w_eff[i, j] = _q_scalar(nw, qw, kw, i * n_in + j, sat, 0)
                        else:
                            w_eff[i, j] = nw
                x_pre[j] = 1.0

        # membrane integration (inhibited neurons stay clamped at rest)
        for i in range(n):
            if inhib[i] > 0:
                inhib[i] -= 1
                nv = v_rest
            else:
                nv = v[i] + mem_rate * ((v_rest - v[i]) + g[i] * (e_exc - v[i]))
            if qv[_Q_ON] != 0.0:
                nv = _q_scalar(nv, qv, kv, i, sat, 1)
            v[i] = nv
            if nv < obs[2]:
                obs[2] = nv
            if nv > obs[3]:
                obs[3] = nv

        # threshold check and winner-take-all (highest V, then lowest index)
        best = -1
        best_v = -1.0e300
        for i in range(n):
            vth = v_thresh_base + theta[i]
            if qt[_Q_ON] != 0.0:
                vth = _q_scalar(vth, qt, kt, i, sat, 2)
            if vth < obs[4]:
                obs[4] = vth
            if vth > obs[5]:
                obs[5] = vth
            if v[i] >= vth and v[i] > best_v:
                best_v = v[i]
                best = i
        winners[t] = best
        if best >= 0:
            if learn:
                theta[best] += theta_step
            nv = v_reset
            if qv[_Q_ON] != 0.0:
                nv = _q_scalar(nv, qv, kv, best, sat, 1)
            v[best] = nv
            for i in range(n):
                if i != best:
                    inhib[i] = inhib_steps
                    nv = v_rest
                    if qv[_Q_ON] != 0.0:
                        nv = _q_scalar(nv, qv, kv, i, sat, 1)
                    v[i] = nv
            if learn and eta_post > 0.0:
                for j in range(n_in):
                    if x_pre[j] > 0.0:
                        weff = w_eff[best, j]
                        if stdp_mu == 1.0:
                            dw = eta_post * x_pre[j] * (w_max - weff)
                        else:
                            dw = eta_post * x_pre[j] * (w_max - weff) ** stdp_mu
                        nw = w[best, j] + dw
                        if nw < 0.0:
                            nw = 0.0
                        elif nw > w_max:
                            nw = w_max
                        w[best, j] = nw
                        if nw < obs[0]:
                            obs[0] = nw
                        if nw > obs[1]:
                            obs[1] = nw
                        if qw[_Q_ON] != 0.0:
                            w_eff[best, j] = _q_scalar(nw, qw, kw, best * n_in + j, sat, 0)
                        else:
                            w_eff[best, j] = nw
            x_post[best] = 1.0


# --- model -------------------------------------------------------------------

_GROUP_DEFS = (
    GroupDef("w", ParamKind.VARIABLE, "weight"),
    GroupDef("V", ParamKind.VARIABLE, "neuron"),
    GroupDef("V_th", ParamKind.VARIABLE, "neuron"),
    GroupDef("theta", ParamKind.CONSTANT, "neuron"),
    GroupDef("V_reset", ParamKind.CONSTANT, "neuron"),
)

_AXES = {"w": ("w",), "V": ("V",), "V_th": ("V_th",)}


class UsnnModel:
    """Trainable unsupervised network with optional fixed-point execution."""

    kind = "USNN"

    def __init__(self, params: UsnnParams, seed: int = 0):
        self.params = params
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x11717)))
        n, m = params.n_neurons, params.n_inputs
        self.w = rng.uniform(0.0, params.w_init_max, size=(n, m))
        if params.w_init_sparsity > 0:
            self.w *= rng.random((n, m)) >= params.w_init_sparsity
        self.theta = np.zeros(n)
        self.v = np.full(n, params.v_rest)
        self.g = np.zeros(n)
        self.x_pre = np.zeros(m)
        self.x_post = np.zeros(n)
        self.inhib = np.zeros(n, dtype=np.int64)
        self._w_eff = self.w
        self._obs = np.array([np.inf, -np.inf] * 3)
        self.saturation = {"w": 0, "V": 0, "V_th": 0}
        self.trained = False
        self.label_map: np.ndarray | None = None
        self.fallback_class: int = 0
        self.quant: ResolvedQuant | None = None  # active during execution
        self._itq = False  # quantized views during training
        self._sample_counter = 0

    # --- quantization plumbing ------------------------------------------

    def group_defs(self):
        return _GROUP_DEFS

    def axes(self) -> Mapping[str, tuple[str, ...]]:
        return dict(_AXES)

    def element_counts(self) -> dict[str, int]:
        n, m = self.params.n_neurons, self.params.n_inputs
        return {"w": n * m, "V": n, "V_th": n, "theta": n, "V_reset": n}

    def constant_values(self) -> dict[str, float]:
        return {"theta": self.params.theta_step, "V_reset": self.params.v_reset}

    def observed_ranges(self) -> dict[str, tuple[float, float]]:
        if not np.isfinite(self._obs).all():
            return {}
        o = self._obs
        return {"w": (o[0], o[1]), "V": (o[2], o[3]), "V_th": (o[4], o[5])}

    def seed_observed(self) -> None:
        """Fold the initial parameter values into the observed ranges."""
        o = self._obs
        o[0] = min(o[0], self.w.min())
        o[1] = max(o[1], self.w.max())
        o[2] = min(o[2], self.v.min())
        o[3] = max(o[3], self.v.max())
        vth = self.params.v_thresh_base + self.theta
        o[4] = min(o[4], vth.min())
        o[5] = max(o[5], vth.max())

    def _fmt(self, group: str) -> FixedFormat | None:
        if self.quant is None:
            return None
        return self.quant.by_group.get(group)

    def _effective_constants(self) -> tuple[float, float]:
        """theta_step and v_reset as stored in their constant formats."""
        theta_step = self.params.theta_step
        v_reset = self.params.v_reset
        if self.quant is not None:
            fmt = self.quant.by_group.get("theta")
            if fmt is not None:
                theta_step = float(
                    quantize_array(np.array(theta_step), fmt, self.quant.rounding,
                                   fold_key(self.quant.seed, "theta"))
                )
            fmt = self.quant.by_group.get("V_reset")
            if fmt is not None:
                v_reset = float(
                    quantize_array(np.array(v_reset), fmt, self.quant.rounding,
                                   fold_key(self.quant.seed, "V_reset"))
                )
        return theta_step, v_reset

    def set_training_quantization(self, resolved: ResolvedQuant) -> None:
        if self.trained:
            raise ValueError("in-training quantization needs an untrained model")
        self.quant = resolved
        self._itq = True
        self._refresh_views()

    def snapshot_quantized(self) -> None:
        """Replace masters with the final quantized view after ITQ."""
        self.w = self._w_eff.copy()
        fmt = self._fmt("V_th")
        if fmt is not None and self.quant is not None:
            base = self.params.v_thresh_base
            vth = quantize_array(
                base + self.theta, fmt, self.quant.rounding,
                fold_key(self.quant.seed, "V_th", "snapshot"),
            )
            self.theta = vth - base
        self._itq = False

    def quantized_copy(self, resolved: ResolvedQuant) -> "UsnnModel":
        """Post-training quantization: snap stored parameters once."""
        other = self.__class__(self.params, self.seed)
        other.w = self.w.copy()
        other.theta = self.theta.copy()
        other._obs = self._obs.copy()
        other.trained = self.trained
        other.label_map = None if self.label_map is None else self.label_map.copy()
        other.fallback_class = self.fallback_class
        other.quant = resolved
        fmt = resolved.by_group.get("w")
        if fmt is not None:
            other.w = quantize_array(
                other.w, fmt, resolved.rounding, fold_key(resolved.seed, "w", "ptq")
            )
        fmt = resolved.by_group.get("V_th")
        if fmt is not None:
            base = self.params.v_thresh_base
            vth = quantize_array(
                base + other.theta, fmt, resolved.rounding,
                fold_key(resolved.seed, "V_th", "ptq"),
            )
            other.theta = vth - base
        other._refresh_views()
        return other

    def _refresh_views(self) -> None:
        fmt = self._fmt("w")
        if fmt is not None and self.quant is not None:
            self._w_eff = quantize_array(
                self.w, fmt, self.quant.rounding, fold_key(self.quant.seed, "w", "view")
            )
        else:
            # unquantized view aliases the master (kernel writes both cells
            # identically, so sharing storage is safe)
            self._w_eff = self.w

    # --- simulation -------------------------------------------------------

    def _reset_transient(self) -> None:
        p = self.params
        self.v.fill(p.v_rest)
        self.g.fill(0.0)
        self.x_pre.fill(0.0)
        self.x_post.fill(0.0)
        self.inhib.fill(0)

    def _kernel_args(self, learn: bool, stream: int):
        p = self.params
        rounding = self.quant.rounding if self.quant is not None else Rounding.NEAREST
        qw = _pack_quant(self._fmt("w"), rounding)
        qv = _pack_quant(self._fmt("V"), rounding)
        qt = _pack_quant(self._fmt("V_th"), rounding)
        qseed = self.quant.seed if self.quant is not None else 0
        theta_step, v_reset = self._effective_constants()
        theta_decay = (
            math.exp(-p.dt / p.theta_decay_tau) if p.theta_decay_tau > 0 else 1.0
        )
        return dict(
            learn=learn,
            mem_rate=p.dt / p.tau_mem,
            syn_decay=math.exp(-p.dt / p.tau_syn),
            trace_decay=math.exp(-p.dt / p.tau_trace),
            theta_decay=theta_decay,
            v_rest=p.v_rest,
            e_exc=p.e_exc,
            v_reset=v_reset,
            v_thresh_base=p.v_thresh_base,
            theta_step=theta_step,
            inhib_steps=int(round(p.inhibit_ms / p.dt)),
            eta_pre=p.eta_pre,
            eta_post=p.eta_post,
            stdp_mu=p.stdp_mu,
            w_max=p.w_max,
            qw=qw,
            qv=qv,
            qt=qt,
            key_w=_U64(fold_key(qseed, "w", stream)),
            key_v=_U64(fold_key(qseed, "V", stream)),
            key_t=_U64(fold_key(qseed, "V_th", stream)),
        )

    def run_steps(self, in_spikes: np.ndarray, learn: bool, stream: int = 0) -> np.ndarray:
        """Simulate one spike raster; returns the per-step winner indices."""
        in_spikes = np.ascontiguousarray(in_spikes, dtype=np.uint8)
        winners = np.full(in_spikes.shape[0], -1, dtype=np.int32)
        sat = np.zeros(3, dtype=np.int64)
        args = self._kernel_args(learn, stream)
        _run_usnn(
            self.w, self._w_eff, self.v, self.theta, self.g,
            self.x_pre, self.x_post, self.inhib,
            in_spikes, winners, self._obs, sat, **args,
        )
        self.saturation["w"] += int(sat[0])
        self.saturation["V"] += int(sat[1])
        self.saturation["V_th"] += int(sat[2])
        return winners

    def step(self, input_spikes: np.ndarray, learn: bool = True) -> np.ndarray:
        """Advance the network one timestep; returns emitted spike vector.

        With ``learn`` the step includes threshold adaptation and STDP;
        inference passes ``learn=False`` and leaves the model untouched.
        """
        winners = self.run_steps(input_spikes[None, :], learn=learn,
                                 stream=self._sample_counter)
        out = np.zeros(self.params.n_neurons, dtype=bool)
        if winners[0] >= 0:
            out[winners[0]] = True
        return out

    def _encode(self, image: np.ndarray, tag: int, index: int, steps: int) -> np.ndarray:
        p = self.params
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, tag, index)))
        return encode_image(image, p.max_rate_hz, p.dt, steps, rng)

    def train(self, dataset: ImageDataset, epochs: int = 1) -> None:
        """Present every sample with STDP active, rest periods between."""
        if len(dataset) == 0:
            raise ValueError("cannot train on an empty dataset")
        p = self.params
        self.seed_observed()
        rest = np.zeros((p.rest_steps, p.n_inputs), dtype=np.uint8)
        for epoch in range(epochs):
            for i in range(len(dataset)):
                raster = self._encode(
                    dataset.images[i], 0xE2C0DE, self._sample_counter, p.presentation_steps
                )
                full = np.concatenate([raster.astype(np.uint8), rest], axis=0)
                self.run_steps(full, learn=True, stream=self._sample_counter)
                self._sample_counter += 1
                if p.norm_target > 0:
                    self._normalize_weights()
        self.trained = True

    def _normalize_weights(self) -> None:
        """Rescale each neuron's input weights to a fixed L1 budget."""
        sums = self.w.sum(axis=1)
        sums[sums == 0] = 1.0
        self.w *= (self.params.norm_target / sums)[:, None]
        np.clip(self.w, 0.0, self.params.w_max, out=self.w)
        o = self._obs
        o[0] = min(o[0], self.w.min())
        o[1] = max(o[1], self.w.max())
        self._refresh_views()

    def _response_counts(self, dataset: ImageDataset, tag: int) -> np.ndarray:
        """(n_samples, n_neurons) spike counts with frozen weights."""
        p = self.params
        counts = np.zeros((len(dataset), p.n_neurons), dtype=np.int64)
        for i in range(len(dataset)):
            self._reset_transient()
            raster = self._encode(dataset.images[i], tag, i, p.presentation_steps)
            winners = self.run_steps(raster, learn=False, stream=i)
            fired = winners[winners >= 0]
            np.add.at(counts[i], fired, 1)
        return counts

    def assign_labels(self, dataset: ImageDataset) -> np.ndarray:
        """Map each neuron to the class with its highest mean response."""
        if not self.trained:
            raise ValueError("assign_labels needs a trained model")
        counts = self._response_counts(dataset, 0xA551CB)
        n_classes = int(dataset.labels.max()) + 1
        class_totals = np.zeros((self.params.n_neurons, n_classes))
        class_sizes = np.bincount(dataset.labels, minlength=n_classes)
        for c in range(n_classes):
            mask = dataset.labels == c
            if mask.any():
                class_totals[:, c] = counts[mask].sum(axis=0) / mask.sum()
        labels = np.argmax(class_totals, axis=1).astype(np.int64)
        labels[counts.sum(axis=0) == 0] = UNASSIGNED
        self.label_map = labels
        self.fallback_class = int(np.argmax(class_sizes))
        return labels

    def classify_counts(self, neuron_counts: np.ndarray) -> int:
        """Predict a class from one sample's per-neuron spike counts."""
        if self.label_map is None:
            raise ValueError("no label map; run assign_labels first")
        if neuron_counts.sum() == 0:
            return self.fallback_class
        n_classes = int(self.label_map.max()) + 1 if self.label_map.max() >= 0 else 1
        scores = np.full(n_classes, -np.inf)
        for c in range(n_classes):
            members = self.label_map == c
            if members.any():
                scores[c] = neuron_counts[members].mean()
        return int(np.argmax(scores))

    def infer(self, image: np.ndarray, index: int = 0) -> int:
        self._reset_transient()
        raster = self._encode(image, 0x1F3E12, index, self.params.presentation_steps)
        winners = self.run_steps(raster, learn=False, stream=index)
        counts = np.zeros(self.params.n_neurons, dtype=np.int64)
        fired = winners[winners >= 0]
        np.add.at(counts, fired, 1)
        return self.classify_counts(counts)

    def evaluate(self, dataset: ImageDataset) -> float:
        counts = self._response_counts(dataset, 0x1F3E12)
        correct = sum(
            self.classify_counts(counts[i]) == dataset.labels[i]
            for i in range(len(dataset))
        )
        return correct / len(dataset) if len(dataset) else 0.0

    # --- serialization ------------------------------------------------------

    def hyperparams(self) -> dict:
        return asdict(self.params)

    def dims(self) -> tuple[int, ...]:
        return (self.params.n_inputs, self.params.n_neurons)

    def to_container(self):
        from .fixed_point import quantize_codes
        from .model_io import ModelContainer

        tags = {g.name: "FP32" for g in _GROUP_DEFS}
        if self.quant is not None:
            tags.update(self.quant.tags())
        arrays: dict[str, np.ndarray] = {}
        wfmt = self._fmt("w")
        arrays["w"] = (
            quantize_codes(self.w, wfmt, Rounding.TRUNCATE)
            if wfmt is not None
            else self.w.astype(np.float32)
        )
        vth = self.params.v_thresh_base + self.theta
        tfmt = self._fmt("V_th")
        arrays["v_th"] = (
            quantize_codes(vth, tfmt, Rounding.TRUNCATE)
            if tfmt is not None
            else vth.astype(np.float32)
        )
        if self.label_map is not None:
            arrays["labels"] = self.label_map.astype(np.int64)
        meta = {
            "kind": self.kind,
            "hyperparams": self.hyperparams(),
            "seed": self.seed,
            "trained": self.trained,
            "fallback_class": self.fallback_class,
            "sample_counter": self._sample_counter,
            "observed": {k: list(v) for k, v in self.observed_ranges().items()},
            "saturation": dict(self.saturation),
            "quant": None
            if self.quant is None
            else {"rounding": self.quant.rounding.value, "seed": self.quant.seed},
        }
        return ModelContainer(
            kind=self.kind, dims=self.dims(), group_tags=tags,
            arrays=arrays, meta=meta,
        )

    @classmethod
    def from_container(cls, container) -> "UsnnModel":
        from .fixed_point import parse_format

        if container.kind != cls.kind:
            raise ValueError(f"container holds a {container.kind}, not a {cls.kind}")
        meta = container.meta
        params = UsnnParams(**meta["hyperparams"])
        model = cls(params, seed=meta["seed"])
        qmeta = meta.get("quant")
        if qmeta is not None:
            model.quant = ResolvedQuant.from_tags(
                container.group_tags, Rounding.from_name(qmeta["rounding"]), qmeta["seed"]
            )
        wfmt = parse_format(container.group_tags["w"])
        w = np.asarray(container.arrays["w"], dtype=np.float64)
        model.w = w * wfmt.epsilon if wfmt is not None else w
        tfmt = parse_format(container.group_tags["V_th"])
        vth = np.asarray(container.arrays["v_th"], dtype=np.float64)
        if tfmt is not None:
            vth = vth * tfmt.epsilon
        model.theta = vth - params.v_thresh_base
        if "labels" in container.arrays:
            model.label_map = np.asarray(container.arrays["labels"], dtype=np.int64)
        model.fallback_class = int(meta.get("fallback_class", 0))
        model.trained = bool(meta.get("trained", False))
        model._sample_counter = int(meta.get("sample_counter", 0))
        obs = meta.get("observed", {})
        for row, name in enumerate(("w", "V", "V_th")):
            if name in obs:
                model._obs[2 * row] = obs[name][0]
                model._obs[2 * row + 1] = obs[name][1]
        model.saturation.update(meta.get("saturation", {}))
        model._refresh_views()
        return model
