"""Multi-layer supervised SNN with per-layer local learning.

Current-based LIF layers follow the five-equation update
``V[n] = w P[n] - rho R[n]``, ``S[n] = step(V[n] - v_th)``,
``P[n+1] = alpha P[n] + Q[n]``, ``Q[n+1] = beta Q[n] + S_in[n]``,
``R[n+1] = gamma R[n] + S[n]``, with decay factors compiled from time
constants as ``exp(-dt/tau)``.

Each layer owns a fixed random readout; training minimizes the per-layer
squared error between a leaky integration of the layer's spikes (through
the readout) and a one-hot target, with the spike nonlinearity replaced
by a fast-sigmoid surrogate derivative in the gradient.  No gradient
crosses layers or timesteps.  The per-sample loop runs in a numba kernel,
one call per layer; quantized runs keep full-precision weight masters
while dynamics read (and state stores) fixed-point values every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .datasets import EventDataset
from .fixed_point import FixedFormat, Rounding, fold_key, quantize_array, saturation_count
from .quantize import GroupDef, ParamKind, ResolvedQuant
from ._kernels import Q_ON, U64, fold1, pack_quant, q_scalar

__all__ = ["SsnnParams", "SsnnModel", "surrogate_grad", "layer_gradient", "step_layer"]

# observation / saturation row order shared with the kernel
_GROUP_ORDER = ("w", "P", "Q", "R", "V")


@dataclass(frozen=True)
class SsnnParams:
    """Desk-scale stack: dense spiking layers plus per-layer readouts."""

    layer_sizes: tuple[int, ...] = (1024, 128, 64)
    n_classes: int = 3
    tau_mem: float = 10.0
    tau_syn: float = 5.0
    tau_ref: float = 5.0
    tau_readout: float = 20.0
    dt: float = 1.0
    rho: float = 2.0
    v_th: float = 1.0
    lr: float = 2e-4
    surrogate_slope: float = 10.0
    w_init_scale: float = 0.2
    readout_scale: float = 0.3

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least one spiking layer")
        for tau in (self.tau_mem, self.tau_syn, self.tau_ref):
            if not 0 < math.exp(-self.dt / tau) < 1:
                raise ValueError("decay factors must lie in (0, 1)")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")

    @property
    def alpha(self) -> float:
        return math.exp(-self.dt / self.tau_mem)

    @property
    def beta(self) -> float:
        return math.exp(-self.dt / self.tau_syn)

    @property
    def gamma(self) -> float:
        return math.exp(-self.dt / self.tau_ref)

    @property
    def readout_decay(self) -> float:
        return math.exp(-self.dt / self.tau_readout)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1


def surrogate_grad(u: np.ndarray, slope: float) -> np.ndarray:
    """Fast-sigmoid surrogate for the step function's derivative."""
    return 1.0 / (1.0 + slope * np.abs(u)) ** 2


def layer_gradient(
    err_back: np.ndarray,
    v: np.ndarray,
    p: np.ndarray,
    v_th: float,
    slope: float,
) -> np.ndarray:
    """d(local loss)/dw for one layer at one timestep.

    ``err_back`` is the readout error pulled back to the layer's neurons
    (G^T (y - target)); ``p`` is the presynaptic trace that fed V.
    """
    return np.outer(err_back * surrogate_grad(v - v_th, slope), p)


def step_layer(
    w: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    s_in: np.ndarray,
    rho: float,
    v_th: float,
    alpha: float,
    beta: float,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One exact five-equation update; mutates p, q, r in place.

    Returns (V[n], S[n]).
    """
    v = w @ p - rho * r
    s = (v - v_th >= 0.0).astype(np.float64)
    p *= alpha
    p += q
    q *= beta
    q += s_in
    r *= gamma
    r += s
    return v, s


@njit(cache=True, nogil=True)
def _run_layer(
    w,
    w_eff,
    g_read,
    p_vec,
    q_vec,
    r_vec,
    u_vec,
    in_raster,
    out_raster,
    target,
    has_target,
    learn,
    observe,
    y_sum,
    alpha,
    beta,
    gamma,
    rho,
    v_th,
    lam,
    lr,
    slope,
    qw,
    qp,
    qq,
    qr,
    qv,
    key_w,
    key_p,
    key_q,
    key_r,
    key_v,
    obs,
    sat,
):
    n_steps, m = in_raster.shape
    n = w.shape[0]
    n_cls = g_read.shape[0]
    loss = 0.0
    v_arr = np.empty(n)
    s_arr = np.empty(n)
    e = np.zeros(n_cls)
    for t in range(n_steps):
        kw = fold1(key_w, t)
        kp = fold1(key_p, t)
        kq = fold1(key_q, t)
        kr = fold1(key_r, t)
        kv = fold1(key_v, t)

        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc += w_eff[i, j] * p_vec[j]
            vi = acc - rho * r_vec[i]
            if qv[Q_ON] != 0.0:
                vi = q_scalar(vi, qv, kv, i, sat, 4)
            v_arr[i] = vi
            s = 1.0 if vi - v_th >= 0.0 else 0.0
            s_arr[i] = s
            out_raster[t, i] = s
            u_vec[i] = lam * u_vec[i] + (1.0 - lam) * s
            if observe:
                if vi < obs[4, 0]:
                    obs[4, 0] = vi
                if vi > obs[4, 1]:
                    obs[4, 1] = vi

        for c in range(n_cls):
            acc = 0.0
            for i in range(n):
                acc += g_read[c, i] * u_vec[i]
            y_sum[c] += acc
            if has_target:
                e[c] = acc - target[c]
                loss += 0.5 * e[c] * e[c]

        if learn and has_target:
            for i in range(n):
                eb = 0.0
                for c in range(n_cls):
                    eb += g_read[c, i] * e[c]
                du = v_arr[i] - v_th
                sg = 1.0 / (1.0 + slope * abs(du)) ** 2
                coeff = lr * eb * sg
                if coeff != 0.0:
                    for j in range(m):
                        nw = w[i, j] - coeff * p_vec[j]
                        w[i, j] = nw
                        if qw[Q_ON] != 0.0:
                            w_eff[i, j] = q_scalar(nw, qw, kw, i * m + j, sat, 0)

        for j in range(m):
            np_ = alpha * p_vec[j] + q_vec[j]
            if qp[Q_ON] != 0.0:
                np_ = q_scalar(np_, qp, kp, j, sat, 1)
            p_vec[j] = np_
            nq = beta * q_vec[j] + in_raster[t, j]
            if qq[Q_ON] != 0.0:
                nq = q_scalar(nq, qq, kq, j, sat, 2)
            q_vec[j] = nq
            if observe:
                if np_ < obs[1, 0]:
                    obs[1, 0] = np_
                if np_ > obs[1, 1]:
                    obs[1, 1] = np_
                if nq < obs[2, 0]:
                    obs[2, 0] = nq
                if nq > obs[2, 1]:
                    obs[2, 1] = nq
        for i in range(n):
            nr = gamma * r_vec[i] + s_arr[i]
            if qr[Q_ON] != 0.0:
                nr = q_scalar(nr, qr, kr, i, sat, 3)
            r_vec[i] = nr
            if observe:
                if nr < obs[3, 0]:
                    obs[3, 0] = nr
                if nr > obs[3, 1]:
                    obs[3, 1] = nr
    return loss


_CONST_GROUPS = ("alpha", "beta", "gamma", "rho", "v_th")


class SsnnModel:
    """Trainable supervised network with optional fixed-point execution."""

    kind = "SSNN"

    def __init__(self, params: SsnnParams, seed: int = 0):
        self.params = params
        self.seed = seed
        sizes = params.layer_sizes
        self.w: list[np.ndarray] = []
        self.readouts: list[np.ndarray] = []
        for l in range(params.n_layers):
            rng = np.random.default_rng(np.random.SeedSequence((seed, 0x55E8, l)))
            fan_in = sizes[l]
            self.w.append(
                rng.uniform(-1.0, 1.0, size=(sizes[l + 1], fan_in))
                * (params.w_init_scale / math.sqrt(fan_in))
            )
            rng_g = np.random.default_rng(np.random.SeedSequence((seed, 0x2EAD, l)))
            self.readouts.append(
                rng_g.uniform(-1.0, 1.0, size=(params.n_classes, sizes[l + 1]))
                * params.readout_scale
            )
        self._w_eff = list(self.w)
        self.trained = False
        self.quant: ResolvedQuant | None = None
        self.loss_trace: list[float] = []
        self._obs = np.array([[np.inf, -np.inf]] * 5)
        self.saturation = {name: 0 for name in _GROUP_ORDER}
        self._stream = 0

    # --- quantization plumbing --------------------------------------------

    def group_defs(self) -> Sequence[GroupDef]:
        defs = [
            GroupDef("w", ParamKind.VARIABLE, "weight"),
            GroupDef("P", ParamKind.VARIABLE, "neuron"),
            GroupDef("Q", ParamKind.VARIABLE, "neuron"),
            GroupDef("R", ParamKind.VARIABLE, "neuron"),
            GroupDef("V", ParamKind.VARIABLE, "neuron"),
        ]
        defs += [GroupDef(name, ParamKind.CONSTANT, "neuron") for name in _CONST_GROUPS]
        return defs

    def axes(self) -> Mapping[str, tuple[str, ...]]:
        return {"w": ("w",), "neuron_vars": ("P", "Q", "R", "V")}

    def element_counts(self) -> dict[str, int]:
        sizes = self.params.layer_sizes
        n_layers = self.params.n_layers
        pre = sum(sizes[:-1])
        post = sum(sizes[1:])
        counts = {
            "w": sum(w.size for w in self.w),
            "P": pre,
            "Q": pre,
            "R": post,
            "V": post,
        }
        counts.update({name: n_layers for name in _CONST_GROUPS})
        return counts

    def constant_values(self) -> dict[str, float]:
        p = self.params
        return {
            "alpha": p.alpha,
            "beta": p.beta,
            "gamma": p.gamma,
            "rho": p.rho,
            "v_th": p.v_th,
        }

    def observed_ranges(self) -> dict[str, tuple[float, float]]:
        out = {}
        for row, name in enumerate(_GROUP_ORDER):
            lo, hi = self._obs[row]
            if np.isfinite(lo) and np.isfinite(hi):
                out[name] = (float(lo), float(hi))
        return out

    def _fmt(self, group: str) -> FixedFormat | None:
        if self.quant is None:
            return None
        return self.quant.by_group.get(group)

    def _effective_constants(self) -> dict[str, float]:
        vals = self.constant_values()
        if self.quant is None:
            return vals
        out = {}
        for name, value in vals.items():
            fmt = self._fmt(name)
            if fmt is None:
                out[name] = value
            else:
                out[name] = float(
                    quantize_array(
                        np.array(value), fmt, self.quant.rounding,
                        fold_key(self.quant.seed, name),
                    )
                )
        return out

    def _refresh_views(self) -> None:
        fmt = self._fmt("w")
        if fmt is None:
            # unquantized view aliases the masters (updates flow through)
            self._w_eff = list(self.w)
            return
        self._w_eff = [
            quantize_array(
                w, fmt, self.quant.rounding, fold_key(self.quant.seed, "w", l, "view")
            )
            for l, w in enumerate(self.w)
        ]

    def set_training_quantization(self, resolved: ResolvedQuant) -> None:
        if self.trained:
            raise ValueError("in-training quantization needs an untrained model")
        self.quant = resolved
        self._refresh_views()

    def snapshot_quantized(self) -> None:
        self.w = [w.copy() for w in self._w_eff]
        self._refresh_views()

    def quantized_copy(self, resolved: ResolvedQuant) -> "SsnnModel":
        other = self.__class__(self.params, self.seed)
        other.w = [w.copy() for w in self.w]
        other.readouts = [g.copy() for g in self.readouts]
        other.trained = self.trained
        other.loss_trace = list(self.loss_trace)
        other._obs = self._obs.copy()
        other.quant = resolved
        fmt = resolved.by_group.get("w")
        if fmt is not None:
            for l, w in enumerate(other.w):
                other.saturation["w"] += saturation_count(w, fmt)
            other.w = [
                quantize_array(w, fmt, resolved.rounding, fold_key(resolved.seed, "w", l, "ptq"))
                for l, w in enumerate(other.w)
            ]
        other._refresh_views()
        return other

    # --- simulation ---------------------------------------------------------

    def _fresh_state(self):
        sizes = self.params.layer_sizes
        return [
            {
                "P": np.zeros(sizes[l]),
                "Q": np.zeros(sizes[l]),
                "R": np.zeros(sizes[l + 1]),
                "u": np.zeros(sizes[l + 1]),
            }
            for l in range(self.params.n_layers)
        ]

    def _run_sample(
        self,
        dense: np.ndarray,
        target: np.ndarray | None,
        learn: bool,
        stream: int = 0,
        observe: bool = False,
    ) -> tuple[np.ndarray, float]:
        """Simulate one event sample; returns (summed final readout, mean loss).

        ``stream`` scopes the stochastic-rounding draws to this sample, so
        results do not depend on evaluation order.
        """
        p = self.params
        consts = self._effective_constants()
        rounding = self.quant.rounding if self.quant is not None else Rounding.NEAREST
        qseed = self.quant.seed if self.quant is not None else 0
        packs = {g: pack_quant(self._fmt(g), rounding) for g in _GROUP_ORDER}
        state = self._fresh_state()
        n_steps = dense.shape[0]
        has_target = target is not None
        target_arr = target if has_target else np.zeros(p.n_classes)
        sat = np.zeros(5, dtype=np.int64)
        s_in = np.ascontiguousarray(dense, dtype=np.float64)
        y_sum = np.zeros(p.n_classes)
        loss = 0.0
        for l in range(p.n_layers):
            st = state[l]
            out_raster = np.empty((n_steps, p.layer_sizes[l + 1]))
            y_sum = np.zeros(p.n_classes)
            keys = {
                g: U64(fold_key(qseed, g, l, stream)) for g in _GROUP_ORDER
            }
            layer_loss = _run_layer(
                self.w[l], self._w_eff[l], self.readouts[l],
                st["P"], st["Q"], st["R"], st["u"],
                s_in, out_raster, target_arr, has_target, learn, observe,
                y_sum,
                consts["alpha"], consts["beta"], consts["gamma"],
                consts["rho"], consts["v_th"],
                p.readout_decay, p.lr, p.surrogate_slope,
                packs["w"], packs["P"], packs["Q"], packs["R"], packs["V"],
                keys["w"], keys["P"], keys["Q"], keys["R"], keys["V"],
                self._obs, sat,
            )
            s_in = out_raster
            if l == p.n_layers - 1:
                loss = layer_loss / max(n_steps, 1)
        for row, name in enumerate(_GROUP_ORDER):
            self.saturation[name] += int(sat[row])
        if observe:
            for w in self.w:
                self._obs[0, 0] = min(self._obs[0, 0], float(w.min()))
                self._obs[0, 1] = max(self._obs[0, 1], float(w.max()))
        return y_sum, loss

    def _one_hot(self, label: int) -> np.ndarray:
        t = np.zeros(self.params.n_classes)
        t[label] = 1.0
        return t

    def train(self, dataset: EventDataset, epochs: int = 1) -> None:
        if len(dataset) == 0:
            raise ValueError("cannot train on an empty dataset")
        for epoch in range(epochs):
            epoch_loss = 0.0
            for i in range(len(dataset)):
                dense = dataset.to_dense(i)
                target = self._one_hot(int(dataset.labels[i]))
                _, loss = self._run_sample(
                    dense, target, learn=True, stream=self._stream,
                    observe=epoch == epochs - 1,
                )
                self._stream += 1
                epoch_loss += loss
            self.loss_trace.append(epoch_loss / len(dataset))
        self.trained = True

    def initial_loss(self, dataset: EventDataset) -> float:
        total = 0.0
        for i in range(len(dataset)):
            _, loss = self._run_sample(
                dataset.to_dense(i), self._one_hot(int(dataset.labels[i])),
                learn=False, stream=i,
            )
            total += loss
        return total / max(len(dataset), 1)

    def infer(self, dense: np.ndarray, stream: int = 0) -> int:
        y_sum, _ = self._run_sample(dense, None, learn=False, stream=stream)
        return int(np.argmax(y_sum))

    def evaluate(self, dataset: EventDataset) -> float:
        if len(dataset) == 0:
            return 0.0
        correct = sum(
            self.infer(dataset.to_dense(i), stream=i) == int(dataset.labels[i])
            for i in range(len(dataset))
        )
        return correct / len(dataset)

    # --- serialization ------------------------------------------------------

    def hyperparams(self) -> dict:
        return asdict(self.params)

    def dims(self) -> tuple[int, ...]:
        return tuple(self.params.layer_sizes)

    def to_container(self):
        from .fixed_point import quantize_codes
        from .model_io import ModelContainer

        tags = {g.name: "FP32" for g in self.group_defs()}
        if self.quant is not None:
            tags.update(self.quant.tags())
        arrays: dict[str, np.ndarray] = {}
        wfmt = self._fmt("w")
        for l, w in enumerate(self.w):
            arrays[f"w{l}"] = (
                quantize_codes(w, wfmt, Rounding.TRUNCATE)
                if wfmt is not None
                else w.astype(np.float32)
            )
        for l, g in enumerate(self.readouts):
            arrays[f"readout{l}"] = g.astype(np.float32)
        meta = {
            "kind": self.kind,
            "hyperparams": self.hyperparams(),
            "seed": self.seed,
            "trained": self.trained,
            "stream": self._stream,
            "loss_trace": list(self.loss_trace),
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
    def from_container(cls, container) -> "SsnnModel":
        from .fixed_point import parse_format

        if container.kind != cls.kind:
            raise ValueError(f"container holds a {container.kind}, not a {cls.kind}")
        meta = container.meta
        hp = dict(meta["hyperparams"])
        hp["layer_sizes"] = tuple(hp["layer_sizes"])
        params = SsnnParams(**hp)
        model = cls(params, seed=meta["seed"])
        qmeta = meta.get("quant")
        if qmeta is not None:
            model.quant = ResolvedQuant.from_tags(
                container.group_tags, Rounding.from_name(qmeta["rounding"]), qmeta["seed"]
            )
        wfmt = parse_format(container.group_tags["w"])
        model.w = []
        for l in range(params.n_layers):
            w = np.asarray(container.arrays[f"w{l}"], dtype=np.float64)
            model.w.append(w * wfmt.epsilon if wfmt is not None else w)
        model.readouts = [
            np.asarray(container.arrays[f"readout{l}"], dtype=np.float64)
            for l in range(params.n_layers)
        ]
        model.trained = bool(meta.get("trained", False))
        model._stream = int(meta.get("stream", 0))
        model.loss_trace = list(meta.get("loss_trace", []))
        obs = meta.get("observed", {})
        for row, name in enumerate(_GROUP_ORDER):
            if name in obs:
                model._obs[row, 0] = obs[name][0]
                model._obs[row, 1] = obs[name][1]
        model.saturation.update(meta.get("saturation", {}))
        model._refresh_views()
        return model
