"""Architecture description, weight initialisation and the multi-layer forward pass.

Layers are indexed ``0..L``: layer 0 is the input, layer ``L`` the output.
Hidden layers ``1..L-1`` may carry diagonal self-recurrent weights and any
pair of non-adjacent layers may be joined by a skip edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dynamics import LayerTrace, LifParams, ResetMode, StructuralError, psc_filter, step_layer


class InputMode(str, Enum):
    ANALOG = "analog-current"
    SPIKE = "spike"


@dataclass
class LifConfig:
    tau_m: float = 16.0
    tau_s: float = 8.0
    v_th: float = 1.0
    reset_mode: ResetMode = ResetMode.TO_ZERO

    def __post_init__(self):
        self.reset_mode = ResetMode(self.reset_mode)

    @property
    def theta_init(self) -> float:
        return 1.0 - 1.0 / self.tau_m


@dataclass
class NetworkSpec:
    layer_sizes: list[int]
    self_recurrent: list[bool] | None = None
    skip_edges: list[tuple[int, int]] = field(default_factory=list)
    lif: LifConfig = field(default_factory=LifConfig)
    input_mode: InputMode = InputMode.SPIKE

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if self.self_recurrent is None:
            self.self_recurrent = [False] * max(len(self.layer_sizes) - 2, 0)
        self.self_recurrent = [bool(x) for x in self.self_recurrent]
        self.skip_edges = [(int(a), int(b)) for a, b in self.skip_edges]
        self.input_mode = InputMode(self.input_mode)

    @property
    def n_layers(self) -> int:
        """Number of non-input layers."""
        return len(self.layer_sizes) - 1

    @property
    def output_layer(self) -> int:
        return len(self.layer_sizes) - 1

    def is_recurrent(self, layer: int) -> bool:
        return 1 <= layer < self.output_layer and self.self_recurrent[layer - 1]

    def skips_into(self, layer: int) -> list[tuple[int, int]]:
        return [e for e in self.skip_edges if e[1] == layer]

    def skips_from(self, layer: int) -> list[tuple[int, int]]:
        return [e for e in self.skip_edges if e[0] == layer]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "self_recurrent": list(self.self_recurrent),
            "skip_edges": [list(e) for e in self.skip_edges],
            "lif": {"tau_m": self.lif.tau_m, "tau_s": self.lif.tau_s,
                    "v_th": self.lif.v_th, "reset_mode": self.lif.reset_mode.value},
            "input_mode": self.input_mode.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(layer_sizes=d["layer_sizes"], self_recurrent=d["self_recurrent"],
                   skip_edges=[tuple(e) for e in d["skip_edges"]],
                   lif=LifConfig(**d["lif"]), input_mode=d["input_mode"])


def validate(spec: NetworkSpec) -> list[str]:
    """Return every violated architecture invariant; an empty list means valid."""
    errors = []
    sizes = spec.layer_sizes
    if len(sizes) < 2:
        errors.append("need at least an input and an output layer")
    for i, n in enumerate(sizes):
        if n < 1:
            errors.append(f"layer {i} has size {n}; sizes must be >= 1")
    n_hidden = max(len(sizes) - 2, 0)
    if len(spec.self_recurrent) == len(sizes) - 1 and len(sizes) >= 2:
        if spec.self_recurrent[-1]:
            errors.append("output layer cannot be self-recurrent")
    elif len(spec.self_recurrent) != n_hidden:
        errors.append(f"self_recurrent has {len(spec.self_recurrent)} flags "
                      f"for {n_hidden} hidden layers")
    out = len(sizes) - 1
    seen = set()
    for src, tgt in spec.skip_edges:
        if (src, tgt) in seen:
            errors.append(f"duplicate skip edge ({src},{tgt})")
        seen.add((src, tgt))
        if src == out:
            errors.append(f"skip edge ({src},{tgt}): output layer cannot be a skip source")
        if src < 0 or tgt > out:
            errors.append(f"skip edge ({src},{tgt}) references a missing layer")
        if tgt < src + 2:
            errors.append(f"skip edge ({src},{tgt}): skip must bypass >=1 layer")
    lif = spec.lif
    if lif.tau_m <= 1:
        errors.append(f"tau_m must be > 1 so that theta lies in (0,1), got {lif.tau_m}")
    if lif.tau_s < 1:
        errors.append(f"tau_s must be >= 1, got {lif.tau_s}")
    if lif.v_th <= 0:
        errors.append(f"v_th must be > 0, got {lif.v_th}")
    return errors


@dataclass
class WeightSet:
    """All trainable tensors, keyed by layer index (or skip edge)."""

    W: dict[int, np.ndarray]
    Ws: dict[int, np.ndarray]
    Wskip: dict[tuple[int, int], np.ndarray]
    theta: dict[int, np.ndarray]

    def named(self) -> dict[str, np.ndarray]:
        """Flat ``name -> array`` view sharing memory with this set."""
        out = {}
        for l, w in self.W.items():
            out[f"W{l}"] = w
        for l, w in self.Ws.items():
            out[f"Ws{l}"] = w
        for (a, b), w in self.Wskip.items():
            out[f"Wskip{a}_{b}"] = w
        for l, w in self.theta.items():
            out[f"theta{l}"] = w
        return out

    @classmethod
    def from_named(cls, tensors: dict[str, np.ndarray]) -> "WeightSet":
        ws = cls({}, {}, {}, {})
        for name, arr in tensors.items():
            if name.startswith("Wskip"):
                a, b = name[5:].split("_")
                ws.Wskip[(int(a), int(b))] = arr
            elif name.startswith("Ws"):
                ws.Ws[int(name[2:])] = arr
            elif name.startswith("W"):
                ws.W[int(name[1:])] = arr
            elif name.startswith("theta"):
                ws.theta[int(name[5:])] = arr
            else:
                raise KeyError(f"unknown tensor name {name!r}")
        return ws

    def copy(self) -> "WeightSet":
        return WeightSet.from_named({k: v.copy() for k, v in self.named().items()})

    def zeros_like(self) -> "WeightSet":
        return WeightSet.from_named({k: np.zeros_like(v) for k, v in self.named().items()})


def init_weights(spec: NetworkSpec, seed: int | np.random.Generator = 0) -> WeightSet:
    """Uniform fan-in scaled initialisation, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes
    ws = WeightSet({}, {}, {}, {})
    for l in range(1, len(sizes)):
        b = np.sqrt(3.0 / sizes[l - 1])
        ws.W[l] = rng.uniform(-b, b, size=(sizes[l], sizes[l - 1]))
        if spec.is_recurrent(l):
            ws.Ws[l] = rng.uniform(-0.1, 0.1, size=sizes[l])
        ws.theta[l] = np.full(sizes[l], spec.lif.theta_init)
    for src, tgt in spec.skip_edges:
        b = np.sqrt(3.0 / sizes[src])
        ws.Wskip[(src, tgt)] = rng.uniform(-b, b, size=(sizes[tgt], sizes[src]))
    return ws


def check_shapes(spec: NetworkSpec, weights: WeightSet) -> None:
    sizes = spec.layer_sizes
    for l in range(1, len(sizes)):
        if weights.W[l].shape != (sizes[l], sizes[l - 1]):
            raise StructuralError(f"W{l} has shape {weights.W[l].shape}, "
                                  f"expected {(sizes[l], sizes[l - 1])}")
        if weights.theta[l].shape != (sizes[l],):
            raise StructuralError(f"theta{l} has shape {weights.theta[l].shape}")
        if spec.is_recurrent(l) != (l in weights.Ws):
            raise StructuralError(f"Ws{l} presence does not match the architecture")
        if l in weights.Ws and weights.Ws[l].shape != (sizes[l],):
            raise StructuralError(f"Ws{l} has shape {weights.Ws[l].shape}")
    if set(weights.Wskip) != set(spec.skip_edges):
        raise StructuralError("skip tensors do not match the architecture's skip edges")
    for (src, tgt), w in weights.Wskip.items():
        if w.shape != (sizes[tgt], sizes[src]):
            raise StructuralError(f"Wskip{src}_{tgt} has shape {w.shape}")


@dataclass
class NetworkTrace:
    """Per-layer traces; ``layers[0]`` is unused, ``input_psc`` is ``a^(0)``."""

    input_psc: np.ndarray
    layers: list[LayerTrace | None]

    def psc(self, layer: int) -> np.ndarray:
        return self.input_psc if layer == 0 else self.layers[layer].a

    @property
    def output(self) -> LayerTrace:
        return self.layers[-1]


def input_psc(spec: NetworkSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if spec.input_mode is InputMode.ANALOG:
        return x
    return psc_filter(x, spec.lif.tau_s)


def _matmul_t(w: np.ndarray, a: np.ndarray) -> np.ndarray:
    # (N_out, N_in) x (..., N_in, T) -> (..., N_out, T)
    return np.matmul(w, a)


def layer_drive(spec: NetworkSpec, weights: WeightSet, trace: NetworkTrace, l: int) -> np.ndarray:
    """Feedforward plus skip drive into layer ``l`` for every timestep."""
    drive = _matmul_t(weights.W[l], trace.psc(l - 1))
    for src, tgt in spec.skips_into(l):
        drive = drive + _matmul_t(weights.Wskip[(src, tgt)], trace.psc(src))
    return drive


def forward(spec: NetworkSpec, weights: WeightSet, x, gate_steepness: float | None = None
            ) -> NetworkTrace:
    """Simulate the network on input ``x`` shaped ``(N_0, T)`` or ``(B, N_0, T)``.

    Layers are evaluated one at a time over the full time axis: nothing feeds
    back to an earlier layer, so the feedforward and skip drives reduce to one
    matmul per edge and only the elementwise recurrence runs step by step.
    """
    check_shapes(spec, weights)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3) or x.shape[-2] != spec.layer_sizes[0]:
        raise StructuralError(f"input shape {x.shape} does not match "
                              f"{spec.layer_sizes[0]} input channels")
    batch, steps = x.shape[:-2], x.shape[-1]
    trace = NetworkTrace(input_psc(spec, x), [None])
    lif = spec.lif
    for l in range(1, spec.output_layer + 1):
        params = LifParams(weights.theta[l], lif.tau_s, lif.v_th, lif.reset_mode)
        lt = LayerTrace.empty(spec.layer_sizes[l], steps, batch)
        trace.layers.append(lt)
        drive = layer_drive(spec, weights, trace, l)
        ws = weights.Ws.get(l)
        for t in range(steps):
            inp = drive[..., t]
            if ws is not None and t > 0:
                inp = inp + ws * lt.a[..., t - 1]
            step_layer(lt, t, inp, params, gate_steepness)
    return trace
