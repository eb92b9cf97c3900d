"""Reverse-time error propagation for feedforward, self-recurrent and
skip-connected spiking layers.

The error field ``delta[l][..., i, t]`` is ``dL/dv`` where ``v`` is the
pre-reset membrane potential of neuron ``i`` in layer ``l`` at step ``t``.
How a membrane value at ``t_m`` reaches PSCs at every later ``t_k`` is not
materialised as a dense Jacobian. Instead a backward scan carries two
adjoints through the exact linear recursions of the forward pass: one for
the PSC decay and one for the membrane leak (gated by the reset). The
spike nonlinearity itself enters only through a pluggable surrogate
derivative.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .dynamics import LayerTrace, ResetMode
from .loss import spike_error
from .network import NetworkSpec, NetworkTrace, WeightSet, check_shapes
from . import bip


class SurrogateKind(str, Enum):
    RECTANGULAR = "rectangular"
    FAST_SIGMOID = "fast-sigmoid"
    SMOOTH_GATE = "smooth-gate"


@dataclass(frozen=True)
class SurrogateConfig:
    kind: SurrogateKind = SurrogateKind.FAST_SIGMOID
    param: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SurrogateKind(self.kind))
        if not self.param > 0:
            raise ValueError(f"surrogate parameter must be > 0, got {self.param}")

    @property
    def smooth(self) -> bool:
        return self.kind is SurrogateKind.SMOOTH_GATE

    @property
    def gate_steepness(self) -> float | None:
        """Steepness to hand to the forward pass (``None`` means hard threshold)."""
        return self.param if self.smooth else None


def surrogate_derivative(v, v_th: float, cfg: SurrogateConfig) -> np.ndarray:
    x = np.asarray(v, dtype=np.float64) - v_th
    if cfg.kind is SurrogateKind.RECTANGULAR:
        return (np.abs(x) < cfg.param / 2).astype(np.float64)
    if cfg.kind is SurrogateKind.FAST_SIGMOID:
        return 1.0 / (1.0 + cfg.param * np.abs(x)) ** 2
    g = 0.5 * (1.0 + np.tanh(0.5 * cfg.param * x))
    return cfg.param * g * (1.0 - g)


def spike_response_jacobian_step(trace: LayerTrace, t: int, cfg: SurrogateConfig,
                                 v_th: float = 1.0) -> np.ndarray:
    """Diagonal of ``ds[t]/dv[t]`` for every neuron of the layer."""
    return surrogate_derivative(trace.v[..., t], v_th, cfg)


@dataclass
class LayerContext:
    """What the backward scan needs to know about one layer."""

    trace: LayerTrace
    theta: np.ndarray
    tau_s: float
    v_th: float
    reset_mode: ResetMode
    ws: np.ndarray | None = None


def _context(spec: NetworkSpec, weights: WeightSet, trace: NetworkTrace, l: int,
             use_ws: bool = True) -> LayerContext:
    lif = spec.lif
    return LayerContext(trace.layers[l], weights.theta[l], lif.tau_s, lif.v_th,
                        lif.reset_mode, weights.Ws.get(l) if use_ws else None)


def reverse_scan(ctx: LayerContext, cfg: SurrogateConfig, psc_error=None, spike_err=None,
                 on_step: Callable[[int, np.ndarray], None] | None = None) -> np.ndarray:
    """Backward scan over time for one layer.

    ``psc_error`` is the external ``dL/da[t]`` arriving through outgoing
    weights at the same step (next layer and skip targets); ``spike_err`` the
    external ``dL/ds[t]`` (only the output layer has one). Self-recurrent
    feedback ``ws * delta[t+1]`` is folded into the PSC adjoint here.

    ``on_step(t, delta)`` is called after each column is written; it sees the
    partially filled field, which is how the well-ordering tests probe it.
    """
    tr = ctx.trace
    sg = surrogate_derivative(tr.v, ctx.v_th, cfg)
    exact_reset = cfg.smooth
    if ctx.reset_mode is ResetMode.TO_ZERO:
        # u = v * (1 - s)
        du_dv = 1.0 - tr.s
        if exact_reset:
            du_dv = du_dv - tr.v * sg
    else:
        # u = v - v_th * s
        du_dv = np.ones_like(tr.v)
        if exact_reset:
            du_dv = du_dv - ctx.v_th * sg
    decay = 1.0 - 1.0 / ctx.tau_s
    steps = tr.n_steps
    delta = np.zeros_like(tr.v)
    ga_next = None
    d_next = None
    for t in range(steps - 1, -1, -1):
        ga = np.zeros(tr.v.shape[:-1]) if psc_error is None else psc_error[..., t]
        if ga_next is not None:
            ga = ga + decay * ga_next
            if ctx.ws is not None:
                ga = ga + ctx.ws * d_next
        gs = ga if spike_err is None else ga + spike_err[..., t]
        d = gs * sg[..., t]
        if d_next is not None:
            d = d + (ctx.theta * d_next) * du_dv[..., t]
        delta[..., t] = d
        ga_next, d_next = ga, d
        if on_step is not None:
            on_step(t, delta)
    return delta


def _back_through(w: np.ndarray, delta: np.ndarray) -> np.ndarray:
    # (N_out, N_in)^T x (..., N_out, T) -> (..., N_in, T)
    return np.matmul(w.T, delta)


def delta_output(d, trace: NetworkTrace, spec: NetworkSpec, weights: WeightSet,
                 cfg: SurrogateConfig, kernel_tau: float | None = None, warmup: int = 0,
                 on_step=None) -> np.ndarray:
    """Error field of the output layer."""
    l = spec.output_layer
    out = trace.layers[l]
    tau = spec.lif.tau_s if kernel_tau is None else kernel_tau
    ds = spike_error(d, out.s, tau, warmup)
    return reverse_scan(_context(spec, weights, trace, l), cfg, spike_err=ds, on_step=on_step)


def delta_hidden(l: int, delta_next: np.ndarray, weights: WeightSet, trace: NetworkTrace,
                 spec: NetworkSpec, cfg: SurrogateConfig, on_step=None) -> np.ndarray:
    """Feedforward hidden layer: error arrives only from layer ``l+1``."""
    ga = _back_through(weights.W[l + 1], delta_next)
    return reverse_scan(_context(spec, weights, trace, l, use_ws=False), cfg, ga,
                        on_step=on_step)


def delta_self_recurrent(l: int, delta_next: np.ndarray, weights: WeightSet,
                         trace: NetworkTrace, spec: NetworkSpec, cfg: SurrogateConfig,
                         on_step=None) -> np.ndarray:
    """Self-recurrent layer: adds the ``Ws * delta[t+1]`` path.

    The layer's own future error is produced inside the backward scan, so it
    is not an argument.
    """
    ga = _back_through(weights.W[l + 1], delta_next)
    return reverse_scan(_context(spec, weights, trace, l), cfg, ga, on_step=on_step)


def delta_skip(l: int, delta_next: np.ndarray, skip_deltas: dict[int, np.ndarray],
               weights: WeightSet, trace: NetworkTrace, spec: NetworkSpec,
               cfg: SurrogateConfig, on_step=None) -> np.ndarray:
    """Layer with outgoing skip edges: adds ``Wskip^T delta[target]`` per edge.

    ``skip_deltas`` maps each skip target layer to its error field.
    """
    ga = _back_through(weights.W[l + 1], delta_next)
    for src, tgt in spec.skips_from(l):
        ga = ga + _back_through(weights.Wskip[(src, tgt)], skip_deltas[tgt])
    return reverse_scan(_context(spec, weights, trace, l), cfg, ga, on_step=on_step)


def layer_case(spec: NetworkSpec, l: int) -> int:
    """1 = feedforward, 2 = self-recurrent, 3 = has outgoing skip edges."""
    if spec.skips_from(l):
        return 3
    return 2 if spec.is_recurrent(l) else 1


def error_fields(spec: NetworkSpec, weights: WeightSet, trace: NetworkTrace, d,
                 cfg: SurrogateConfig, kernel_tau: float | None = None, warmup: int = 0
                 ) -> dict[int, np.ndarray]:
    """All error fields, computed from the output layer down."""
    L = spec.output_layer
    deltas = {L: delta_output(d, trace, spec, weights, cfg, kernel_tau, warmup)}
    for l in range(L - 1, 0, -1):
        case = layer_case(spec, l)
        if case == 3:
            deltas[l] = delta_skip(l, deltas[l + 1], deltas, weights, trace, spec, cfg)
        elif case == 2:
            deltas[l] = delta_self_recurrent(l, deltas[l + 1], weights, trace, spec, cfg)
        else:
            deltas[l] = delta_hidden(l, deltas[l + 1], weights, trace, spec, cfg)
    return deltas


def _sum_leading(x: np.ndarray, keep: int) -> np.ndarray:
    return x.reshape(-1, *x.shape[x.ndim - keep:]).sum(axis=0) if x.ndim > keep else x


def grad_feedforward(a_prev: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``sum_t delta[t] a_prev[t]^T``, summed over any batch axes."""
    g = np.matmul(delta, np.swapaxes(a_prev, -1, -2))
    return _sum_leading(g, 2)


def grad_self(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Diagonal self-weight gradient with the one-step PSC delay."""
    g = np.sum(a[..., :-1] * delta[..., 1:], axis=-1)
    return _sum_leading(g, 1)


grad_skip = grad_feedforward


def backward(spec: NetworkSpec, weights: WeightSet, trace: NetworkTrace, d,
             cfg: SurrogateConfig, kernel_tau: float | None = None, warmup: int = 0,
             train_theta: bool | set[int] = True) -> WeightSet:
    """Gradients of the loss for every trainable tensor.

    ``train_theta`` selects the layers whose leak gradient is computed: True
    for all, False for none, or an explicit set of layer indices. Leak
    gradients of untrained layers are left at zero.
    """
    check_shapes(spec, weights)
    deltas = error_fields(spec, weights, trace, d, cfg, kernel_tau, warmup)
    grads = weights.zeros_like()
    for l in range(1, spec.output_layer + 1):
        grads.W[l] = grad_feedforward(trace.psc(l - 1), deltas[l])
        if l in weights.Ws:
            grads.Ws[l] = grad_self(trace.layers[l].a, deltas[l])
        if train_theta is True or (train_theta and l in train_theta):
            grads.theta[l] = bip.grad_theta(trace.layers[l].u, deltas[l])
    for src, tgt in spec.skip_edges:
        grads.Wskip[(src, tgt)] = grad_skip(trace.psc(src), deltas[tgt])
    return grads
