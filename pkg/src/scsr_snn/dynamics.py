"""Discrete-time LIF neuron and first-order synapse primitives.

All functions operate on numpy arrays whose last axis indexes neurons, so the
same code serves a single sample ``(N,)`` and a batch ``(B, N)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import lfilter


class StructuralError(ValueError):
    """Shape, dimension or index mismatch in the simulation kernels."""


class ResetMode(str, Enum):
    TO_ZERO = "to-zero"
    SUBTRACT = "subtract-threshold"


@dataclass
class LifParams:
    """Per-layer LIF constants.

    ``theta_m`` is the per-neuron leak factor ``1 - 1/tau_m``; ``tau_s`` is the
    synaptic time constant in timesteps.
    """

    theta_m: np.ndarray
    tau_s: float = 8.0
    v_th: float = 1.0
    reset_mode: ResetMode = ResetMode.TO_ZERO

    def __post_init__(self):
        self.theta_m = np.atleast_1d(np.asarray(self.theta_m, dtype=np.float64))
        self.reset_mode = ResetMode(self.reset_mode)
        if np.any(self.theta_m <= 0) or np.any(self.theta_m >= 1):
            raise ValueError("theta_m must lie strictly inside (0, 1)")
        if self.tau_s < 1:
            raise ValueError(f"tau_s must be >= 1, got {self.tau_s}")
        if self.v_th <= 0:
            raise ValueError(f"v_th must be > 0, got {self.v_th}")

    @classmethod
    def from_tau(cls, n: int, tau_m: float = 16.0, **kw) -> "LifParams":
        return cls(theta_m=np.full(n, 1.0 - 1.0 / tau_m), **kw)


@dataclass
class SpikeRaster:
    """Binary ``[neurons x timesteps]`` spike matrix."""

    data: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise StructuralError(f"raster must be 2-D, got shape {data.shape}")
        if not np.all((data == 0) | (data == 1)):
            raise ValueError("raster entries must be 0 or 1")
        self.data = data.astype(np.uint8)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass
class LayerTrace:
    """Recorded state of one layer.

    ``u`` holds the post-reset membrane potential (the value carried to the
    next step), ``v`` the pre-reset potential the threshold was compared
    against, ``a`` the unweighted PSC and ``s`` the emitted spikes. In
    smooth-gate mode ``s`` holds gate values in (0, 1) rather than bits.
    Arrays are shaped ``(..., N, T)``.
    """

    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    s: np.ndarray

    @classmethod
    def empty(cls, n: int, steps: int, batch: tuple[int, ...] = ()) -> "LayerTrace":
        shape = (*batch, n, steps)
        return cls(*(np.zeros(shape) for _ in range(4)))

    @property
    def n_neurons(self) -> int:
        return self.u.shape[-2]

    @property
    def n_steps(self) -> int:
        return self.u.shape[-1]

    def raster(self) -> SpikeRaster:
        if self.s.ndim != 2:
            raise StructuralError("raster() needs a single-sample trace")
        return SpikeRaster(self.s)


def _check_same(*arrays):
    shape = np.shape(arrays[0])
    for arr in arrays[1:]:
        if np.shape(arr)[-1:] != shape[-1:] and np.ndim(arr) > 0:
            raise StructuralError(f"dimension mismatch: {shape} vs {np.shape(arr)}")


def psc_step(a_prev, s_now, tau_s: float):
    """One Euler step of the first-order synapse: ``(1 - 1/tau_s) a + s``."""
    if tau_s < 1:
        raise ValueError(f"tau_s must be >= 1, got {tau_s}")
    _check_same(a_prev, s_now)
    return (1.0 - 1.0 / tau_s) * np.asarray(a_prev, dtype=np.float64) + s_now


def membrane_step(u_prev, weighted_input, theta_m):
    _check_same(u_prev, weighted_input, theta_m)
    return np.asarray(theta_m) * u_prev + weighted_input


def fire_and_reset(u_now, v_th: float, reset_mode=ResetMode.TO_ZERO):
    """Threshold the pre-reset potential and apply the reset.

    Returns ``(spikes, post_reset_potential)``. Firing uses ``>=``.
    """
    if v_th <= 0:
        raise ValueError(f"v_th must be > 0, got {v_th}")
    u_now = np.asarray(u_now, dtype=np.float64)
    spikes = (u_now >= v_th).astype(np.float64)
    return spikes, reset(u_now, spikes, v_th, reset_mode)


def reset(v, s, v_th: float, reset_mode=ResetMode.TO_ZERO):
    """Post-reset potential for pre-reset ``v`` and (possibly graded) spike ``s``."""
    if ResetMode(reset_mode) is ResetMode.TO_ZERO:
        return v * (1.0 - s)
    return v - v_th * s


def smooth_gate(v, v_th: float, steepness: float):
    """Logistic stand-in for the Heaviside spike function."""
    return 0.5 * (1.0 + np.tanh(0.5 * steepness * (v - v_th)))


def step_layer(trace: LayerTrace, t: int, weighted_input, params: LifParams,
               gate_steepness: float | None = None) -> LayerTrace:
    """Fill column ``t`` of ``trace`` in place and return it.

    ``weighted_input`` is the full synaptic drive at ``t`` (feedforward,
    self-recurrent and skip terms already summed). When ``gate_steepness`` is
    given the Heaviside is replaced by the logistic gate.
    """
    if not 0 <= t < trace.n_steps:
        raise StructuralError(f"timestep {t} outside [0, {trace.n_steps})")
    if np.shape(weighted_input)[-1] != trace.n_neurons:
        raise StructuralError(
            f"input has {np.shape(weighted_input)[-1]} entries, layer has {trace.n_neurons}")
    u_prev = trace.u[..., t - 1] if t > 0 else 0.0
    a_prev = trace.a[..., t - 1] if t > 0 else 0.0
    v = params.theta_m * u_prev + weighted_input
    if gate_steepness is None:
        s, u = fire_and_reset(v, params.v_th, params.reset_mode)
    else:
        s = smooth_gate(v, params.v_th, gate_steepness)
        u = reset(v, s, params.v_th, params.reset_mode)
    trace.v[..., t] = v
    trace.u[..., t] = u
    trace.s[..., t] = s
    trace.a[..., t] = (1.0 - 1.0 / params.tau_s) * a_prev + s
    return trace


def psc_filter(x, tau: float):
    """Causal exponential filter along the last axis, ``f[t] = c f[t-1] + x[t]``."""
    x = np.asarray(x, dtype=np.float64)
    return lfilter([1.0], [1.0, -(1.0 - 1.0 / tau)], x, axis=-1)
