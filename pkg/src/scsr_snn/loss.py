"""Van Rossum spike-train loss on exponentially filtered trains."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import StructuralError, psc_filter


@dataclass
class TargetRaster:
    """Desired output spikes ``d`` shaped ``(..., N_out, T)``; the first
    ``warmup`` steps are not scored."""

    d: np.ndarray
    warmup: int = 5

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64)
        if not 0 <= self.warmup < self.d.shape[-1]:
            raise ValueError(f"warmup {self.warmup} must lie in [0, {self.d.shape[-1]})")


def vr_filter(train, kernel_tau: float) -> np.ndarray:
    """Causal exponential kernel ``f[t] = (1 - 1/tau) f[t-1] + x[t]``."""
    if kernel_tau < 1:
        raise ValueError(f"kernel_tau must be >= 1, got {kernel_tau}")
    return psc_filter(train, kernel_tau)


def _score_mask(steps: int, warmup: int) -> np.ndarray:
    mask = np.ones(steps)
    mask[:warmup] = 0.0
    return mask


def _as_target(d, warmup):
    if isinstance(d, TargetRaster):
        return d
    return TargetRaster(d, warmup if warmup is not None else 0)


def loss(d, s, kernel_tau: float = 8.0, warmup: int | None = None) -> float:
    """Sum of ``0.5 * (f_d - f_s)^2`` over neurons, samples and scored timesteps.

    ``d`` may be a :class:`TargetRaster` (its warmup is used) or a bare array,
    in which case ``warmup`` defaults to 0.
    """
    target = _as_target(d, warmup)
    s = np.asarray(s, dtype=np.float64)
    if target.d.shape != s.shape:
        raise StructuralError(f"target shape {target.d.shape} != output shape {s.shape}")
    diff = vr_filter(target.d, kernel_tau) - vr_filter(s, kernel_tau)
    diff = diff * _score_mask(s.shape[-1], target.warmup)
    return 0.5 * float(np.sum(diff * diff))


def filtered_error(d, s, kernel_tau: float = 8.0, warmup: int | None = None) -> np.ndarray:
    """``dL/d(eps*s)`` at every timestep: ``(eps*s) - (eps*d)``, zero in warm-up."""
    target = _as_target(d, warmup)
    s = np.asarray(s, dtype=np.float64)
    if target.d.shape != s.shape:
        raise StructuralError(f"target shape {target.d.shape} != output shape {s.shape}")
    err = vr_filter(s, kernel_tau) - vr_filter(target.d, kernel_tau)
    return err * _score_mask(s.shape[-1], target.warmup)


def output_error(d, s, kernel_tau: float, t_k: int, warmup: int = 0) -> np.ndarray:
    """Gradient of ``E[t_k]`` with respect to the filtered actual output."""
    if not warmup <= t_k < np.shape(s)[-1]:
        raise ValueError(f"t_k={t_k} outside the scored window")
    return filtered_error(d, s, kernel_tau, warmup)[..., t_k]


def spike_error(d, s, kernel_tau: float = 8.0, warmup: int | None = None) -> np.ndarray:
    """``dL/ds[t]``: the filtered error pulled back through the causal kernel.

    The kernel is linear, so its adjoint is the same exponential run backwards
    in time.
    """
    err = filtered_error(d, s, kernel_tau, warmup)
    return psc_filter(err[..., ::-1], kernel_tau)[..., ::-1]


def target_train(label: int, n_out: int, steps: int, warmup: int = 5, period: int = 5
                 ) -> np.ndarray:
    """Classification target: the label neuron fires every ``period`` steps from
    ``warmup`` on; every other output neuron stays silent."""
    d = np.zeros((n_out, steps))
    d[label, warmup::period] = 1.0
    return d
