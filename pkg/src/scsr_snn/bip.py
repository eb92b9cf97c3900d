"""Backpropagated intrinsic plasticity: gradients and updates for the
per-neuron leak factors."""
from __future__ import annotations

import numpy as np

THETA_MIN = 0.01
THETA_MAX = 0.999


def grad_theta(u: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``sum_{t>=1} u[t-1] * delta[t]`` per neuron, summed over batch axes.

    ``u`` is the stored post-reset potential, i.e. exactly the value the
    forward recursion multiplied by the leak.
    """
    g = np.sum(u[..., :-1] * delta[..., 1:], axis=-1)
    return g.reshape(-1, g.shape[-1]).sum(axis=0) if g.ndim > 1 else g


def apply_theta_update(theta: np.ndarray, grad: np.ndarray, step: float | np.ndarray = 1.0
                       ) -> np.ndarray:
    """Descend by ``step * grad`` and clamp into ``[THETA_MIN, THETA_MAX]``."""
    return np.clip(theta - step * grad, THETA_MIN, THETA_MAX)


def clamp_theta(theta: np.ndarray) -> np.ndarray:
    np.clip(theta, THETA_MIN, THETA_MAX, out=theta)
    return theta
