"""Central finite-difference check of every analytic gradient (smooth-gate mode)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backprop import SurrogateConfig, SurrogateKind, backward
from .loss import loss
from .network import InputMode, NetworkSpec, WeightSet, forward, init_weights

TENSOR_CLASSES = ("W", "Ws", "Wskip", "theta")
# Entries where both gradients are below this are compared in absolute terms.
REL_FLOOR = 1e-6


def tensor_class(name: str) -> str:
    for prefix in ("Wskip", "Ws", "theta", "W"):
        if name.startswith(prefix):
            return prefix
    raise KeyError(name)


def relative_error(analytic, numeric, floor: float = REL_FLOOR) -> np.ndarray:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


@dataclass
class GradcheckReport:
    max_rel_error: dict[str, float]  # tensor class -> worst entry
    per_tensor: dict[str, float]
    checked: int

    def passed(self, tol: float = 1e-4) -> bool:
        return all(err < tol for err in self.max_rel_error.values())


def make_problem(spec: NetworkSpec, steps: int, seed: int, batch: int = 2,
                 steepness: float = 4.0, teacher_noise: float = 0.01):
    """Random weights, input and target for a gradient check.

    The target is the smooth-gate output of a slightly perturbed copy of the
    network. That keeps the loss small, so finite-difference rounding noise
    (which scales with the loss) stays well below the smallest gradients.
    """
    rng = np.random.default_rng(seed)
    weights = init_weights(spec, rng)
    # keep leaks away from the clamp so theta perturbations stay valid
    for l in weights.theta:
        weights.theta[l] = weights.theta[l] + rng.uniform(-0.02, 0.02, size=weights.theta[l].shape)
    for l in weights.Ws:
        weights.Ws[l] = rng.uniform(-0.5, 0.5, size=weights.Ws[l].shape)
    shape = (batch, spec.layer_sizes[0], steps)
    if spec.input_mode is InputMode.ANALOG:
        x = rng.uniform(0.0, 0.5, size=shape)
    else:
        x = (rng.random(shape) < 0.2).astype(np.float64)
    teacher = weights.copy()
    for name, arr in teacher.named().items():
        if not name.startswith("theta"):
            arr += teacher_noise * rng.standard_normal(arr.shape)
    d = forward(spec, teacher, x, steepness).output.s
    return weights, x, d


def check_gradients(spec: NetworkSpec, weights: WeightSet, x, d, steepness: float = 4.0,
                    fd_step: float = 1e-5, warmup: int = 0, corrupt: bool = False,
                    max_entries: int | None = None, seed: int = 0) -> GradcheckReport:
    """Compare ``backward`` against central differences of the loss.

    ``corrupt`` perturbs the analytic gradients before comparison; it exists
    as a negative control for the harness itself. ``max_entries`` limits the
    number of randomly chosen entries probed per tensor.
    """
    cfg = SurrogateConfig(SurrogateKind.SMOOTH_GATE, steepness)
    weights = weights.copy()
    tau = spec.lif.tau_s

    def objective() -> float:
        tr = forward(spec, weights, x, cfg.gate_steepness)
        return loss(d, tr.output.s, tau, warmup)

    trace = forward(spec, weights, x, cfg.gate_steepness)
    grads = backward(spec, weights, trace, d, cfg, tau, warmup).named()
    if corrupt:
        grads = {k: g * 1.01 + 1e-3 for k, g in grads.items()}

    rng = np.random.default_rng(seed)
    per_tensor = {}
    worst = {}
    checked = 0
    for name, param in weights.named().items():
        idx_all = list(np.ndindex(param.shape))
        if max_entries is not None and len(idx_all) > max_entries:
            pick = rng.choice(len(idx_all), size=max_entries, replace=False)
            idx_all = [idx_all[i] for i in sorted(pick)]
        errs = []
        for idx in idx_all:
            orig = param[idx]
            param[idx] = orig + fd_step
            lp = objective()
            param[idx] = orig - fd_step
            lm = objective()
            param[idx] = orig
            numeric = (lp - lm) / (2 * fd_step)
            errs.append(float(relative_error(grads[name][idx], numeric)))
        checked += len(errs)
        per_tensor[name] = max(errs) if errs else 0.0
        cls = tensor_class(name)
        worst[cls] = max(worst.get(cls, 0.0), per_tensor[name])
    return GradcheckReport(worst, per_tensor, checked)
