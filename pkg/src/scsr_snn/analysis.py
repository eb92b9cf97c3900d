"""Two self-recurrent layers versus one delayed recurrent layer.

With a linear gate ``g(v) = h * v`` the pair

    u1[t] = theta * u1[t-1] + x[t] + Ws * g(u1[t-1])
    u2[t] = theta * u2[t-1] + W_next @ g(u1[t])

collapses to a single recurrence in ``u2`` alone. Solving the second line
for ``u1[t] = W_next^-1 (u2[t] - theta * u2[t-1]) / h`` and substituting into
the first gives

    u2[t] = theta * u2[t-1] + h * W_next @ x[t]
            + W1 @ g(u2[t-1]) + W2 @ g(u2[t-2])
    W1 = W_next @ (theta / h + diag(Ws)) @ W_next^-1,   W2 = -theta * W1

The input path is therefore ``h * W_next @ x`` where ``x = W_in @ a_in`` is
the drive into the first layer. The zero initial state is consistent with
the substitution, so the two systems agree from ``t = 0`` onward.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import fire_and_reset

MAX_CONDITION = 1e10


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class LinearGateConfig:
    h: float
    theta_m: float
    W_next: np.ndarray
    Ws: np.ndarray
    W_in: np.ndarray | None = None

    def __post_init__(self):
        self.W_next = np.asarray(self.W_next, dtype=np.float64)
        self.Ws = np.asarray(self.Ws, dtype=np.float64)
        n = self.Ws.shape[0]
        if self.W_next.shape != (n, n):
            raise ValueError(f"W_next must be {n}x{n}, got {self.W_next.shape}")
        if self.h == 0:
            raise ValueError("gate slope h must be non-zero")
        if self.W_in is None:
            self.W_in = np.eye(n)
        self.W_in = np.asarray(self.W_in, dtype=np.float64)
        if self.W_in.shape[0] != n:
            raise ValueError(f"W_in must have {n} rows, got {self.W_in.shape}")

    @property
    def size(self) -> int:
        return self.Ws.shape[0]


def combine_two_layer(cfg: LinearGateConfig) -> tuple[np.ndarray, np.ndarray]:
    """Delay-1 and delay-2 recurrent weights of the collapsed single layer."""
    cond = np.linalg.cond(cfg.W_next)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrixError(f"W_next is singular or ill-conditioned "
                                  f"(condition number {cond:.3g})")
    inner = cfg.W_next @ (np.diag(cfg.Ws) + (cfg.theta_m / cfg.h) * np.eye(cfg.size))
    # inner @ W_next^-1 without forming the inverse
    w1 = np.linalg.solve(cfg.W_next.T, inner.T).T
    return w1, -cfg.theta_m * w1


def simulate_two_layer(cfg: LinearGateConfig, a_in: np.ndarray) -> np.ndarray:
    """Membrane trace ``(N, T)`` of the second layer in the linear two-layer system."""
    x = cfg.W_in @ a_in
    n, steps = cfg.size, x.shape[-1]
    u1 = np.zeros(n)
    u2 = np.zeros(n)
    out = np.empty((n, steps))
    for t in range(steps):
        u1 = cfg.theta_m * u1 + x[:, t] + cfg.Ws * (cfg.h * u1)
        u2 = cfg.theta_m * u2 + cfg.W_next @ (cfg.h * u1)
        out[:, t] = u2
    return out


def simulate_combined(cfg: LinearGateConfig, a_in: np.ndarray,
                      weights: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Membrane trace of the single layer with delay-1 and delay-2 recurrence."""
    w1, w2 = combine_two_layer(cfg) if weights is None else weights
    drive = cfg.h * (cfg.W_next @ (cfg.W_in @ a_in))
    n, steps = cfg.size, drive.shape[-1]
    u_1 = np.zeros(n)  # u[t-1]
    u_2 = np.zeros(n)  # u[t-2]
    out = np.empty((n, steps))
    for t in range(steps):
        u = cfg.theta_m * u_1 + drive[:, t] + w1 @ (cfg.h * u_1) + w2 @ (cfg.h * u_2)
        out[:, t] = u
        u_1, u_2 = u, u_1
    return out


def _simulate_spiking(cfg: LinearGateConfig, a_in: np.ndarray, tau_s: float, v_th: float
                      ) -> tuple[np.ndarray, np.ndarray]:
    x = cfg.W_in @ a_in
    n, steps = cfg.size, x.shape[-1]
    decay = 1.0 - 1.0 / tau_s
    w1, w2 = combine_two_layer(cfg)
    drive = cfg.W_next @ x
    u1 = np.zeros(n); a1 = np.zeros(n)
    u2 = np.zeros(n)
    ub = np.zeros(n); ab1 = np.zeros(n); ab2 = np.zeros(n)
    out_a = np.empty((n, steps)); out_b = np.empty((n, steps))
    for t in range(steps):
        v1 = cfg.theta_m * u1 + x[:, t] + cfg.Ws * a1
        s1, u1 = fire_and_reset(v1, v_th)
        a1 = decay * a1 + s1
        u2 = cfg.theta_m * u2 + cfg.W_next @ a1
        out_a[:, t] = u2
        vb = cfg.theta_m * ub + drive[:, t] + w1 @ ab1 + w2 @ ab2
        sb, ub = fire_and_reset(vb, v_th)
        ab1, ab2 = decay * ab1 + sb, ab1
        out_b[:, t] = vb
    return out_a, out_b


def verify_equivalence(cfg: LinearGateConfig, a_in, n_steps: int | None = None,
                       mode: str = "linear", tau_s: float = 8.0, v_th: float = 1.0) -> float:
    """Max absolute membrane deviation between the two systems.

    ``mode="spiking"`` swaps the linear gate for threshold, reset and PSC
    filtering on both sides. The collapse is only approximate there, so the
    number is diagnostic.
    """
    a_in = np.asarray(a_in, dtype=np.float64)
    if n_steps is not None:
        a_in = a_in[:, :n_steps]
    if mode == "linear":
        ua, ub = simulate_two_layer(cfg, a_in), simulate_combined(cfg, a_in)
    elif mode == "spiking":
        ua, ub = _simulate_spiking(cfg, a_in, tau_s, v_th)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(np.max(np.abs(ua - ub))) if ua.size else 0.0


def random_well_conditioned(n: int, rng: np.random.Generator, sv_range=(0.5, 2.0)) -> np.ndarray:
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q1 @ np.diag(rng.uniform(*sv_range, size=n)) @ q2


def random_case(seed: int, max_size: int = 20, max_steps: int = 200, theta_m: float = 0.9375
                ) -> tuple[LinearGateConfig, np.ndarray]:
    """Random stable configuration plus a non-negative input PSC series."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_size + 1))
    steps = int(rng.integers(20, max_steps + 1))
    h = float(rng.uniform(0.5, 1.5))
    ws = rng.uniform(-0.03, 0.03, size=n)
    cfg = LinearGateConfig(h=h, theta_m=theta_m, W_next=random_well_conditioned(n, rng), Ws=ws)
    a_in = rng.uniform(0.0, 1.0, size=(n, steps))
    return cfg, a_in


@dataclass
class SweepRow:
    seed: int
    size: int
    n_steps: int
    deviation: float


def sweep(seeds, **kw) -> list[SweepRow]:
    rows = []
    for seed in seeds:
        cfg, a_in = random_case(seed, **kw)
        rows.append(SweepRow(seed, cfg.size, a_in.shape[1], verify_equivalence(cfg, a_in)))
    return rows


def write_report(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "size", "N_t", "deviation"])
        for r in rows:
            writer.writerow([r.seed, r.size, r.n_steps, f"{r.deviation:.6e}"])
