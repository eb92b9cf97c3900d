"""Adam, the mini-batch training loop, and the classification rule."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import bip
from .backprop import SurrogateConfig, backward
from .data import Dataset
from .loss import loss, target_train, vr_filter
from .network import NetworkSpec, WeightSet, forward, init_weights, validate

logger = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "train_loss", "train_acc", "test_acc", "wall_ms"]


class NonFiniteGradientError(FloatingPointError):
    pass


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr: float = 0.005, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for tensor {name!r}")
            if g.shape != params[name].shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape "
                                 f"{params[name].shape} for {name!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(state: Adam, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    state.step(params, grads)
    return params, state


def clip_by_norm(g: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(g))
    if max_norm > 0 and norm > max_norm:
        return g * (max_norm / norm)
    return g


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 50
    learning_rate: float = 0.005
    bip: bool = True
    bip_output: bool = True
    bip_lr_scale: float = 0.1
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    seed: int = 0
    warmup: int = 5
    target_period: int = 5
    kernel_tau: float | None = None
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    wall_ms: float = 0.0

    def row(self) -> list[str]:
        return [str(self.epoch), f"{self.train_loss:.10g}", f"{self.train_acc:.6f}",
                f"{self.test_acc:.6f}", f"{self.wall_ms:.3f}"]


def classify(output_s: np.ndarray, class_count: int | None = None, warmup: int = 0,
             kernel_tau: float = 8.0) -> np.ndarray | int:
    """Class with the largest filtered output mass over the scored window.

    ``np.argmax`` returns the first maximum, so ties go to the lowest index.
    """
    if class_count is not None and output_s.shape[-2] != class_count:
        raise ValueError(f"output layer has {output_s.shape[-2]} neurons, "
                         f"expected {class_count}")
    mass = vr_filter(output_s, kernel_tau)[..., warmup:].sum(axis=-1)
    pred = np.argmax(mass, axis=-1)
    return int(pred) if np.ndim(pred) == 0 else pred


def targets_for(labels: np.ndarray, n_out: int, steps: int, cfg: TrainConfig) -> np.ndarray:
    return np.stack([target_train(int(y), n_out, steps, cfg.warmup, cfg.target_period)
                     for y in labels])


def _kernel_tau(spec: NetworkSpec, cfg: TrainConfig) -> float:
    return spec.lif.tau_s if cfg.kernel_tau is None else cfg.kernel_tau


def predict(spec: NetworkSpec, weights: WeightSet, inputs: np.ndarray, cfg: TrainConfig,
            batch_size: int = 256) -> np.ndarray:
    preds = []
    for i in range(0, len(inputs), batch_size):
        tr = forward(spec, weights, inputs[i:i + batch_size], cfg.surrogate.gate_steepness)
        preds.append(classify(tr.output.s, warmup=cfg.warmup, kernel_tau=_kernel_tau(spec, cfg)))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def evaluate(spec, weights, dataset: Dataset, cfg: TrainConfig) -> float:
    if len(dataset) == 0:
        return float("nan")
    return float(np.mean(predict(spec, weights, dataset.inputs, cfg) == dataset.labels))


def _theta_layers(spec: NetworkSpec, cfg: TrainConfig) -> set[int]:
    if not cfg.bip:
        return set()
    layers = set(range(1, spec.output_layer + 1))
    if not cfg.bip_output:
        layers.discard(spec.output_layer)
    return layers


def train(spec: NetworkSpec, train_set: Dataset, test_set: Dataset, cfg: TrainConfig,
          weights: WeightSet | None = None, timing: bool = True, on_epoch=None
          ) -> tuple[WeightSet, list[EpochMetrics]]:
    """Mini-batch training with Adam; returns final weights and per-epoch metrics.

    Weight initialisation and epoch shuffling draw from independent child
    streams of ``cfg.seed``. With ``timing=False`` the wall-clock column is
    written as zero so that repeated runs produce identical metrics.
    """
    errors = validate(spec)
    if errors:
        raise ValueError("invalid network spec: " + "; ".join(errors))
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    for name, ds in (("train", train_set), ("test", test_set)):
        if len(ds) and ds.inputs.shape[1] != spec.layer_sizes[0]:
            raise ValueError(f"{name} inputs have {ds.inputs.shape[1]} channels, "
                             f"network expects {spec.layer_sizes[0]}")
        if len(ds) and ds.labels.max() >= spec.layer_sizes[-1]:
            raise ValueError(f"{name} labels exceed the {spec.layer_sizes[-1]} output neurons")

    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    if weights is None:
        weights = init_weights(spec, np.random.default_rng(init_seq))
    else:
        weights = weights.copy()
    shuffle_rng = np.random.default_rng(shuffle_seq)

    theta_layers = _theta_layers(spec, cfg)
    params = weights.named()
    theta_names = {f"theta{l}" for l in theta_layers}
    syn_names = [k for k in params if not k.startswith("theta")]
    opt_w = Adam(cfg.learning_rate)
    opt_theta = Adam(cfg.learning_rate * cfg.bip_lr_scale)
    tau = _kernel_tau(spec, cfg)
    n_out, steps = spec.layer_sizes[-1], train_set.inputs.shape[-1]
    gate = cfg.surrogate.gate_steepness

    history = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(train_set))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = train_set.inputs[idx], train_set.labels[idx]
            d = targets_for(yb, n_out, steps, cfg)
            tr = forward(spec, weights, xb, gate)
            total_loss += loss(d, tr.output.s, tau, cfg.warmup)
            correct += int(np.sum(classify(tr.output.s, warmup=cfg.warmup, kernel_tau=tau) == yb))
            grads = backward(spec, weights, tr, d, cfg.surrogate, tau, cfg.warmup,
                             train_theta=theta_layers).named()
            grads = {k: clip_by_norm(g, cfg.grad_clip) for k, g in grads.items()}
            opt_w.step(params, {k: grads[k] for k in syn_names})
            if theta_names:
                opt_theta.step(params, {k: grads[k] for k in sorted(theta_names)})
                for k in theta_names:
                    bip.clamp_theta(params[k])
        test_acc = evaluate(spec, weights, test_set, cfg)
        wall = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
        m = EpochMetrics(epoch, total_loss / len(train_set), correct / len(train_set),
                         test_acc, wall)
        history.append(m)
        logger.info("epoch %d loss %.4f train_acc %.3f test_acc %.3f",
                    epoch, m.train_loss, m.train_acc, m.test_acc)
        if on_epoch is not None:
            on_epoch(m, weights)
    return weights, history


def write_metrics(path, history: list[EpochMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for m in history:
            writer.writerow(m.row())
