"""Command-line entry points: train, eval, gradcheck, equivcheck, gen-data.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, config
from .backprop import SurrogateConfig
from .data import Dataset, FormatError, generate, read_manifest, read_weights, \
    time_bin_downsample, write_dataset, write_weights
from .gradcheck import TENSOR_CLASSES, check_gradients, make_problem
from .network import NetworkSpec, WeightSet, check_shapes
from .optim import TrainConfig, evaluate, predict, train, write_metrics

logger = logging.getLogger("scsr_snn")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _bin(ds: Dataset, factor: int) -> Dataset:
    if factor == 1 or len(ds) == 0:
        return ds
    return Dataset(time_bin_downsample(ds.inputs, factor), ds.labels, ds.class_count)


def load_data(cfg: config.RunConfig) -> tuple[Dataset, Dataset]:
    dc = cfg.data
    if dc.source == "synthetic":
        train_set, test_set = generate(dc.synth)
    else:
        n_out = cfg.network.layer_sizes[-1]
        train_set = read_manifest(cfg.base_dir / dc.train_manifest, n_out)
        if dc.test_manifest:
            test_set = read_manifest(cfg.base_dir / dc.test_manifest, n_out)
        else:
            test_set = Dataset(train_set.inputs[:0], train_set.labels[:0], n_out)
    return _bin(train_set, dc.bin_factor), _bin(test_set, dc.bin_factor)


def weights_meta(cfg: config.RunConfig) -> dict:
    tr = cfg.train
    return {
        "network": cfg.network.to_dict(),
        "warmup": tr.warmup,
        "kernel_tau": tr.kernel_tau,
        "surrogate": {"kind": tr.surrogate.kind.value, "param": tr.surrogate.param},
        "target_period": tr.target_period,
        "bin_factor": cfg.data.bin_factor,
    }


def cmd_train(args) -> int:
    cfg = config.load(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.ini").write_text(config.dump(cfg))
    train_set, test_set = load_data(cfg)
    weights, history = train(cfg.network, train_set, test_set, cfg.train, timing=args.timing)
    write_metrics(out / "metrics.csv", history)
    write_weights(out / "weights.scsw", weights.named(), weights_meta(cfg))
    last = history[-1]
    print(f"epochs={len(history)} train_loss={last.train_loss:.6g} "
          f"train_acc={last.train_acc:.6f} test_acc={last.test_acc:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not Path(args.weights).is_file():
        raise UsageError(f"weights file not found: {args.weights}")
    if not Path(args.data).is_file():
        raise UsageError(f"data manifest not found: {args.data}")
    named, meta = read_weights(args.weights)
    spec = NetworkSpec.from_dict(meta["network"])
    weights = WeightSet.from_named(named)
    check_shapes(spec, weights)
    n_out = spec.layer_sizes[-1]
    ds = _bin(read_manifest(args.data, n_out), int(meta.get("bin_factor", 1)))
    sur = meta.get("surrogate", {})
    cfg = TrainConfig(warmup=meta.get("warmup", 5), kernel_tau=meta.get("kernel_tau"),
                      surrogate=SurrogateConfig(sur.get("kind", "fast-sigmoid"),
                                                sur.get("param", 10.0)))
    acc = evaluate(spec, weights, ds, cfg)
    preds = predict(spec, weights, ds.inputs, cfg)
    confusion = np.zeros((n_out, n_out), dtype=np.int64)
    np.add.at(confusion, (ds.labels, preds), 1)
    print(f"accuracy,{acc:.6f}")
    print("true\\pred," + ",".join(str(c) for c in range(n_out)))
    for c in range(n_out):
        print(f"{c}," + ",".join(str(int(v)) for v in confusion[c]))
    return EXIT_OK


def run_gradcheck(cfg: config.RunConfig, corrupt: bool = False, max_entries: int | None = None):
    gc = cfg.gradcheck
    weights, x, d = make_problem(cfg.network, gc.timesteps, gc.seed, gc.batch, gc.steepness)
    return check_gradients(cfg.network, weights, x, d, steepness=gc.steepness,
                           fd_step=gc.fd_step, corrupt=corrupt, max_entries=max_entries,
                           seed=gc.seed)


def cmd_gradcheck(args) -> int:
    cfg = config.load(args.config) if args.config else config.parse(DEFAULT_GRADCHECK_CONFIG)
    t0 = time.perf_counter()
    report = run_gradcheck(cfg, corrupt=args.corrupt_gradient, max_entries=args.max_entries)
    tol = cfg.gradcheck.tolerance
    for cls in TENSOR_CLASSES:
        if cls in report.max_rel_error:
            err = report.max_rel_error[cls]
            print(f"{cls:6s} max_rel_error={err:.3e} {'PASS' if err < tol else 'FAIL'}")
        else:
            print(f"{cls:6s} absent from this architecture")
    print(f"checked {report.checked} entries in {time.perf_counter() - t0:.1f}s, "
          f"tolerance {tol:g}")
    return EXIT_OK if report.passed(tol) else EXIT_RUNTIME


def cmd_equivcheck(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    rows = analysis.sweep(range(args.seeds))
    analysis.write_report(args.out, rows)
    worst = max(r.deviation for r in rows)
    ok = worst < args.tolerance
    print(f"seeds={len(rows)} max_deviation={worst:.3e} tolerance={args.tolerance:g} "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_gendata(args) -> int:
    cfg = config.load(args.spec)
    if cfg.data.source != "synthetic":
        raise config.ConfigError("gen-data needs [data] source = synthetic")
    train_set, test_set = generate(cfg.data.synth)
    out = Path(args.out)
    for name, ds in (("train", train_set), ("test", test_set)):
        manifest = write_dataset(out / name, ds)
        print(f"{name}: {len(ds)} samples -> {manifest}")
    return EXIT_OK


DEFAULT_GRADCHECK_CONFIG = """
[network]
layer_sizes = 8,12,12,12,4
self_recurrent = true,true,true
skip_edges = 1-3
input_mode = analog-current

[lif]
tau_m = 16
tau_s = 8
v_th = 1.0
reset_mode = to-zero

[gradcheck]
timesteps = 25
seed = 0
steepness = 4
fd_step = 1e-5
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scsr-snn",
                                     description="Skip-connected self-recurrent SNN toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override [train] seed")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock time in metrics.csv (breaks byte-reproducibility)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate saved weights on a manifest")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True, help="manifest CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check (smooth gate)")
    p.add_argument("--config", default=None, help="config file (default: built-in small net)")
    p.add_argument("--max-entries", type=int, default=None,
                   help="probe at most this many entries per tensor")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("equivcheck", help="two-layer vs combined recurrence sweep")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--out", default="equivcheck.csv", help="CSV report path")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_equivcheck)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as SCSR files")
    p.add_argument("--spec", required=True, help="config file with a [data] section")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gendata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (config.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
