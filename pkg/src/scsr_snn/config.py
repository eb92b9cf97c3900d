"""INI run configuration: strict parsing into network, training and data settings."""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backprop import SurrogateConfig
from .data import SynthSpec
from .network import LifConfig, NetworkSpec, validate
from .optim import TrainConfig


class ConfigError(ValueError):
    pass


# section -> key -> converter name
SCHEMA: dict[str, dict[str, str]] = {
    "network": {"layer_sizes": "ints", "self_recurrent": "bools", "skip_edges": "edges",
                "input_mode": "str"},
    "lif": {"tau_m": "float", "tau_s": "float", "v_th": "float", "reset_mode": "str"},
    "train": {"epochs": "int", "batch_size": "int", "lr": "float", "bip": "bool",
              "bip_output": "bool", "bip_lr_scale": "float", "surrogate": "str",
              "surrogate_param": "float", "warmup": "int", "seed": "int",
              "target_period": "int", "kernel_tau": "float", "grad_clip": "float"},
    "data": {"source": "str", "class_count": "int", "channels": "int", "timesteps": "int",
             "spikes_per_template": "int", "jitter_std": "float", "train_per_class": "int",
             "test_per_class": "int", "seed": "int", "train_manifest": "str",
             "test_manifest": "str", "bin_factor": "int"},
    "gradcheck": {"timesteps": "int", "seed": "int", "fd_step": "float", "steepness": "float",
                  "tolerance": "float", "batch": "int"},
}
REQUIRED_SECTIONS = ("network",)


@dataclass
class DataConfig:
    source: str = "synthetic"
    synth: SynthSpec = field(default_factory=SynthSpec)
    train_manifest: str | None = None
    test_manifest: str | None = None
    bin_factor: int = 1


@dataclass
class GradcheckConfig:
    timesteps: int = 25
    seed: int = 0
    fd_step: float = 1e-5
    steepness: float = 4.0
    tolerance: float = 1e-4
    batch: int = 2


@dataclass
class RunConfig:
    network: NetworkSpec
    train: TrainConfig
    data: DataConfig
    gradcheck: GradcheckConfig
    base_dir: Path = Path(".")

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed))


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
            if k == key:
                return i
    return None


def _where(text, section, key=None) -> str:
    line = _line_of(text, section, key)
    loc = f"[{section}]" + (f" {key}" if key else "")
    return f"line {line}: {loc}" if line else loc


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "str":
        return raw
    items = [x.strip() for x in raw.split(",") if x.strip()]
    if kind == "ints":
        return [int(x) for x in items]
    if kind == "bools":
        return [_convert("bool", x) for x in items]
    if kind == "edges":
        edges = []
        for item in items:
            a, sep, b = item.partition("-")
            if not sep:
                raise ValueError(f"skip edge {item!r} must look like 'src-target'")
            edges.append((int(a), int(b)))
        return edges
    raise AssertionError(kind)


def parse(text: str, base_dir: Path | str = ".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{_where(text, section)}: unknown section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{_where(text, section, key)}: unknown key {key!r}")
            try:
                values[section][key] = _convert(SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"{_where(text, section, key)}: {exc}") from None
    for section in REQUIRED_SECTIONS:
        if section not in values:
            raise ConfigError(f"missing required section [{section}]")
    return _build(values, text, Path(base_dir))


def _build(values: dict[str, dict], text: str, base_dir: Path) -> RunConfig:
    net = values["network"]
    if "layer_sizes" not in net:
        raise ConfigError("[network] layer_sizes is required")
    lif_vals = values.get("lif", {})
    try:
        lif = LifConfig(**lif_vals)
        spec = NetworkSpec(layer_sizes=net["layer_sizes"],
                           self_recurrent=net.get("self_recurrent"),
                           skip_edges=net.get("skip_edges", []), lif=lif,
                           input_mode=net.get("input_mode", "spike"))
    except ValueError as exc:
        raise ConfigError(f"[network]/[lif]: {exc}") from None
    problems = validate(spec)
    if problems:
        raise ConfigError(f"{_where(text, 'network')}: " + "; ".join(problems))

    tr = dict(values.get("train", {}))
    try:
        surrogate = SurrogateConfig(tr.pop("surrogate", "fast-sigmoid"),
                                    tr.pop("surrogate_param", 10.0))
        if "lr" in tr:
            tr["learning_rate"] = tr.pop("lr")
        train = TrainConfig(surrogate=surrogate, **tr)
    except ValueError as exc:
        raise ConfigError(f"{_where(text, 'train')}: {exc}") from None

    dv = dict(values.get("data", {}))
    source = dv.pop("source", "synthetic")
    if source not in ("synthetic", "manifest"):
        raise ConfigError(f"{_where(text, 'data', 'source')}: source must be "
                          f"'synthetic' or 'manifest', got {source!r}")
    data = DataConfig(source=source, train_manifest=dv.pop("train_manifest", None),
                      test_manifest=dv.pop("test_manifest", None),
                      bin_factor=dv.pop("bin_factor", 1))
    if data.bin_factor < 1:
        raise ConfigError(f"{_where(text, 'data', 'bin_factor')}: must be >= 1")
    if source == "manifest" and not data.train_manifest:
        raise ConfigError("[data] source = manifest needs train_manifest")
    data.synth = SynthSpec(**dv)
    try:
        data.synth.check()
    except ValueError as exc:
        raise ConfigError(f"{_where(text, 'data')}: {exc}") from None

    gradcheck = GradcheckConfig(**values.get("gradcheck", {}))
    return RunConfig(spec, train, data, gradcheck, base_dir)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text, path.parent)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def dump(cfg: RunConfig) -> str:
    """Resolved config text; parsing it yields an equivalent RunConfig."""
    spec, tr, data, gc = cfg.network, cfg.train, cfg.data, cfg.gradcheck
    sections = {
        "network": {
            "layer_sizes": spec.layer_sizes,
            "self_recurrent": spec.self_recurrent,
            "skip_edges": ",".join(f"{a}-{b}" for a, b in spec.skip_edges),
            "input_mode": spec.input_mode.value,
        },
        "lif": {"tau_m": spec.lif.tau_m, "tau_s": spec.lif.tau_s, "v_th": spec.lif.v_th,
                "reset_mode": spec.lif.reset_mode.value},
        "train": {"epochs": tr.epochs, "batch_size": tr.batch_size, "lr": tr.learning_rate,
                  "bip": tr.bip, "bip_output": tr.bip_output, "bip_lr_scale": tr.bip_lr_scale,
                  "surrogate": tr.surrogate.kind.value, "surrogate_param": tr.surrogate.param,
                  "warmup": tr.warmup, "seed": tr.seed, "target_period": tr.target_period,
                  "grad_clip": tr.grad_clip},
        "data": {"source": data.source, "bin_factor": data.bin_factor},
        "gradcheck": vars(gc),
    }
    if tr.kernel_tau is not None:
        sections["train"]["kernel_tau"] = tr.kernel_tau
    if data.source == "synthetic":
        sections["data"].update(vars(data.synth))
    else:
        sections["data"]["train_manifest"] = data.train_manifest
        if data.test_manifest:
            sections["data"]["test_manifest"] = data.test_manifest
    lines = []
    for name, kv in sections.items():
        lines.append(f"[{name}]")
        for k, v in kv.items():
            if name == "network" and k == "skip_edges" and not v:
                continue
            lines.append(f"{k} = {_fmt(v)}")
        lines.append("")
    return "\n".join(lines)
