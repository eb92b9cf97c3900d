"""Synthetic spike datasets, time-bin downsampling, and the SCSR binary formats.

Raster file layout (all integers little-endian)::

    offset 0   4 bytes   magic b"SCSR"
    offset 4   u32       format version (1)
    offset 8   u32       channels
    offset 12  u32       timesteps
    offset 16  u8        dtype flag: 0 = binary u8, 1 = float32
    offset 17  ...       channel-major data

Labels live beside the rasters in a manifest of ``relative_path,label`` lines.

Weight files use the same header discipline with magic b"SCSW": version,
a UTF-8 JSON metadata block, then a tensor count and one record per tensor
(name, ndim, dims, float64 data).
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RASTER_MAGIC = b"SCSR"
WEIGHTS_MAGIC = b"SCSW"
FORMAT_VERSION = 1
DTYPE_BINARY = 0
DTYPE_ANALOG = 1
_HEADER = struct.Struct("<4sIIIB")


class FormatError(ValueError):
    def __init__(self, msg: str, offset: int | None = None, path=None):
        where = f" at offset {offset}" if offset is not None else ""
        src = f"{path}: " if path is not None else ""
        super().__init__(f"{src}{msg}{where}")
        self.offset = offset


@dataclass
class Dataset:
    inputs: np.ndarray  # (samples, channels, timesteps)
    labels: np.ndarray  # (samples,)
    class_count: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("label outside [0, class_count)")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class SynthSpec:
    class_count: int = 4
    channels: int = 40
    timesteps: int = 100
    spikes_per_template: int = 20
    jitter_std: float = 2.0
    train_per_class: int = 50
    test_per_class: int = 25
    seed: int = 0

    def check(self) -> None:
        if self.class_count < 1 or self.channels < 1 or self.timesteps < 1:
            raise ValueError("class_count, channels and timesteps must be >= 1")
        if not 0 <= self.spikes_per_template <= self.timesteps:
            raise ValueError(f"spikes_per_template={self.spikes_per_template} does not fit "
                             f"in {self.timesteps} timesteps")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be >= 0")
        if self.train_per_class < 0 or self.test_per_class < 0:
            raise ValueError("sample counts must be >= 0")


def make_templates(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """One binary raster per class; each channel carries ``spikes_per_template``
    distinct spike times."""
    templates = np.zeros((spec.class_count, spec.channels, spec.timesteps), dtype=np.uint8)
    for c in range(spec.class_count):
        for ch in range(spec.channels):
            times = rng.choice(spec.timesteps, size=spec.spikes_per_template, replace=False)
            templates[c, ch, times] = 1
    return templates


def jitter(template: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    """Move every spike by a rounded Gaussian offset; colliding spikes merge."""
    if std == 0:
        return template.copy()
    ch, t = np.nonzero(template)
    shift = np.rint(rng.normal(0.0, std, size=t.shape)).astype(np.int64)
    t = np.clip(t + shift, 0, template.shape[-1] - 1)
    out = np.zeros_like(template)
    out[ch, t] = 1
    return out


def generate(spec: SynthSpec) -> tuple[Dataset, Dataset]:
    spec.check()
    rng = np.random.default_rng(spec.seed)
    templates = make_templates(spec, rng)
    splits = []
    for per_class in (spec.train_per_class, spec.test_per_class):
        xs, ys = [], []
        for c in range(spec.class_count):
            for _ in range(per_class):
                xs.append(jitter(templates[c], spec.jitter_std, rng))
                ys.append(c)
        inputs = (np.stack(xs) if xs
                  else np.zeros((0, spec.channels, spec.timesteps), dtype=np.uint8))
        splits.append(Dataset(inputs, np.array(ys, dtype=np.int64), spec.class_count))
    return splits[0], splits[1]


def time_bin_downsample(raster: np.ndarray, factor: int) -> np.ndarray:
    """OR-pool the last (time) axis into bins of ``factor`` steps."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    raster = np.asarray(raster)
    if factor == 1:
        return raster.copy()
    steps = raster.shape[-1]
    bins = -(-steps // factor)
    pad = bins * factor - steps
    padded = np.concatenate([raster, np.zeros((*raster.shape[:-1], pad), raster.dtype)], axis=-1)
    return padded.reshape(*raster.shape[:-1], bins, factor).max(axis=-1)


def write_raster(path, data: np.ndarray) -> None:
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {data.shape}")
    if data.dtype.kind == "f":
        flag, payload = DTYPE_ANALOG, data.astype("<f4")
    else:
        if not np.all((data == 0) | (data == 1)):
            raise ValueError("integer rasters must be binary")
        flag, payload = DTYPE_BINARY, data.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RASTER_MAGIC, FORMAT_VERSION, data.shape[0], data.shape[1], flag))
        fh.write(np.ascontiguousarray(payload).tobytes())


def read_raster(path) -> np.ndarray:
    """Binary rasters come back as uint8, analog ones as float32."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError("truncated header", len(blob), path)
    magic, version, channels, steps, flag = _HEADER.unpack_from(blob, 0)
    if magic != RASTER_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0, path)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4, path)
    if flag == DTYPE_BINARY:
        dtype = np.dtype(np.uint8)
    elif flag == DTYPE_ANALOG:
        dtype = np.dtype("<f4")
    else:
        raise FormatError(f"unknown dtype flag {flag}", 16, path)
    need = _HEADER.size + channels * steps * dtype.itemsize
    if len(blob) < need:
        raise FormatError(f"truncated data: need {need} bytes, have {len(blob)}", len(blob), path)
    if len(blob) > need:
        raise FormatError("trailing bytes after data", need, path)
    out = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size).reshape(channels, steps)
    if flag == DTYPE_BINARY and np.any(out > 1):
        bad = int(np.argmax(out.ravel() > 1))
        raise FormatError("non-binary value in binary raster", _HEADER.size + bad, path)
    return out.astype(np.float32 if flag == DTYPE_ANALOG else np.uint8)


def write_dataset(directory, dataset: Dataset, manifest_name: str = "manifest.csv",
                  prefix: str = "sample") -> Path:
    """Write one raster per sample plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(len(str(len(dataset) - 1)), 4)
    lines = []
    for i, (x, y) in enumerate(zip(dataset.inputs, dataset.labels)):
        name = f"{prefix}_{i:0{width}d}.scsr"
        write_raster(directory / name, x)
        lines.append(f"{name},{int(y)}\n")
    manifest = directory / manifest_name
    manifest.write_text("".join(lines))
    return manifest


def read_manifest(path, class_count: int | None = None) -> Dataset:
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        rel, sep, label = line.rpartition(",")
        if not sep:
            raise FormatError(f"line {lineno}: expected 'relative_path,label'", path=path)
        entries.append((rel, int(label)))
    missing = [rel for rel, _ in entries if not (base / rel).is_file()]
    if missing:
        raise FileNotFoundError(f"{path}: missing raster files: {', '.join(missing)}")
    xs = [read_raster(base / rel) for rel, _ in entries]
    labels = np.array([y for _, y in entries], dtype=np.int64)
    if xs and len({x.shape for x in xs}) != 1:
        raise FormatError("rasters in one manifest must share dimensions", path=path)
    inputs = np.stack(xs) if xs else np.zeros((0, 0, 0), dtype=np.uint8)
    if class_count is None:
        class_count = int(labels.max()) + 1 if len(labels) else 0
    return Dataset(inputs, labels, class_count)


def write_weights(path, named: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Serialise named float64 tensors; ``meta`` is stored as sorted JSON."""
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<4sII", WEIGHTS_MAGIC, FORMAT_VERSION, len(meta_blob)), meta_blob,
             struct.pack("<I", len(named))]
    for name in sorted(named):
        arr = np.asarray(named[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def read_weights(path) -> tuple[dict[str, np.ndarray], dict]:
    blob = Path(path).read_bytes()
    pos = 0

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise FormatError("truncated weights file", pos, path)
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    magic, version, meta_len = take("<4sII")
    if magic != WEIGHTS_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0, path)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4, path)
    if pos + meta_len > len(blob):
        raise FormatError("truncated metadata", pos, path)
    meta = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        dims = take(f"<{ndim}I")
        nbytes = int(np.prod(dims, dtype=np.int64)) * 8
        if pos + nbytes > len(blob):
            raise FormatError(f"truncated data for tensor {name!r}", pos, path)
        tensors[name] = np.frombuffer(blob, dtype="<f8", count=nbytes // 8,
                                      offset=pos).reshape(dims).astype(np.float64)
        pos += nbytes
    if pos != len(blob):
        raise FormatError("trailing bytes after last tensor", pos, path)
    return tensors, meta
