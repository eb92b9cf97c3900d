import struct

import numpy as np
import pytest

from scsr_snn.data import (Dataset, FormatError, SynthSpec, generate, read_manifest,
                           read_raster, read_weights, time_bin_downsample, write_dataset,
                           write_raster, write_weights)
from scsr_snn.loss import vr_filter


def _bits(s: str) -> np.ndarray:
    return np.array([int(c) for c in s], dtype=np.uint8)


class TestDownsample:
    def test_identity(self, rng):
        r = (rng.random((3, 17)) < 0.3).astype(np.uint8)
        assert np.array_equal(time_bin_downsample(r, 1), r)

    def test_hand_example(self):
        assert time_bin_downsample(_bits("010010"), 3).tolist() == [1, 1]

    def test_zero(self):
        assert not time_bin_downsample(np.zeros((2, 10), np.uint8), 4).any()

    def test_ceil_length(self):
        out = time_bin_downsample(_bits("0000001"), 3)
        assert out.tolist() == [0, 0, 1]

    def test_spike_count_not_increased(self, rng):
        r = (rng.random((5, 40)) < 0.4).astype(np.uint8)
        assert time_bin_downsample(r, 3).sum() <= r.sum()

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            time_bin_downsample(np.zeros(4), 0)


class TestRaster:
    def test_binary_round_trip(self, tmp_path, rng):
        r = (rng.random((7, 33)) < 0.5).astype(np.uint8)
        write_raster(tmp_path / "a.scsr", r)
        back = read_raster(tmp_path / "a.scsr")
        assert back.dtype == np.uint8 and np.array_equal(back, r)

    def test_analog_bit_exact(self, tmp_path, rng):
        r = rng.normal(size=(4, 9)).astype(np.float32)
        r[0, 0] = -0.0
        write_raster(tmp_path / "a.scsr", r)
        assert read_raster(tmp_path / "a.scsr").tobytes() == r.tobytes()

    def test_header_layout(self, tmp_path):
        write_raster(tmp_path / "a.scsr", np.array([[1, 0, 1]], dtype=np.uint8))
        blob = (tmp_path / "a.scsr").read_bytes()
        assert blob[:4] == b"SCSR"
        assert struct.unpack("<III", blob[4:16]) == (1, 1, 3)
        assert blob[16] == 0 and blob[17:] == b"\x01\x00\x01"

    @pytest.mark.parametrize("mutate, offset", [
        (lambda b: b"XXXX" + b[4:], 0),
        (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], 4),
        (lambda b: b[:-2], 18),
        (lambda b: b[:10], 10),
        (lambda b: b + b"\x00", 20),
    ])
    def test_format_errors(self, tmp_path, mutate, offset):
        p = tmp_path / "a.scsr"
        write_raster(p, np.ones((1, 3), dtype=np.uint8))
        p.write_bytes(mutate(p.read_bytes()))
        with pytest.raises(FormatError) as info:
            read_raster(p)
        assert info.value.offset == offset
        assert f"offset {offset}" in str(info.value)


class TestManifest:
    def test_round_trip(self, tmp_path):
        tr, _ = generate(SynthSpec(class_count=2, channels=3, timesteps=8, spikes_per_template=2,
                                   train_per_class=3, test_per_class=0))
        manifest = write_dataset(tmp_path, tr)
        back = read_manifest(manifest, 2)
        assert np.array_equal(back.inputs, tr.inputs)
        assert np.array_equal(back.labels, tr.labels)

    def test_missing_file_listed(self, tmp_path):
        (tmp_path / "m.csv").write_text("nothere.scsr,0\n")
        with pytest.raises(FileNotFoundError, match="nothere.scsr"):
            read_manifest(tmp_path / "m.csv")


class TestGenerate:
    def test_zero_jitter_matches_template(self):
        tr, te = generate(SynthSpec(jitter_std=0.0, train_per_class=3, test_per_class=2))
        for ds in (tr, te):
            for c in range(4):
                group = ds.inputs[ds.labels == c]
                assert all(np.array_equal(g, group[0]) for g in group)
        assert np.array_equal(tr.inputs[tr.labels == 1][0], te.inputs[te.labels == 1][0])

    def test_same_seed_identical(self):
        a, b = generate(SynthSpec(seed=4)), generate(SynthSpec(seed=4))
        assert a[0].inputs.tobytes() == b[0].inputs.tobytes()
        assert a[1].labels.tobytes() == b[1].labels.tobytes()

    def test_class_balance(self):
        spec = SynthSpec()
        tr, te = generate(spec)
        assert np.bincount(tr.labels).tolist() == [spec.train_per_class] * 4
        assert np.bincount(te.labels).tolist() == [spec.test_per_class] * 4

    def test_infeasible(self):
        with pytest.raises(ValueError):
            generate(SynthSpec(timesteps=10, spikes_per_template=11))
        with pytest.raises(ValueError):
            generate(SynthSpec(jitter_std=-1))

    def test_nearest_template_oracle(self):
        # templates regenerated with jitter 0 share the default seed's draws
        spec = SynthSpec()
        templates, _ = generate(SynthSpec(jitter_std=0.0, train_per_class=1, test_per_class=0))
        _, te = generate(spec)
        ft = vr_filter(templates.inputs.astype(float), 8)
        fx = vr_filter(te.inputs.astype(float), 8)
        dist = ((fx[:, None] - ft[None]) ** 2).sum(axis=(-1, -2))
        acc = np.mean(dist.argmin(axis=1) == te.labels)
        assert acc > 0.95


def test_dataset_label_check():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 1)), [0, 3], 3)


def test_weights_round_trip(tmp_path, rng):
    named = {"W1": rng.normal(size=(3, 2)), "theta1": np.full(3, 0.9375), "Ws1": rng.normal(size=3)}
    write_weights(tmp_path / "w.scsw", named, {"a": 1})
    back, meta = read_weights(tmp_path / "w.scsw")
    assert meta == {"a": 1}
    for k in named:
        assert back[k].tobytes() == named[k].tobytes()
    blob = (tmp_path / "w.scsw").read_bytes()
    (tmp_path / "w.scsw").write_bytes(blob[:-4])
    with pytest.raises(FormatError):
        read_weights(tmp_path / "w.scsw")
