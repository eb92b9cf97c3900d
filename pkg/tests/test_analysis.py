import numpy as np
import pytest

from scsr_snn.analysis import (LinearGateConfig, SingularMatrixError, combine_two_layer,
                               random_case, random_well_conditioned, sweep, verify_equivalence,
                               write_report)


def test_closed_form_identity():
    cfg = LinearGateConfig(h=1.0, theta_m=0.9375, W_next=np.eye(3), Ws=np.zeros(3))
    w1, w2 = combine_two_layer(cfg)
    np.testing.assert_allclose(w1, 0.9375 * np.eye(3), atol=1e-15)
    np.testing.assert_allclose(w2, -0.87890625 * np.eye(3), atol=1e-15)


def test_w2_is_minus_theta_w1(rng):
    cfg = LinearGateConfig(0.7, 0.9, random_well_conditioned(5, rng), rng.uniform(-0.1, 0.1, 5))
    w1, w2 = combine_two_layer(cfg)
    np.testing.assert_array_equal(w2, -0.9 * w1)


def test_diagonal_commutes(rng):
    ws = rng.uniform(-0.1, 0.1, 4)
    cfg = LinearGateConfig(2.0, 0.8, np.diag(rng.uniform(0.5, 2, 4)), ws)
    w1, _ = combine_two_layer(cfg)
    np.testing.assert_allclose(w1, np.diag(0.8 / 2.0 + ws), atol=1e-14)


def test_singular_rejected():
    w = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError, match="condition"):
        combine_two_layer(LinearGateConfig(1.0, 0.9, w, np.zeros(2)))


def test_invalid_config():
    with pytest.raises(ValueError):
        LinearGateConfig(0.0, 0.9, np.eye(2), np.zeros(2))


def test_random_ten_neurons(rng):
    cfg = LinearGateConfig(1.0, 0.9375, random_well_conditioned(10, rng),
                           rng.uniform(-0.03, 0.03, 10))
    assert verify_equivalence(cfg, rng.uniform(0, 1, (10, 100))) < 1e-9


def test_scalar_case_exact(rng):
    cfg = LinearGateConfig(1.0, 0.9375, np.eye(4), np.zeros(4))
    assert verify_equivalence(cfg, rng.uniform(0, 1, (4, 80))) < 1e-12


def test_orthogonal_similarity_invariance():
    cfg, a_in = random_case(11)
    base = verify_equivalence(cfg, a_in)
    rng = np.random.default_rng(0)
    for _ in range(10):
        q, _ = np.linalg.qr(rng.standard_normal((cfg.size, cfg.size)))
        rotated = LinearGateConfig(cfg.h, cfg.theta_m, q @ cfg.W_next, cfg.Ws, cfg.W_in @ q.T)
        dev = verify_equivalence(rotated, q @ a_in)
        assert abs(dev - base) < 1e-8


def test_spiking_mode_is_diagnostic(rng):
    cfg, a_in = random_case(3)
    dev = verify_equivalence(cfg, 3 * a_in, mode="spiking")
    assert np.isfinite(dev) and dev >= 0
    with pytest.raises(ValueError):
        verify_equivalence(cfg, a_in, mode="other")


def test_sweep_and_report(tmp_path):
    rows = sweep(range(5))
    assert all(r.deviation < 1e-9 for r in rows)
    assert all(2 <= r.size <= 20 and r.n_steps <= 200 for r in rows)
    write_report(tmp_path / "r.csv", rows)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "seed,size,N_t,deviation" and len(lines) == 6
