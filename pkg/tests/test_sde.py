import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochfeyn import sde
from stochfeyn.errors import PreconditionError
from stochfeyn.evolve import PhysConfig, record_from_function
from stochfeyn.fields import DriftTable
from stochfeyn.grid import GridSpec
from stochfeyn.states import Potential, harmonic_ground


@pytest.fixture(scope="module")
def ground():
    g = GridSpec()
    cfg = PhysConfig(potential=Potential.harmonic())
    return record_from_function(harmonic_ground, g, cfg, 0.0, 0.5)


@pytest.fixture(scope="module")
def ground_paths(ground):
    return sde.simulate_forward(ground, 20000, 1e-3, 7)


def test_path_seeds_stable_and_distinct():
    a = sde.path_seeds(7, range(100))
    assert np.array_equal(a, sde.path_seeds(7, range(100)))
    assert len(np.unique(a)) == 100
    assert not np.array_equal(a, sde.path_seeds(8, range(100)))
    assert np.array_equal(sde.path_seeds(7, [42]), a[42:43])


@settings(max_examples=10)
@given(seed=st.integers(0, 2 ** 64 - 1), split=st.integers(1, 29))
def test_seed_determinism_and_batch_independence(seed, split):
    g = GridSpec(8.0, 128)
    tab = DriftTable.constant(g, np.linspace(0, 0.02, 21), 0.2, 0.2)
    full = sde.simulate_forward(tab, 30, 1e-3, seed, x0=0.0)
    again = sde.simulate_forward(tab, 30, 1e-3, seed, x0=0.0)
    a = sde.simulate_forward(tab, split, 1e-3, seed, x0=0.0)
    b = sde.simulate_forward(tab, 30 - split, 1e-3, seed, x0=0.0, path_offset=split)
    assert np.array_equal(full.positions, again.positions)
    assert np.array_equal(full.positions, np.concatenate([a.positions, b.positions], axis=1))


def test_missing_seed():
    g = GridSpec(8.0, 128)
    tab = DriftTable.constant(g, [0.0, 0.01], 0.0, 0.0)
    with pytest.raises(PreconditionError):
        sde.simulate_forward(tab, 10, 1e-3, None, x0=0.0)


def test_constant_drift_moments():
    # x(t) = x0 + b t + w(t): mean b t, variance t
    g = GridSpec(12.0, 256)
    tab = DriftTable.constant(g, np.linspace(0, 1, 11), 0.3, 0.3)
    pe = sde.simulate_forward(tab, 20000, 0.1, 3, x0=0.0, store="endpoints")
    x = pe.positions[-1]
    se = 1 / np.sqrt(len(x))
    assert abs(x.mean() - 0.3) < 4 * se
    assert abs(x.var() - 1.0) < 4 * np.sqrt(2) * se


def test_reconstructed_forward_noise_is_injected_noise():
    g = GridSpec(8.0, 128)
    tab = DriftTable.constant(g, np.linspace(0, 0.05, 51), 0.4, -0.2)
    pe = sde.simulate_forward(tab, 50, 1e-3, 11, x0=0.5)
    qn = sde.reconstruct_quantum_noise(pe, tab)
    assert np.allclose(qn.d_plus_w_plus, pe.noise_plus[1:], atol=1e-13)


def test_clamping_counted():
    g = GridSpec(2.0, 64)
    tab = DriftTable.constant(g, np.linspace(0, 0.1, 11), 100.0, 100.0)
    pe = sde.simulate_forward(tab, 10, 0.01, 1, x0=0.0)
    assert pe.clamp_hits > 0
    assert pe.positions.max() <= 2.0


def test_record_step_guard(ground):
    with pytest.raises(PreconditionError):
        sde.simulate_forward(ground, 10, 5e-4, 1)
    with pytest.raises(PreconditionError):
        sde.simulate_forward(ground, 10, 1e-3, 1, t_end=0.7)


def test_inverse_cdf_sampling(ground):
    rho = np.abs(ground.values[0]) ** 2
    u = (np.arange(20000) + 0.5) / 20000
    xs = sde.sample_inverse_cdf(rho, ground.grid, u)
    assert sde.tv_distance(xs, rho, ground.grid) < 0.01


def test_born_rule_forward(ground_paths, ground):
    assert sde.born_rule_check(ground_paths, ground) <= 0.05


def test_born_rule_reverse(ground):
    pe = sde.simulate_reverse(ground, 20000, 1e-3, 5, store="endpoints")
    rho = np.abs(ground.values[0]) ** 2
    assert sde.tv_distance(pe.positions[0], rho, ground.grid) <= 0.05


def test_conditional_drifts(ground_paths, ground):
    edges = np.linspace(-2, 2, 11)
    for direction in ("forward", "backward", "difference"):
        est = sde.conditional_drift_estimate(ground_paths, direction, (0.002, 0.498), edges, ground)
        assert est.pass_fraction() >= 0.8
    diff = sde.conditional_drift_estimate(ground_paths, "difference", (0.002, 0.498), edges, ground)
    assert np.allclose(diff.target, -2 * diff.centers, atol=0.05)


def test_quadratic_variation(ground_paths, ground):
    qv = sde.quadratic_variation(ground_paths, ground)
    assert qv.error_per_unit_time <= 0.02
    # the plain product (d_b w_q)^2 has mean close to zero rather than -i dt
    assert abs(qv.product_sum) < 0.05


def test_qv_combine_matches_single(ground):
    a = sde.simulate_forward(ground, 300, 1e-3, 9)
    b1 = sde.simulate_forward(ground, 100, 1e-3, 9)
    b2 = sde.simulate_forward(ground, 200, 1e-3, 9, path_offset=100)
    whole = sde.quadratic_variation(a, ground)
    parts = sde.QVReport.combine([sde.quadratic_variation(b1, ground), sde.quadratic_variation(b2, ground)])
    assert whole.qv_sum == parts.qv_sum


def test_bin_average_known_values():
    x = np.array([0.1, 0.2, 0.6, 0.7, 0.8, 1.5])
    y = np.array([1.0, 3.0, 2.0, 2.0, 5.0, 9.0]) * (1 + 1j)
    est = sde.bin_average(x, y, np.array([0.0, 0.5, 1.0]), min_count=2)
    assert list(est.counts) == [2, 3]
    assert est.mean[0] == pytest.approx(2 + 2j)
    assert est.mean[1] == pytest.approx(3 + 3j)
    assert est.stderr[0] == pytest.approx(np.sqrt(2) * np.sqrt(2) / np.sqrt(2))


def test_binary_roundtrip(tmp_path, ground):
    pe = sde.simulate_forward(ground, 5, 1e-3, 2, t_end=0.01)
    pe.to_binary(tmp_path / "p.bin")
    raw = (tmp_path / "p.bin").read_bytes()
    assert len(raw) == 24 + 8 * 5 * 11
    dt, pos = sde.PathEnsemble.read_binary(tmp_path / "p.bin")
    assert dt == pytest.approx(1e-3)
    assert np.array_equal(pos, pe.positions.T)


def test_tv_distance_zero_for_exact_masses(ground):
    rho = np.abs(ground.values[0]) ** 2
    edges, emp, exact = sde.histogram_masses(np.zeros(1), rho, ground.grid)
    assert exact.sum() == pytest.approx(1.0)
    assert len(edges) == 65
