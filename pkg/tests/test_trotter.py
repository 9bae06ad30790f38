import csv
import math

import numpy as np
import pytest

from stochfeyn import trotter as tr
from stochfeyn.errors import PreconditionError, SupportError
from stochfeyn.evolve import PhysConfig, apply_kernel, heat_terminal_solve, record_from_function
from stochfeyn.grid import ComplexField, GridSpec, l2_distance
from stochfeyn.scenarios import build_scenario
from stochfeyn.states import Potential, free_packet


@pytest.fixture(scope="module")
def coherent():
    return build_scenario("harmonic_coherent")


@pytest.fixture(scope="module")
def ou():
    return build_scenario("ou_feynman_kac")


@pytest.fixture(scope="module")
def quantum_scan(coherent):
    return tr.convergence_scan(coherent.initial_field(), coherent.cfg, 1.0, [8, 16, 32, 64])


def test_quantum_first_order(quantum_scan):
    runs, ratios = quantum_scan
    assert math.isnan(ratios[0])
    assert all(1.6 <= r <= 2.4 for r in ratios[1:])
    assert runs[-1].l2_error <= 0.02


def test_heat_first_order(ou):
    exact = ComplexField.from_function(ou.grid, lambda x: ou.closed_form(x, 0.0), 1.0)
    runs, ratios = tr.convergence_scan(ou.initial_field(), ou.cfg, 1.0, [8, 16, 32, 64],
                                       kind="heat", reference=exact)
    assert all(1.6 <= r <= 2.4 for r in ratios[1:])
    assert runs[-1].l2_error <= 0.02
    assert all(r.clipped == 0 for r in runs)


def test_potential_after_kernel_also_first_order(coherent):
    _, ratios = tr.convergence_scan(coherent.initial_field(), coherent.cfg, 1.0, [16, 32],
                                    potential_first=False)
    assert 1.6 <= ratios[1] <= 2.4


def test_single_free_slice_is_kernel_application():
    g = GridSpec()
    cfg = PhysConfig()
    f = ComplexField.from_function(g, lambda x: free_packet(x, 0.0))
    one = tr.trotter_evolve(f, cfg, 0.5, 1, method="kernel", reference=None)
    assert np.array_equal(one.result.values, apply_kernel(f, 0.5, "quantum", cfg).values)


@pytest.mark.parametrize("dts", [0.25, 0.5, 1.0])
def test_free_slice_matches_spreading_packet(dts):
    free = build_scenario("free_packet")
    one = tr.trotter_step_quantum(free.initial_field(), dts, free.cfg)
    exact = ComplexField.from_function(free.grid, lambda x: free.closed_form(x, dts))
    assert l2_distance(one, exact) <= 1e-6


def test_spectral_free_step_matches_kernel_above_threshold():
    g = GridSpec()
    cfg = PhysConfig()
    f = ComplexField.from_function(g, lambda x: free_packet(x, 0.0))
    a = tr.free_step_spectral(f.values, g, 0.5, "quantum", cfg)
    b = apply_kernel(f, 0.5, "quantum", cfg).values
    assert np.abs(a - b).max() < 1e-8


@pytest.mark.parametrize("method,dts", [("kernel", 0.125), ("spectral", 1 / 64)])
def test_slice_preserves_norm(coherent, method, dts):
    psi = coherent.initial_field()
    nxt = tr.trotter_step_quantum(psi, dts, coherent.cfg, method=method)
    assert abs(nxt.norm2() - psi.norm2()) <= 1e-6


def test_small_slice_warning(coherent):
    run = tr.trotter_evolve(coherent.initial_field(), coherent.cfg, 0.5, 64, reference=None)
    assert run.method == "spectral"
    assert any("threshold" in w for w in run.warnings)


def test_tail_loss_raises():
    g = GridSpec(4.0, 256)
    cfg = PhysConfig()
    f = ComplexField.from_function(g, lambda x: free_packet(x, 0.0, k0=3.0))
    with pytest.raises(SupportError):
        tr.trotter_evolve(f, cfg, 1.0, 4, reference=None)


def test_bad_arguments(coherent):
    with pytest.raises(PreconditionError):
        tr.trotter_evolve(coherent.initial_field(), coherent.cfg, 1.0, 0)
    with pytest.raises(PreconditionError):
        tr.trotter_evolve(coherent.initial_field(), coherent.cfg, 1.0, 4, kind="wave")


def test_convergence_csv(tmp_path, quantum_scan):
    runs, ratios = quantum_scan
    tr.write_convergence_csv(tmp_path / "c.csv", runs, ratios)
    with open(tmp_path / "c.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["l"]) for r in rows] == [8, 16, 32, 64]
    assert float(rows[1]["ratio_to_prev"]) == pytest.approx(ratios[1])


@pytest.fixture(scope="module")
def heat_records():
    g = GridSpec()
    cfg = PhysConfig()
    one = heat_terminal_solve(ComplexField.from_function(g, np.ones_like), cfg, 0.0, 1.0)
    expo = heat_terminal_solve(ComplexField.from_function(g, lambda x: np.exp(0.5 * x)), cfg, 0.0, 1.0)
    return one, expo


def test_prop7_constant_h(heat_records):
    assert tr.prop7_kernel_check(heat_records[0], tolerance=1e-6).passed


def test_prop7_exponential_h_and_independence(heat_records):
    one, expo = heat_records
    assert tr.prop7_kernel_check(expo).passed
    assert tr.prop7_independence(one, expo).passed


def test_prop7_requires_free_heat_record(ou):
    with pytest.raises(PreconditionError):
        tr.prop7_kernel_check(ou.record())


def test_pq_independence():
    g = GridSpec()
    cfg = PhysConfig(potential=Potential.zero())
    a = record_from_function(lambda x, t: free_packet(x, t), g, cfg, 0.0, 0.5)
    b = record_from_function(lambda x, t: free_packet(x, t, s0=1.3, k0=-0.5), g, cfg, 0.0, 0.5)
    pts = g.x[np.abs(g.x) <= 3][::8]
    rep = tr.pq_independence_check(a, b, 0.0, 0.5, pts, pts)
    assert rep.passed
    # the conditional kernels themselves do depend on the solution
    assert rep.details["max_change_in_p_q"] > 1e-3
