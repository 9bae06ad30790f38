import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochfeyn.errors import NormalizationError, PositivityError, VanishingFieldError
from stochfeyn.evolve import PhysConfig, record_from_function
from stochfeyn.fields import (DriftTable, check_continuity, check_nelson_relation, density_mass,
                              drift_from_h, drift_table, fields_from_psi)
from stochfeyn.grid import ComplexField, GridSpec
from stochfeyn.states import coherent_state, free_packet, harmonic_ground


def _near(grid, x0):
    return int(np.argmin(np.abs(grid.x - x0)))


def test_ground_state_fields(grid, harm_cfg):
    df = fields_from_psi(ComplexField.from_function(grid, harmonic_ground), harm_cfg)
    j = _near(grid, 0.5)
    x = grid.x[j]
    assert df.u[j] == pytest.approx(-x, abs=1e-10)
    assert df.v[j] == pytest.approx(0.0, abs=1e-12)
    assert df.v_q[j] == pytest.approx(1j * x, abs=1e-10)
    assert density_mass(df) == pytest.approx(1.0, abs=1e-10)


def test_free_packet_current(grid, free_cfg):
    # at t = 0, psi'/psi = -x + i k0, so v = k0 up to the three-point truncation
    # (dx^2 / 6) Im(psi'''/psi) = (dx^2 / 6) (3 x^2 k0 - k0^3 - 3 k0)
    k0 = 1.5
    df = fields_from_psi(ComplexField.from_function(grid, lambda x: free_packet(x, k0=k0)), free_cfg)
    x = grid.x
    sel = np.abs(x) < 3
    predicted = grid.dx ** 2 / 6 * (3 * x * x * k0 - k0 ** 3 - 3 * k0)
    assert np.abs(df.v - k0 - predicted)[sel].max() < 1e-6


def test_free_packet_spreading_velocity(grid, free_cfg):
    t = 0.8
    df = fields_from_psi(ComplexField.from_function(grid, lambda x: free_packet(x, t, k0=1.0)), free_cfg)
    # closed form (s0 = 1): v = k0 + (x - k0 t) t / (1 + t^2), u = -(x - k0 t) / (1 + t^2)
    xs = grid.x
    sel = df.guard() & (np.abs(xs) < 3)
    assert np.abs(df.v - (1 + (xs - t) * t / (1 + t * t)))[sel].max() < 2e-3
    assert np.abs(df.u - (-(xs - t) / (1 + t * t)))[sel].max() < 1e-3


@pytest.mark.parametrize("fn", [free_packet, harmonic_ground, coherent_state,
                                lambda x: coherent_state(x, 1.3, q0=-0.7, p0=0.9)])
def test_nelson_relation_and_vq(grid, harm_cfg, fn):
    df = fields_from_psi(ComplexField.from_function(grid, fn), harm_cfg)
    assert check_nelson_relation(df).passed
    assert np.abs(df.v_q - 0.5 * (1 - 1j) * df.b_plus - 0.5 * (1 + 1j) * df.b_minus).max() < 1e-12


@given(alpha=st.floats(0, 2 * np.pi), t=st.floats(0, 2))
def test_global_phase_invariance(alpha, t):
    g = GridSpec(10.0, 256)
    cfg = PhysConfig()
    psi = ComplexField.from_function(g, lambda x: coherent_state(x, t, q0=0.5, p0=0.3))
    a = fields_from_psi(psi, cfg)
    b = fields_from_psi(psi * np.exp(1j * alpha), cfg)
    for name in ("rho", "u", "v", "v_q"):
        assert np.abs(getattr(a, name) - getattr(b, name)).max() <= 1e-10


@pytest.mark.parametrize("n", [1024, 1025])
def test_nodal_state_rejected(harm_cfg, n):
    # even n: the node at x = 0 falls between grid points; odd n: it is a grid point
    g = GridSpec(12.0, n)
    first = ComplexField.from_function(g, lambda x: np.sqrt(2) * x * harmonic_ground(x))
    with pytest.raises(VanishingFieldError):
        fields_from_psi(first, harm_cfg)


def test_normalisation_enforced(grid, harm_cfg):
    with pytest.raises(NormalizationError):
        fields_from_psi(ComplexField.from_function(grid, lambda x: 2 * harmonic_ground(x)), harm_cfg)


def test_continuity(grid, harm_cfg):
    rec = record_from_function(lambda x, t: coherent_state(x, t), grid, harm_cfg, 0.0, 0.4)
    assert check_continuity(rec, 0.3).passed


def test_drift_from_h(grid):
    df = drift_from_h(ComplexField.from_function(grid, lambda x: np.exp(0.5 * x)))
    assert np.abs(df.b_plus - 0.5).max() < 1e-10
    with pytest.raises(PositivityError):
        drift_from_h(ComplexField.from_function(grid, lambda x: x))


def test_drift_table_shapes(grid, harm_cfg):
    rec = record_from_function(harmonic_ground, grid, harm_cfg, 0.0, 0.01)
    tab = drift_table(rec)
    assert tab.b_plus.shape == (11, grid.n_points)
    assert tab.dt == pytest.approx(1e-3)
    c = DriftTable.constant(grid, [0.0, 0.1], 0.3, -0.1)
    assert np.allclose(c.v_q, 0.1 - 0.2j)


def test_fields_csv(tmp_path, grid, harm_cfg):
    df = fields_from_psi(ComplexField.from_function(grid, harmonic_ground), harm_cfg)
    df.to_csv(tmp_path / "f.csv")
    head = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert head == "x,rho,u,v,bplus,bminus,re_vq,im_vq"
    data = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], grid.x)
