"""Closed-form states solve the Schrodinger equation (symbolic check) and are normalised."""
import numpy as np
import pytest
import sympy as sp

from stochfeyn.grid import ComplexField
from stochfeyn.states import Potential, coherent_state, free_packet, harmonic_ground

x, t = sp.symbols("x t", real=True)
hb, m, w, s0, k0, q0, p0 = sp.symbols("hbar m omega s0 k0 q0 p0", positive=True)


def _residual(psi, V):
    return sp.simplify((sp.I * hb * sp.diff(psi, t) + hb ** 2 / (2 * m) * sp.diff(psi, x, 2)
                        - V * psi) / psi)


def test_free_packet_symbolic():
    tau = hb * t / (m * s0 ** 2)
    c = 1 + sp.I * tau
    psi = (sp.pi * s0 ** 2) ** sp.Rational(-1, 4) / sp.sqrt(c) * sp.exp(
        -(x - hb * k0 / m * t) ** 2 / (2 * s0 ** 2 * c) + sp.I * k0 * x - sp.I * hb * k0 ** 2 * t / (2 * m))
    assert _residual(psi, 0) == 0


def test_coherent_symbolic():
    a = m * w / hb
    q = q0 * sp.cos(w * t) + p0 / (m * w) * sp.sin(w * t)
    p = p0 * sp.cos(w * t) - m * w * q0 * sp.sin(w * t)
    psi = sp.exp(-a * (x - q) ** 2 / 2 + sp.I * p * x / hb - sp.I * p * q / (2 * hb) - sp.I * w * t / 2)
    assert _residual(psi, m * w ** 2 * x ** 2 / 2) == 0


@pytest.mark.parametrize("fn", [lambda x: free_packet(x, 0.7, s0=0.8, k0=-1.5, x0=0.3),
                                lambda x: harmonic_ground(x, 0.4, omega=1.3),
                                lambda x: coherent_state(x, 2.1, q0=-1.0, p0=0.5)])
def test_normalised(grid, fn):
    assert ComplexField.from_function(grid, fn).norm2() == pytest.approx(1.0, abs=1e-10)


def test_numeric_matches_symbolic_at_point():
    xv, tv = 0.37, 0.81
    a = free_packet(xv, tv, s0=1.2, k0=0.4, hbar=0.9, mass=1.1)
    tau = 0.9 * tv / (1.1 * 1.44)
    c = 1 + 1j * tau
    b = ((np.pi * 1.44) ** -0.25 / np.sqrt(c)
         * np.exp(-(xv - 0.9 * 0.4 / 1.1 * tv) ** 2 / (2 * 1.44 * c) + 0.4j * xv - 0.5j * 0.9 * 0.16 * tv / 1.1))
    assert a == pytest.approx(b, rel=1e-14)


def test_potentials():
    xs = np.linspace(-2, 2, 5)
    assert np.array_equal(Potential.zero()(xs), np.zeros(5))
    assert np.allclose(Potential.harmonic(2.0, 0.5)(xs), 0.5 * 0.5 * 4 * xs ** 2)
    assert np.allclose(Potential.constant(1.5)(xs), 1.5)
    assert Potential.custom(np.cos)(0.0) == pytest.approx(1.0)
    assert Potential.constant(0.0).is_zero() and not Potential.harmonic().is_zero()
