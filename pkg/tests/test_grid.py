import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochfeyn.errors import GridMismatchError, PreconditionError
from stochfeyn.grid import (ComplexField, GridSpec, d1, d2, gradient, interp, interp_values,
                            l2_distance, laplacian, quad, trapezoid_weights)


def test_lattice_layout():
    g = GridSpec(12.0, 1024)
    assert g.x[0] == -12.0 and g.x[-1] == 12.0
    assert g.dx == pytest.approx(24.0 / 1023)
    assert np.allclose(np.diff(g.x), g.dx)


@pytest.mark.parametrize("kw", [dict(n_points=8), dict(half_width=-1.0), dict(boundary="periodic")])
def test_invalid_grid(kw):
    with pytest.raises(PreconditionError):
        GridSpec(**kw)


def test_gaussian_normalisation(grid):
    f = ComplexField.from_function(grid, lambda x: np.pi ** -0.25 * np.exp(-x * x / 2))
    assert f.norm2() == pytest.approx(1.0, abs=1e-10)
    assert quad(f).real == pytest.approx(np.sqrt(2) * np.pi ** 0.25, rel=1e-10)


def test_derivatives_of_gaussian(grid):
    x = grid.x
    f = np.exp(-x * x)
    g1 = -2 * x * f
    g2 = (4 * x * x - 2) * f
    assert np.abs(d1(f, grid.dx) - g1).max() < 1e-3
    assert np.abs(d2(f, grid.dx) - g2).max() < 1e-3
    assert np.abs(d1(f, grid.dx, 4) - g1).max() < 1e-6
    assert np.abs(d2(f, grid.dx, 4) - g2).max() < 1e-6


def test_second_order_convergence():
    errs = []
    for n in (257, 513, 1025):
        g = GridSpec(6.0, n)
        f = np.sin(g.x) * np.exp(-g.x ** 2 / 4)
        exact = (np.cos(g.x) - g.x / 2 * np.sin(g.x)) * np.exp(-g.x ** 2 / 4)
        errs.append(np.abs(d1(f, g.dx) - exact).max())
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.1)


@given(c=st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
       order=st.sampled_from([2, 4]))
def test_constants_annihilated(c, order):
    g = GridSpec(5.0, 64)
    f = ComplexField(g, np.full(g.n_points, c))
    scale = max(abs(c), 1.0)
    assert np.abs(gradient(f, order).values).max() <= 1e-12 * scale / g.dx
    assert np.abs(laplacian(f, order).values).max() <= 1e-12 * scale / g.dx ** 2


def test_laplacian_matches_gradient_of_gradient(grid):
    f = ComplexField.from_function(grid, lambda x: np.exp(-x * x / 2) * (1 + 0.5j * x))
    lap = laplacian(f).values
    gg = gradient(gradient(f)).values
    assert np.abs(lap - gg)[2:-2].max() < 2 * grid.dx ** 2 * 3


def test_trapezoid_exact_for_linear():
    g = GridSpec(3.0, 31)
    assert np.dot(trapezoid_weights(g), 2 * g.x + 1) == pytest.approx(6.0, abs=1e-12)


def test_interp_nodes_exact(grid, rng):
    v = rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points)
    idx = rng.integers(0, grid.n_points, 50)
    assert np.array_equal(interp_values(v, grid, grid.x[idx]), v[idx])


def test_interp_linear_between_nodes(grid):
    f = ComplexField.from_function(grid, lambda x: 3 * x - 1j)
    assert interp(f, 0.123456) == pytest.approx(3 * 0.123456 - 1j, abs=1e-12)


def test_boundary_policies():
    g = GridSpec(2.0, 21)
    v = np.arange(21.0)
    assert interp_values(v, g, 3.0) == 0.0
    assert interp_values(v, g.with_boundary("clamp-drift"), 3.0) == 20.0
    with pytest.raises(PreconditionError):
        interp_values(v, g, np.nan)


def test_grid_mismatch():
    a = ComplexField(GridSpec(5.0, 64), np.zeros(64))
    b = ComplexField(GridSpec(5.0, 65), np.zeros(65))
    with pytest.raises(GridMismatchError):
        l2_distance(a, b)
    with pytest.raises(GridMismatchError):
        ComplexField(GridSpec(5.0, 64), np.zeros(10))


@given(alpha=st.floats(-5, 5), beta=st.floats(-5, 5))
def test_stencils_linear(alpha, beta):
    g = GridSpec(4.0, 64)
    f = np.exp(-g.x ** 2)
    h = np.cos(g.x)
    lhs = d2(alpha * f + beta * h, g.dx)
    rhs = alpha * d2(f, g.dx) + beta * d2(h, g.dx)
    assert np.abs(lhs - rhs).max() <= 1e-9 * (1 + abs(alpha) + abs(beta)) / g.dx ** 2
