"""Uniform 1D lattice, finite-difference stencils, quadrature and interpolation.

Every numerical module works on values sampled at ``x_j = -L + j*dx`` with
``dx = 2L/(N-1)``.  The stencil helpers operate along the last axis so that
whole time series (shape ``(n_times, N)``) can be differentiated at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, PreconditionError

BOUNDARY_POLICIES = ("dirichlet-zero", "clamp-drift")


@dataclass(frozen=True)
class GridSpec:
    half_width: float = 12.0
    n_points: int = 1024
    boundary: str = "dirichlet-zero"

    def __post_init__(self):
        if self.n_points < 16:
            raise PreconditionError(f"n_points must be >= 16, got {self.n_points}")
        if not self.half_width > 0:
            raise PreconditionError(f"half_width must be positive, got {self.half_width}")
        if self.boundary not in BOUNDARY_POLICIES:
            raise PreconditionError(f"unknown boundary policy {self.boundary!r}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.half_width + np.arange(self.n_points) * self.dx
        x.flags.writeable = False
        return x

    def same_lattice(self, other: "GridSpec") -> bool:
        return self.half_width == other.half_width and self.n_points == other.n_points

    def with_boundary(self, boundary: str) -> "GridSpec":
        return GridSpec(self.half_width, self.n_points, boundary)

    def to_dict(self) -> dict:
        return {"half_width": self.half_width, "n_points": self.n_points,
                "dx": self.dx, "boundary": self.boundary}


@dataclass
class ComplexField:
    """Complex samples on a grid at a single time."""

    grid: GridSpec
    values: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n_points,):
            raise GridMismatchError(
                f"field has shape {self.values.shape}, grid expects ({self.grid.n_points},)")

    @classmethod
    def from_function(cls, grid: GridSpec, fn, time_tag: float = 0.0) -> "ComplexField":
        return cls(grid, fn(grid.x), time_tag)

    def norm2(self) -> float:
        return float(quad(ComplexField(self.grid, np.abs(self.values) ** 2)).real)

    def _new(self, values) -> "ComplexField":
        return ComplexField(self.grid, values, self.time_tag)

    def __add__(self, other):
        if isinstance(other, ComplexField):
            _check_same(self, other)
            return self._new(self.values + other.values)
        return self._new(self.values + other)

    def __sub__(self, other):
        if isinstance(other, ComplexField):
            _check_same(self, other)
            return self._new(self.values - other.values)
        return self._new(self.values - other)

    def __mul__(self, other):
        if isinstance(other, ComplexField):
            _check_same(self, other)
            return self._new(self.values * other.values)
        return self._new(self.values * other)

    __rmul__ = __mul__
    __radd__ = __add__


def _check_same(a: ComplexField, b: ComplexField) -> None:
    if not a.grid.same_lattice(b.grid):
        raise GridMismatchError("fields live on different grids")


# --- array-level stencils (last axis) -------------------------------------

def d1(values: np.ndarray, dx: float, order: int = 2) -> np.ndarray:
    """First derivative along the last axis.

    Central differences inside, second-order one-sided formulas at the two
    edge nodes.  ``order=4`` switches the interior to the five-point stencil
    (nodes next to the edges keep the three-point one).
    """
    f = np.asarray(values)
    if f.shape[-1] < 3:
        raise PreconditionError("need at least 3 nodes for a derivative")
    out = np.empty_like(f, dtype=np.result_type(f, float))
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2 * dx)
    out[..., 0] = (-3 * f[..., 0] + 4 * f[..., 1] - f[..., 2]) / (2 * dx)
    out[..., -1] = (3 * f[..., -1] - 4 * f[..., -2] + f[..., -3]) / (2 * dx)
    if order == 4 and f.shape[-1] >= 5:
        out[..., 2:-2] = (f[..., :-4] - 8 * f[..., 1:-3] + 8 * f[..., 3:-1] - f[..., 4:]) / (12 * dx)
    elif order not in (2, 4):
        raise PreconditionError(f"unsupported stencil order {order}")
    return out


def d2(values: np.ndarray, dx: float, order: int = 2) -> np.ndarray:
    """Second derivative along the last axis (three-point, or five-point for ``order=4``)."""
    f = np.asarray(values)
    if f.shape[-1] < 4:
        raise PreconditionError("need at least 4 nodes for a second derivative")
    out = np.empty_like(f, dtype=np.result_type(f, float))
    h2 = dx * dx
    out[..., 1:-1] = (f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]) / h2
    out[..., 0] = (2 * f[..., 0] - 5 * f[..., 1] + 4 * f[..., 2] - f[..., 3]) / h2
    out[..., -1] = (2 * f[..., -1] - 5 * f[..., -2] + 4 * f[..., -3] - f[..., -4]) / h2
    if order == 4 and f.shape[-1] >= 5:
        out[..., 2:-2] = (-f[..., :-4] + 16 * f[..., 1:-3] - 30 * f[..., 2:-2]
                          + 16 * f[..., 3:-1] - f[..., 4:]) / (12 * h2)
    elif order not in (2, 4):
        raise PreconditionError(f"unsupported stencil order {order}")
    return out


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    w = np.full(grid.n_points, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    return w


def interp_values(values: np.ndarray, grid: GridSpec, xs) -> np.ndarray:
    """Linear interpolation of nodal ``values`` at arbitrary positions.

    ``values`` may be 1D (one field) or 2D with one row per position, in which
    case row ``i`` is evaluated at ``xs[i]``.  Positions outside ``[-L, L]``
    are handled by the grid's boundary policy.
    """
    xs = np.asarray(xs, dtype=float)
    if np.isnan(xs).any():
        raise PreconditionError("NaN position passed to interpolation")
    L, dx, n = grid.half_width, grid.dx, grid.n_points
    s = (xs + L) / dx
    # snap positions that sit on a node so nodal values come back exactly
    r = np.rint(s)
    s = np.where(np.abs(s - r) < 1e-9, r, s)
    outside = (s < 0) | (s > n - 1)
    s = np.clip(s, 0.0, n - 1)
    j = np.minimum(s.astype(np.intp), n - 2)
    w = s - j
    v = np.asarray(values)
    if v.ndim == 1:
        out = v[j] * (1 - w) + v[j + 1] * w
    else:
        rows = np.arange(v.shape[0])
        out = v[rows, j] * (1 - w) + v[rows, j + 1] * w
    if grid.boundary == "dirichlet-zero" and np.any(outside):
        out = np.where(outside, 0.0, out)
    return out


# --- public field operations ----------------------------------------------

def gradient(f: ComplexField, order: int = 2) -> ComplexField:
    return ComplexField(f.grid, d1(f.values, f.grid.dx, order), f.time_tag)


def laplacian(f: ComplexField, order: int = 2) -> ComplexField:
    return ComplexField(f.grid, d2(f.values, f.grid.dx, order), f.time_tag)


def quad(f: ComplexField) -> complex:
    """Trapezoid rule over the whole grid."""
    return complex(np.dot(trapezoid_weights(f.grid), f.values))


def interp(f: ComplexField, x):
    """Field value at position(s) ``x``; scalar in, scalar out."""
    out = interp_values(f.values, f.grid, x)
    return complex(out) if np.ndim(x) == 0 else out


def l2_distance(a: ComplexField, b: ComplexField) -> float:
    _check_same(a, b)
    return float(np.sqrt(quad(ComplexField(a.grid, np.abs(a.values - b.values) ** 2)).real))
