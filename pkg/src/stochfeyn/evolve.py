"""Schrodinger and backward-heat solvers, evolution records and explicit kernels.

Both solvers are Crank-Nicolson on the fourth-order (five-point) Laplacian.
The Schrodinger solver uses homogeneous Dirichlet data at the box edges; the
terminal-value heat solver uses a zero-flux (even reflection) edge so that
spatially constant solutions are reproduced exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (NormalizationError, PositivityError, PreconditionError,
                     VanishingFieldError)
from .grid import ComplexField, GridSpec, d1, d2, interp_values, quad, trapezoid_weights
from .reports import ResidualReport
from .states import Potential

VANISHING_THRESHOLD = 1e-12


@dataclass(frozen=True)
class PhysConfig:
    hbar: float = 1.0
    mass: float = 1.0
    potential: Potential = field(default_factory=Potential.zero)
    dt: float = 1e-3

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0 and self.dt > 0):
            raise PreconditionError("hbar, mass and dt must all be positive")

    @property
    def sigma2(self) -> float:
        return self.hbar / self.mass

    def V(self, x) -> np.ndarray:
        return self.potential(x)

    def to_dict(self) -> dict:
        return {"hbar": self.hbar, "mass": self.mass, "sigma2": self.sigma2,
                "dt": self.dt, "potential": self.potential.to_dict()}


@dataclass
class EvolutionRecord:
    """Solution samples ``values[k, j]`` at ``times[k]`` and node ``x_j``."""

    config: PhysConfig
    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    kind: str = "schrodinger"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.times), self.grid.n_points):
            raise PreconditionError("record values do not match times x grid")
        if len(self.times) > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, abs(self.times[-1])):
                raise PreconditionError("record times must increase with a uniform step")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else self.config.dt

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def index_of(self, t: float) -> int:
        k = int(round((t - self.times[0]) / self.dt))
        if k < 0 or k >= len(self.times) or abs(self.times[k] - t) > 0.5 * self.dt + 1e-12:
            raise PreconditionError(f"time {t} outside record span [{self.t0}, {self.t1}]")
        return k

    def field(self, k: int) -> ComplexField:
        return ComplexField(self.grid, self.values[k], float(self.times[k]))

    def at(self, t: float) -> ComplexField:
        return self.field(self.index_of(t))

    def norms(self) -> np.ndarray:
        return np.abs(self.values) ** 2 @ trapezoid_weights(self.grid)

    def phase_shifted(self, alpha: float) -> "EvolutionRecord":
        return replace(self, values=self.values * np.exp(1j * alpha))

    def window(self, t_start: float, t_end: float) -> "EvolutionRecord":
        a, b = self.index_of(t_start), self.index_of(t_end)
        return replace(self, times=self.times[a:b + 1], values=self.values[a:b + 1])

    def to_csv(self, path) -> None:
        """Write rows ``t,x,re,im`` with 17 significant digits."""
        x = self.grid.x
        with open(path, "w", newline="") as fh:
            fh.write("t,x,re,im\n")
            for t, row in zip(self.times, self.values):
                block = np.column_stack([np.full_like(x, t), x, row.real, row.imag])
                np.savetxt(fh, block, fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, path, config: PhysConfig, grid: GridSpec, kind="schrodinger"):
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        times = np.unique(data[:, 0])
        values = (data[:, 2] + 1j * data[:, 3]).reshape(len(times), grid.n_points)
        return cls(config, grid, times, values, kind)


def record_from_function(fn, grid: GridSpec, cfg: PhysConfig, t0: float, t1: float,
                         kind: str = "analytic") -> EvolutionRecord:
    """Sample a closed-form solution ``fn(x, t)`` on the grid at steps of ``cfg.dt``."""
    n = _n_steps(t0, t1, cfg.dt)
    times = t0 + cfg.dt * np.arange(n + 1)
    values = np.array([fn(grid.x, t) for t in times], dtype=complex)
    return EvolutionRecord(cfg, grid, times, values, kind)


def _n_steps(t0: float, t1: float, dt: float) -> int:
    if not t1 > t0:
        raise PreconditionError(f"need t1 > t0, got t0={t0}, t1={t1}")
    n = int(round((t1 - t0) / dt))
    if n < 1 or abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, t1 - t0):
        raise PreconditionError(f"interval {t1 - t0} is not a multiple of dt={dt}")
    return n


def laplacian_matrix(n: int, dx: float, edge: str = "dirichlet") -> sp.csc_matrix:
    """Five-point Laplacian on ``n`` unknowns.

    ``edge="dirichlet"``: values beyond the unknowns are zero.
    ``edge="reflect"``: even reflection about the first/last unknown (zero flux).
    """
    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * dx * dx)
    A = sp.diags([np.full(n - abs(k), c[k + 2]) for k in range(-2, 3)],
                 list(range(-2, 3)), shape=(n, n), format="lil")
    if edge == "reflect":
        A[0, 1] = 2 * c[3]
        A[0, 2] = 2 * c[4]
        A[1, 1] = c[2] + c[4]
        A[-1, -2] = 2 * c[1]
        A[-1, -3] = 2 * c[0]
        A[-2, -2] = c[2] + c[0]
    elif edge != "dirichlet":
        raise PreconditionError(f"unknown edge rule {edge!r}")
    return A.tocsc()


def hamiltonian_matrix(grid: GridSpec, cfg: PhysConfig, edge: str = "dirichlet"):
    """Discrete ``H = -(hbar^2/2m) Laplacian + V`` on the interior nodes (Dirichlet)."""
    if edge == "dirichlet":
        xs = grid.x[1:-1]
    else:
        xs = grid.x
    V = cfg.V(xs)
    if not np.all(np.isfinite(V)):
        raise PreconditionError("potential is not finite on the grid")
    lap = laplacian_matrix(len(xs), grid.dx, edge)
    return (-(cfg.hbar ** 2) / (2 * cfg.mass)) * lap + sp.diags(V)


def schrodinger_evolve(psi0: ComplexField, cfg: PhysConfig, t1: float) -> EvolutionRecord:
    """Crank-Nicolson solution of ``i hbar psi_t = H psi`` from ``psi0.time_tag`` to ``t1``."""
    grid = psi0.grid
    norm = psi0.norm2()
    if abs(norm - 1.0) > 1e-6:
        raise NormalizationError(f"initial state has norm {norm:.9f}, expected 1")
    t0 = psi0.time_tag
    n = _n_steps(t0, t1, cfg.dt)
    H = hamiltonian_matrix(grid, cfg)
    eye = sp.identity(grid.n_points - 2, format="csc")
    a = 0.5j * cfg.dt / cfg.hbar
    lu = splu((eye + a * H).tocsc())
    B = (eye - a * H).tocsr()

    values = np.zeros((n + 1, grid.n_points), dtype=complex)
    values[0] = psi0.values
    values[0, 0] = values[0, -1] = 0.0
    p = values[0, 1:-1].copy()
    for k in range(1, n + 1):
        p = lu.solve(B @ p)
        values[k, 1:-1] = p
    times = t0 + cfg.dt * np.arange(n + 1)
    return EvolutionRecord(cfg, grid, times, values, "schrodinger")


def heat_terminal_solve(h1: ComplexField, cfg: PhysConfig, t0: float, t1: float) -> EvolutionRecord:
    """Solve ``h_t + h_xx/2 = V h`` backward from ``h(., t1) = h1`` down to ``t0``.

    The diffusion coefficient is fixed to one, so the returned record carries
    a config with ``hbar = mass = 1``.
    """
    grid = h1.grid
    h = np.asarray(h1.values)
    if np.any(np.abs(h.imag) > 0) or np.any(h.real <= 0):
        raise PositivityError("terminal data must be real and strictly positive")
    V = cfg.V(grid.x)
    if not np.all(np.isfinite(V)):
        raise PreconditionError("potential is not finite on the grid")
    if np.any(V < 0):
        raise PreconditionError("heat branch requires a nonnegative potential")
    cfg = replace(cfg, hbar=1.0, mass=1.0)
    n = _n_steps(t0, t1, cfg.dt)
    G = 0.5 * laplacian_matrix(grid.n_points, grid.dx, "reflect") - sp.diags(V)
    eye = sp.identity(grid.n_points, format="csc")
    lu = splu((eye - 0.5 * cfg.dt * G).tocsc())
    B = (eye + 0.5 * cfg.dt * G).tocsr()

    values = np.empty((n + 1, grid.n_points))
    values[n] = h.real
    cur = h.real.copy()
    for k in range(n - 1, -1, -1):
        cur = lu.solve(B @ cur)
        if np.any(cur <= 0):
            raise PositivityError(
                f"solution lost positivity at t={t1 - (n - k) * cfg.dt:.6g}; refine grid or step")
        values[k] = cur
    times = t0 + cfg.dt * np.arange(n + 1)
    return EvolutionRecord(cfg, grid, times, values.astype(complex), "heat")


# --- explicit kernels -------------------------------------------------------

def kernel_K(s, y, t, x, cfg: PhysConfig):
    """Free Schrodinger propagator ``[2 pi hbar i (t-s)/m]^(-1/2) exp(i m (x-y)^2 / (2 hbar (t-s)))``."""
    if not t > s:
        raise PreconditionError("kernel_K needs t > s")
    dt = t - s
    pref = 1.0 / np.sqrt(2j * np.pi * cfg.hbar * dt / cfg.mass)
    d = np.asarray(x) - np.asarray(y)
    return pref * np.exp(1j * cfg.mass * d * d / (2 * cfg.hbar * dt))


def kernel_p(s, y, t, x):
    """Standard Wiener transition density."""
    if not t > s:
        raise PreconditionError("kernel_p needs t > s")
    dt = t - s
    d = np.asarray(x) - np.asarray(y)
    return np.exp(-d * d / (2 * dt)) / math.sqrt(2 * math.pi * dt)


def kernel_matrix(grid: GridSpec, dt: float, kind: str, cfg: PhysConfig | None = None) -> np.ndarray:
    """Trapezoid discretisation ``M[i, j] = kernel(x_j -> x_i) w_j`` of a kernel integral."""
    x = grid.x
    if kind == "quantum":
        M = kernel_K(0.0, x[None, :], dt, x[:, None], cfg or PhysConfig())
    elif kind == "heat":
        M = kernel_p(0.0, x[None, :], dt, x[:, None])
    else:
        raise PreconditionError(f"unknown kernel kind {kind!r}")
    return M * trapezoid_weights(grid)[None, :]


def apply_kernel(f: ComplexField, dt: float, kind: str, cfg: PhysConfig | None = None) -> ComplexField:
    """``int kernel(0, y, dt, x) f(y) dy`` by trapezoid quadrature over the grid."""
    M = kernel_matrix(f.grid, dt, kind, cfg)
    return ComplexField(f.grid, M @ f.values, f.time_tag + dt)


def kernel_pq(t0: float, y, t: float, x, rec: EvolutionRecord):
    """Transition kernel of the bi-directional generator equation, ``K psi0(y) / psi(t, x)``."""
    if not t > t0:
        raise PreconditionError("kernel_pq needs t > t0")
    psi0 = rec.at(t0).values
    psit = rec.at(t).values
    scale = np.abs(psit).max()
    num = interp_values(psi0, rec.grid, y)
    den = interp_values(psit, rec.grid, x)
    if np.any(np.abs(den) < VANISHING_THRESHOLD * scale):
        raise VanishingFieldError("psi(t, x) vanishes at a requested point")
    return kernel_K(t0, y, t, x, rec.config) * num / den


def log_heat_residual(rec: EvolutionRecord, t: float, x_max: float = 6.0,
                      tolerance: float = 1e-3):
    """Residual of ``phi_t + phi_xx/2 + phi_x^2/2 = V`` for ``phi = log h`` on ``|x| <= x_max``."""
    if rec.kind != "heat":
        raise PreconditionError("log_heat_residual needs a heat record")
    k = rec.index_of(t)
    if k == 0 or k == len(rec.times) - 1:
        raise PreconditionError("log_heat_residual needs neighbours in time")
    phi = np.log(rec.values[k - 1:k + 2].real)
    dx = rec.grid.dx
    phi_t = (phi[2] - phi[0]) / (2 * rec.dt)
    px = d1(phi[1], dx, order=4)
    pxx = d2(phi[1], dx, order=4)
    res = np.abs(phi_t + 0.5 * pxx + 0.5 * px * px - rec.config.V(rec.grid.x))
    sel = np.abs(rec.grid.x) <= x_max
    return ResidualReport("log_heat_equation", float(res[sel].max()), tolerance, rec.grid.to_dict(),
                          rec.dt, {"time": float(rec.times[k]), "x_max": x_max})


def normalized(f: ComplexField) -> ComplexField:
    return ComplexField(f.grid, f.values / math.sqrt(f.norm2()), f.time_tag)


def relative_norm_drift(rec: EvolutionRecord) -> float:
    n = rec.norms()
    return float(np.max(np.abs(n - n[0])) / n[0])


__all__ = ["PhysConfig", "EvolutionRecord", "record_from_function", "schrodinger_evolve",
           "heat_terminal_solve", "kernel_K", "kernel_p", "kernel_pq", "kernel_matrix",
           "apply_kernel", "laplacian_matrix", "hamiltonian_matrix", "normalized",
           "relative_norm_drift", "log_heat_residual", "quad", "VANISHING_THRESHOLD"]
