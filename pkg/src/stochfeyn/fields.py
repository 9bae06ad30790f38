"""Nelson kinematic fields extracted from a wave function or a positive heat solution.

For a wave function ``psi`` with ``sigma^2 = hbar/m``::

    rho = |psi|^2
    u   = (sigma^2 / 2) d/dx log rho          osmotic drift
    v   = Re[(hbar / (m i)) psi' / psi]        current drift
    v_q = v - i u                              quantum drift
    b_plus, b_minus = v + u, v - u

Fields are only trusted where ``|psi|`` clears the vanishing threshold; outside
that contiguous block the drifts are clamped to the nearest trusted value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NormalizationError, PositivityError, PreconditionError, VanishingFieldError
from .evolve import VANISHING_THRESHOLD, EvolutionRecord, PhysConfig
from .grid import ComplexField, GridSpec, d1, trapezoid_weights
from .reports import ResidualReport, write_csv

DENSITY_FLOOR = 1e-8


@dataclass
class DriftFields:
    grid: GridSpec
    time_tag: float
    rho: np.ndarray
    u: np.ndarray
    v: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray
    v_q: np.ndarray
    sigma2: float = 1.0
    source: str = "psi"

    def guard(self, floor: float = DENSITY_FLOOR) -> np.ndarray:
        return self.rho >= floor * np.nanmax(self.rho)

    def to_csv(self, path) -> None:
        write_csv(path, ["x", "rho", "u", "v", "bplus", "bminus", "re_vq", "im_vq"],
                  [self.grid.x, self.rho, self.u, self.v, self.b_plus, self.b_minus,
                   self.v_q.real, self.v_q.imag])


@dataclass
class DriftTable:
    """Drift fields for every time of a record; rows are times, columns nodes."""

    grid: GridSpec
    times: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray
    v_q: np.ndarray | None = None
    rho: np.ndarray | None = None
    sigma2: float = 1.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def constant(cls, grid: GridSpec, times, b_plus=0.0, b_minus=0.0, sigma2=1.0) -> "DriftTable":
        """Spatially and temporally constant drifts (for injected-drift experiments)."""
        times = np.asarray(times, dtype=float)
        shape = (len(times), grid.n_points)
        bp = np.full(shape, float(b_plus))
        bm = np.full(shape, float(b_minus))
        v = 0.5 * (bp + bm)
        u = 0.5 * (bp - bm)
        return cls(grid, times, bp, bm, v - 1j * u, None, sigma2)


def _clamp_outside(arr: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Copy the first/last trusted value of each row over the untrusted edges."""
    arr = np.array(arr, copy=True)
    a2 = arr.reshape(-1, arr.shape[-1])
    m2 = mask.reshape(-1, mask.shape[-1])
    for row, m in zip(a2, m2):
        idx = np.flatnonzero(m)
        row[:idx[0]] = row[idx[0]]
        row[idx[-1] + 1:] = row[idx[-1]]
    return arr


NODE_PHASE_JUMP = 0.5 * np.pi


def _trusted_mask(psi_abs: np.ndarray, psi: np.ndarray | None = None) -> np.ndarray:
    """Nodes where ``|psi|`` clears the vanishing threshold, minus the block's edge nodes.

    Raises VanishingFieldError for a nodal state: the trusted nodes do not
    form one block, or (when ``psi`` is given) the phase jumps by more than
    pi/2 between neighbouring trusted nodes, which is how a zero lying
    between two grid nodes shows up.
    """
    scale = psi_abs.max(axis=-1, keepdims=True)
    mask = psi_abs >= VANISHING_THRESHOLD * scale
    m2 = mask.reshape(-1, mask.shape[-1])
    for m in m2:
        idx = np.flatnonzero(m)
        if len(idx) == 0 or idx[-1] - idx[0] + 1 != len(idx):
            raise VanishingFieldError("wave function vanishes inside the domain (nodal state)")
    if psi is not None:
        turn = np.abs(np.angle(psi[..., 1:] * np.conj(psi[..., :-1])))
        if np.any((turn > NODE_PHASE_JUMP) & mask[..., 1:] & mask[..., :-1]):
            raise VanishingFieldError("wave function changes sign between grid nodes (nodal state)")
    # the edge nodes of the trusted block are kept out so stencils never touch untrusted data
    inner = mask.copy()
    inner[..., 1:] &= mask[..., :-1]
    inner[..., :-1] &= mask[..., 1:]
    return inner


def _psi_drifts(values: np.ndarray, dx: float, sigma2: float):
    absval = np.abs(values)
    mask = _trusted_mask(absval, values)
    safe = np.where(absval > 0, values, 1.0)
    rho = absval ** 2
    log_rho = np.log(np.where(rho > 0, rho, np.finfo(float).tiny))
    u = 0.5 * sigma2 * d1(log_rho, dx)
    v = sigma2 * (d1(values, dx) / safe).imag
    u = _clamp_outside(u, mask)
    v = _clamp_outside(v, mask)
    return rho, u, v


def fields_from_psi(psi: ComplexField, cfg: PhysConfig, check_norm: bool = True) -> DriftFields:
    if check_norm:
        n = psi.norm2()
        if abs(n - 1.0) > 1e-6:
            raise NormalizationError(f"wave function has norm {n:.9f}, expected 1")
    s2 = cfg.sigma2
    rho, u, v = _psi_drifts(psi.values, psi.grid.dx, s2)
    return DriftFields(psi.grid, psi.time_tag, rho, u, v, v + u, v - u, v - 1j * u, s2, "psi")


def drift_from_h(h: ComplexField) -> DriftFields:
    """Forward drift ``grad log h`` of the h-transformed Wiener process (unit diffusion)."""
    vals = np.asarray(h.values)
    if np.any(np.abs(vals.imag) > 0) or np.any(vals.real <= 0):
        raise PositivityError("h must be real and strictly positive")
    bp = d1(np.log(vals.real), h.grid.dx)
    nan = np.full_like(bp, np.nan)
    return DriftFields(h.grid, h.time_tag, nan, nan, nan, bp, nan, nan * (1 + 0j), 1.0, "h")


def drift_table(rec: EvolutionRecord) -> DriftTable:
    """Drift fields at every record time (Schrodinger or heat record)."""
    if rec.kind == "heat":
        vals = rec.values.real
        if np.any(vals <= 0):
            raise PositivityError("heat record is not strictly positive")
        bp = d1(np.log(vals), rec.grid.dx)
        return DriftTable(rec.grid, rec.times, bp, np.full_like(bp, np.nan), None, None, 1.0)
    s2 = rec.config.sigma2
    rho, u, v = _psi_drifts(rec.values, rec.grid.dx, s2)
    return DriftTable(rec.grid, rec.times, v + u, v - u, v - 1j * u, rho, s2)


def check_nelson_relation(df: DriftFields, cfg: PhysConfig | None = None,
                          tolerance: float = 1e-6) -> ResidualReport:
    s2 = df.sigma2 if cfg is None else cfg.sigma2
    mask = df.guard()
    log_rho = np.log(np.where(df.rho > 0, df.rho, np.finfo(float).tiny))
    target = s2 * d1(log_rho, df.grid.dx)
    res = np.abs(df.b_plus - df.b_minus - target)
    # the outermost guarded nodes take their stencil from clamped neighbours
    inner = mask.copy()
    inner[1:] &= mask[:-1]
    inner[:-1] &= mask[1:]
    worst = float(res[inner].max()) if inner.any() else float("nan")
    return ResidualReport("nelson_relation", worst, tolerance, df.grid.to_dict(), None,
                          {"density_floor": DENSITY_FLOOR, "n_nodes": int(inner.sum()),
                           "time": df.time_tag})


def check_continuity(rec: EvolutionRecord, t: float, tolerance: float = 5e-3) -> ResidualReport:
    """Residual of ``rho_t + (v rho)_x = 0`` by central differences in time and space."""
    k = rec.index_of(t)
    if k == 0 or k == len(rec.times) - 1:
        raise PreconditionError("continuity check needs neighbours in time")
    dt, dx = rec.dt, rec.grid.dx
    rho = np.abs(rec.values[k - 1:k + 2]) ** 2
    df = fields_from_psi(rec.field(k), rec.config, check_norm=False)
    drho = (rho[2] - rho[0]) / (2 * dt)
    flux = d1(df.v * rho[1], dx)
    res = np.abs(drho + flux)
    mask = df.guard()
    return ResidualReport("continuity", float(res[mask].max()), tolerance, rec.grid.to_dict(), dt,
                          {"time": float(rec.times[k]), "density_floor": DENSITY_FLOOR})


def density_mass(df: DriftFields) -> float:
    return float(trapezoid_weights(df.grid) @ df.rho)
