"""Discrete generators L+, L-, L_b, the Hamiltonian, and checks of the identities linking them.

All spatial derivatives use the five-point (fourth-order) stencils by
default; time derivatives of records use central differences.

Residual norms
--------------
Reports carry the maximum absolute residual over guarded nodes (density
floor 1e-8 of the maximum, two edge nodes dropped).  The conjugation
identities live on the weighted space ``L^2(|psi|^2)``, so ``details`` also
holds ``weighted_max_residual = max |psi| |r| / max |psi|``, the residual
after multiplying back by ``psi``; for ratio functions that grow into the
tails it is the more stable of the two numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, PreconditionError, VanishingFieldError
from .evolve import EvolutionRecord, PhysConfig
from .fields import DENSITY_FLOOR, DriftFields, _clamp_outside, _trusted_mask
from .grid import ComplexField, GridSpec, d1, d2, trapezoid_weights
from .reports import ResidualReport

KINDS = ("Lplus", "Lminus", "Lb", "Hamiltonian", "ddt_plus_Lb", "ddt_plus_iH_over_hbar")
SUPPORT_MARGIN = 2.0
SUPPORT_TOL = 1e-12
DEFAULT_ORDER = 4


def gaussian_bump(x, center=0.0, width=1.0):
    return np.exp(-((np.asarray(x) - center) ** 2) / (2 * width * width))


def smooth_bump(x, center=0.0, radius=4.0):
    """C-infinity bump ``exp(1 - 1/(1 - r^2))`` supported on ``|x - center| < radius``."""
    r = (np.asarray(x, dtype=float) - center) / radius
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def quantum_drift(psi: np.ndarray, dx: float, cfg: PhysConfig, order: int = DEFAULT_ORDER):
    """``v_q = (hbar / (i m)) psi' / psi`` on the nodes (no branch cuts), clamped outside the trusted block."""
    psi = np.asarray(psi, dtype=complex)
    mask = _trusted_mask(np.abs(psi), psi)
    safe = np.where(psi != 0, psi, 1.0)
    vq = cfg.hbar / (1j * cfg.mass) * d1(psi, dx, order) / safe
    return _clamp_outside(vq, mask)


@dataclass
class OperatorHandle:
    """A differential operator with its coefficient fields frozen on a grid.

    Spatial kinds (``Lplus``, ``Lminus``, ``Lb``, ``Hamiltonian``) act on a
    ComplexField.  The ``ddt_*`` kinds act on a time series (an
    EvolutionRecord on the same times as ``rec``) and are evaluated at
    ``time`` with a central difference.
    """

    kind: str
    grid: GridSpec
    cfg: PhysConfig
    b_plus: np.ndarray | None = None
    b_minus: np.ndarray | None = None
    rec: EvolutionRecord | None = None
    time: float | None = None
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown operator kind {self.kind!r}")

    @property
    def v_q(self) -> np.ndarray:
        return 0.5 * (1 - 1j) * self.b_plus + 0.5 * (1 + 1j) * self.b_minus

    @classmethod
    def from_fields(cls, kind: str, df: DriftFields, cfg: PhysConfig, order=DEFAULT_ORDER):
        return cls(kind, df.grid, cfg, np.asarray(df.b_plus), np.asarray(df.b_minus), order=order)

    @classmethod
    def from_psi(cls, kind: str, psi: ComplexField, cfg: PhysConfig, order=DEFAULT_ORDER):
        vq = quantum_drift(psi.values, psi.grid.dx, cfg, order)
        v, u = vq.real, -vq.imag
        return cls(kind, psi.grid, cfg, v + u, v - u, order=order, time=psi.time_tag)

    @classmethod
    def hamiltonian(cls, grid: GridSpec, cfg: PhysConfig, order=DEFAULT_ORDER):
        return cls("Hamiltonian", grid, cfg, order=order)

    @classmethod
    def from_record(cls, kind: str, rec: EvolutionRecord, t: float, order=DEFAULT_ORDER):
        h = cls.from_psi(kind, rec.at(t), rec.config, order)
        h.rec, h.time = rec, float(rec.times[rec.index_of(t)])
        return h

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": self.grid.to_dict(), "config": self.cfg.to_dict(),
                "time": self.time, "order": self.order}


def check_support(f: ComplexField, margin: float = SUPPORT_MARGIN, tol: float = SUPPORT_TOL) -> None:
    vals = np.abs(f.values)
    top = vals.max()
    if top == 0:
        return
    tail = np.abs(f.grid.x) > f.grid.half_width - margin
    if vals[tail].max(initial=0.0) >= tol * max(top, 1.0):
        raise PreconditionError(
            f"test function is not supported inside |x| <= L - {margin} (tail {vals[tail].max():.3e})")


def _spatial(op: OperatorHandle, values: np.ndarray, kind: str) -> np.ndarray:
    dx, s2 = op.grid.dx, op.cfg.sigma2
    f1 = d1(values, dx, op.order)
    f2 = d2(values, dx, op.order)
    if kind == "Lplus":
        return op.b_plus * f1 + 0.5 * s2 * f2
    if kind == "Lminus":
        return op.b_minus * f1 - 0.5 * s2 * f2
    if kind == "Lb":
        return op.v_q * f1 - 0.5j * s2 * f2
    if kind == "Hamiltonian":
        return -0.5 * op.cfg.hbar ** 2 / op.cfg.mass * f2 + op.cfg.V(op.grid.x) * values
    raise PreconditionError(kind)


def _central_dt(series: EvolutionRecord, t: float):
    k = series.index_of(t)
    if k == 0 or k == len(series.times) - 1:
        raise PreconditionError("time derivative needs neighbouring record times")
    return series.values[k], (series.values[k + 1] - series.values[k - 1]) / (2 * series.dt)


def apply(op: OperatorHandle, f) -> ComplexField:
    if op.kind.startswith("ddt"):
        if not isinstance(f, EvolutionRecord) or op.time is None:
            raise PreconditionError("time-dependent operators act on a record-shaped series")
        if op.rec is not None and (len(f.times) != len(op.rec.times)
                                   or np.max(np.abs(f.times - op.rec.times)) > 1e-12):
            raise PreconditionError("series times differ from the operator's record")
        val, dval = _central_dt(f, op.time)
        check_support(ComplexField(f.grid, val))
        space = "Lb" if op.kind == "ddt_plus_Lb" else "Hamiltonian"
        out = _spatial(op, val, space)
        if space == "Hamiltonian":
            out = 1j / op.cfg.hbar * out
        return ComplexField(op.grid, dval + out, op.time)
    if not op.grid.same_lattice(f.grid):
        raise GridMismatchError("operator and field live on different grids")
    check_support(f)
    return ComplexField(f.grid, _spatial(op, f.values, op.kind), f.time_tag)


def lb_identity_residual(df_or_psi, cfg: PhysConfig, basis) -> float:
    """``max |L_b f - ((1-i)/2 L+ f + (1+i)/2 L- f)|`` over a list of test fields."""
    make = OperatorHandle.from_psi if isinstance(df_or_psi, ComplexField) else OperatorHandle.from_fields
    ops = {k: make(k, df_or_psi, cfg) for k in ("Lplus", "Lminus", "Lb")}
    worst = 0.0
    for f in basis:
        lp, lm, lb = (apply(ops[k], f).values for k in ("Lplus", "Lminus", "Lb"))
        worst = max(worst, float(np.abs(lb - 0.5 * (1 - 1j) * lp - 0.5 * (1 + 1j) * lm).max()))
    return worst


# --- residual helpers ---------------------------------------------------------

def _never_vanishing(vals: np.ndarray, name: str) -> None:
    """Reject exact zeros and nodal states (see ``fields._trusted_mask``)."""
    if np.any(vals == 0):
        raise VanishingFieldError(f"{name} vanishes on the grid")
    _trusted_mask(np.abs(vals), vals)


def _guard(*fields, floor: float = DENSITY_FLOOR) -> np.ndarray:
    """Nodes where every given field clears the density floor, minus two edge nodes."""
    mask = np.ones(np.shape(fields[0])[-1], dtype=bool)
    for f in fields:
        a2 = np.abs(f) ** 2
        mask &= a2 >= floor * a2.max()
    mask[:2] = mask[-2:] = False
    return mask


def _weighted_report(check, res, weight, mask, tol, grid, dt, **details) -> ResidualReport:
    w = np.abs(weight) / np.abs(weight).max()
    res = np.abs(res)
    plain = float(res[mask].max()) if mask.any() else float("nan")
    weighted = float((w * res)[mask].max()) if mask.any() else float("nan")
    return ResidualReport(check, plain, tol, grid.to_dict(), dt,
                          {"norm": "max |r| over guarded nodes", "weighted_max_residual": weighted,
                           "density_floor": DENSITY_FLOOR, **details})


def _derivs(vals3: np.ndarray, dx: float, dt: float, order: int):
    """Middle-time value, central time derivative and two space derivatives."""
    f = vals3[1]
    return f, (vals3[2] - vals3[0]) / (2 * dt), d1(f, dx, order), d2(f, dx, order)


def _window(rec: EvolutionRecord, t: float) -> slice:
    k = rec.index_of(t)
    if k == 0 or k == len(rec.times) - 1:
        raise PreconditionError("check time needs neighbouring record times")
    return slice(k - 1, k + 2)


def pd1_residual(vals3, V, a, b, dx, dt, order=DEFAULT_ORDER):
    """``u_t - a u'' - b V u`` at the middle of three time levels."""
    u, ut, _, uxx = _derivs(vals3, dx, dt, order)
    return ut - a * uxx - b * V * u


def pd2_residual(phi3, u, a, dx, dt, order=DEFAULT_ORDER):
    """``phi_t - 2 a (u'/u) phi' - a phi''``; ``u`` is the middle-time solution."""
    _, pt, px, pxx = _derivs(phi3, dx, dt, order)
    return pt - 2 * a * d1(u, dx, order) / u * px - a * pxx


def lemma1_check(u_rec: EvolutionRecord, theta_rec: EvolutionRecord, a: complex, b: complex,
                 t: float, tolerance: float = 1e-3, tol_in: float = 1e-3,
                 order: int = DEFAULT_ORDER) -> ResidualReport:
    """Product-solution lemma: ``theta = u phi`` solves pd1 iff ``phi`` solves pd2.

    Reports the pd2 residual of ``phi = theta / u``, and in ``details`` the
    converse pd1 residual of the product ``u phi`` rebuilt from the ratio.
    """
    if not u_rec.grid.same_lattice(theta_rec.grid):
        raise GridMismatchError("records live on different grids")
    sl = _window(u_rec, t)
    sl2 = _window(theta_rec, t)
    g, dt, dx = u_rec.grid, u_rec.dt, u_rec.grid.dx
    U = u_rec.values[sl]
    TH = theta_rec.values[sl2]
    _never_vanishing(U, "u")
    V = u_rec.config.V(g.x)
    mask = _guard(U[1])
    r_u = pd1_residual(U, V, a, b, dx, dt, order)
    in_res = float((np.abs(r_u) / np.abs(U[1]).max())[mask].max())
    if in_res > tol_in:
        raise PreconditionError(f"u does not solve pd1 (residual {in_res:.3e} > {tol_in})")
    PHI = TH / U
    r2 = pd2_residual(PHI, U[1], a, dx, dt, order)
    r1 = pd1_residual(U * PHI, V, a, b, dx, dt, order)
    rep = _weighted_report("lemma1_pd2", r2, U[1], mask, tolerance, g, dt,
                           time=float(t), a=complex(a), b=complex(b), input_pd1_residual=in_res)
    rep.details["converse_pd1_residual"] = float(np.abs(r1)[mask].max())
    return rep


def product_series(rec: EvolutionRecord, fn) -> EvolutionRecord:
    """The series ``fn(x, t)`` sampled on the record's grid and times."""
    vals = np.array([fn(rec.grid.x, t) for t in rec.times], dtype=complex)
    return EvolutionRecord(rec.config, rec.grid, rec.times, vals, "analytic")


def theorem2_conjugation_check(rec: EvolutionRecord, f: EvolutionRecord, t: float,
                               tolerance: float = 1e-3, order: int = DEFAULT_ORDER) -> ResidualReport:
    """Residual of ``(d/dt + L_b) f = psi^{-1} (d/dt + (i/hbar) H)(psi f)`` at time ``t``."""
    k = rec.index_of(t)
    lhs = apply(OperatorHandle.from_record("ddt_plus_Lb", rec, t, order), f).values
    prod = EvolutionRecord(rec.config, rec.grid, rec.times, rec.values * f.values, "analytic")
    op_h = OperatorHandle("ddt_plus_iH_over_hbar", rec.grid, rec.config, rec=rec,
                          time=float(rec.times[k]), order=order)
    psi = rec.values[k]
    rhs = apply(op_h, prod).values / psi
    mask = _guard(psi)
    return _weighted_report("theorem2_conjugation", lhs - rhs, psi, mask, tolerance, rec.grid,
                            rec.dt, time=float(rec.times[k]))


def rayleigh_energy(psi0: ComplexField, cfg: PhysConfig, order: int = DEFAULT_ORDER):
    """``(E0, ||H psi0 - E0 psi0|| / ||psi0||)`` with the stencil Hamiltonian."""
    w = trapezoid_weights(psi0.grid)
    hp = _spatial(OperatorHandle.hamiltonian(psi0.grid, cfg, order), psi0.values, "Hamiltonian")
    nrm = float(w @ np.abs(psi0.values) ** 2)
    e0 = float((w @ (np.conj(psi0.values) * hp)).real / nrm)
    res = float(np.sqrt(w @ np.abs(hp - e0 * psi0.values) ** 2 / nrm))
    return e0, res


def ground_state_transform_check(psi0: ComplexField, cfg: PhysConfig, f: ComplexField,
                                 tolerance: float = 1e-3, eigen_tol: float = 1e-6,
                                 order: int = DEFAULT_ORDER) -> ResidualReport:
    """Residual of ``-(hbar^2/m)(grad log psi0 . grad f + f''/2) = psi0^{-1} (H - E0)(psi0 f)``.

    ``E0`` is the Rayleigh quotient of ``psi0``; the potential is shifted by
    ``-E0`` so that ``psi0`` is annihilated by the shifted Hamiltonian.
    """
    e0, ray = rayleigh_energy(psi0, cfg, order)
    if ray > eigen_tol:
        raise PreconditionError(f"psi0 is not an eigenstate (Rayleigh residual {ray:.3e})")
    check_support(f)
    g, dx = psi0.grid, psi0.grid.dx
    p = psi0.values
    hb2m = cfg.hbar ** 2 / cfg.mass
    lhs = -hb2m * (d1(p, dx, order) / p * d1(f.values, dx, order) + 0.5 * d2(f.values, dx, order))
    pf = p * f.values
    rhs = (-0.5 * hb2m * d2(pf, dx, order) + (cfg.V(g.x) - e0) * pf) / p
    return _weighted_report("ground_state_transform", lhs - rhs, p, _guard(p), tolerance, g, None,
                            E0=e0, rayleigh_residual=ray, potential_shift=-e0)


def hj_theta_check(rec1: EvolutionRecord, rec2: EvolutionRecord, t: float,
                   tolerance: float = 1e-3, order: int = DEFAULT_ORDER) -> ResidualReport:
    """Hamilton-Jacobi-type equation for ``theta = log(psi2/psi)``, and the ratio equation.

    ``theta`` derivatives come from the ratio ``phi = psi2/psi``:
    ``theta_t = phi_t/phi``, ``theta' = phi'/phi``,
    ``theta'' = phi''/phi - (phi'/phi)^2``.  The report's main number is the
    HJ residual ``theta_t + v_q theta' - (i hbar/2m) theta'' - (i hbar/2m) theta'^2``;
    ``details["cwf_residual"]`` is the residual of
    ``(d/dt + v_q . grad - (i hbar/2m) Laplacian) phi = 0`` (with its
    ``|psi|``-weighted version alongside).
    """
    if not rec1.grid.same_lattice(rec2.grid):
        raise GridMismatchError("records live on different grids")
    sl1, sl2 = _window(rec1, t), _window(rec2, t)
    P1, P2 = rec1.values[sl1], rec2.values[sl2]
    _never_vanishing(P1, "psi")
    _never_vanishing(P2, "psi2")
    cfg, g, dx, dt = rec1.config, rec1.grid, rec1.grid.dx, rec1.dt
    PHI = P2 / P1
    phi, pt, px, pxx = _derivs(PHI, dx, dt, order)
    vq = quantum_drift(P1[1], dx, cfg, order)
    c = 0.5j * cfg.hbar / cfg.mass
    th_t, th_x = pt / phi, px / phi
    th_xx = pxx / phi - th_x ** 2
    res = th_t + vq * th_x - c * th_xx - c * th_x ** 2
    mask = _guard(P1[1], P2[1])
    cwf = pt + vq * px - c * pxx
    rep = ResidualReport("hj_theta", float(np.abs(res)[mask].max()), tolerance, g.to_dict(), dt,
                         {"time": float(t), "density_floor": DENSITY_FLOOR,
                          "norm": "max over guarded nodes"})
    w = np.abs(P1[1]) / np.abs(P1[1]).max()
    rep.details["cwf_residual"] = float(np.abs(cwf)[mask].max())
    rep.details["cwf_weighted_residual"] = float((w * np.abs(cwf))[mask].max())
    return rep


__all__ = ["KINDS", "OperatorHandle", "apply", "check_support", "lb_identity_residual",
           "lemma1_check", "theorem2_conjugation_check", "ground_state_transform_check",
           "hj_theta_check", "rayleigh_energy", "quantum_drift", "gaussian_bump", "smooth_bump",
           "product_series", "pd1_residual", "pd2_residual"]
