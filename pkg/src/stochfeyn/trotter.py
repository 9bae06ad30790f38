"""Time-sliced propagation of the Schrodinger and heat semigroups, and the kernel identities.

One quantum slice is ``psi -> int K(0, y, dt, x) exp(-(i/hbar) V(y) dt) psi(y) dy``
and one heat slice is the same with ``p`` and ``exp(-V dt)``.  By default
the potential factor is taken at the integration variable, which is the
earlier-time point of the slice (the product formula sums ``V(x_j)`` over the
integration variables ``x_1 .. x_l``); ``potential_first=False`` applies it
after the kernel instead.

The free quantum kernel oscillates with local wavenumber ``m |x - y| / (hbar dt)``.
Trapezoid quadrature on the grid aliases once this exceeds ``pi / dx`` within
the box, which happens for ``dt < m dx L / (pi hbar)`` (about 0.09 at the
default grid).  ``method="auto"`` uses the kernel matrix above that threshold
and the exact free propagator on the grid (FFT) below it, recording a warning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import PreconditionError, SupportError
from .evolve import (EvolutionRecord, PhysConfig, heat_terminal_solve, kernel_K, kernel_matrix,
                     kernel_p, kernel_pq, schrodinger_evolve)
from .grid import ComplexField, GridSpec, interp_values, l2_distance, trapezoid_weights
from .reports import ResidualReport, write_csv

TAIL_LOSS_TOL = 1e-6
TAIL_MARGIN = 2.0


def kernel_threshold(grid: GridSpec, cfg: PhysConfig) -> float:
    """Smallest slice length for which trapezoid quadrature resolves the free quantum kernel."""
    return cfg.mass * grid.dx * grid.half_width / (math.pi * cfg.hbar)


def fresnel_warning_threshold(grid: GridSpec, cfg: PhysConfig) -> float:
    """The nominal ``dx^2 m / (pi hbar)`` bound; below it even neighbouring nodes alias."""
    return grid.dx ** 2 * cfg.mass / (math.pi * cfg.hbar)


@lru_cache(maxsize=8)
def _cached_kernel(grid: GridSpec, dt: float, kind: str, hbar: float, mass: float) -> np.ndarray:
    return kernel_matrix(grid, dt, kind, PhysConfig(hbar=hbar, mass=mass))


def free_step_spectral(values: np.ndarray, grid: GridSpec, dt: float, kind: str,
                       cfg: PhysConfig | None = None) -> np.ndarray:
    """Exact free propagator on the periodically extended grid."""
    cfg = cfg or PhysConfig()
    k = 2 * math.pi * np.fft.fftfreq(grid.n_points, d=grid.dx)
    if kind == "quantum":
        mult = np.exp(-0.5j * cfg.hbar / cfg.mass * k * k * dt)
    else:
        mult = np.exp(-0.5 * k * k * dt)
    return np.fft.ifft(mult * np.fft.fft(values))


def _choose(method: str, grid: GridSpec, dt: float, kind: str, cfg: PhysConfig) -> str:
    if method not in ("auto", "kernel", "spectral"):
        raise PreconditionError(f"unknown slice method {method!r}")
    if method != "auto":
        return method
    if kind == "heat":
        return "kernel"
    return "kernel" if dt >= kernel_threshold(grid, cfg) else "spectral"


def _free(values, grid, dt, kind, cfg, method):
    if method == "kernel":
        return _cached_kernel(grid, float(dt), kind, cfg.hbar, cfg.mass) @ values
    return free_step_spectral(values, grid, dt, kind, cfg)


def _slice(values, grid, dt, kind, cfg, method, potential_first):
    V = cfg.V(grid.x)
    fac = np.exp(-1j / cfg.hbar * V * dt) if kind == "quantum" else np.exp(-V * dt)
    if potential_first:
        return _free(fac * values, grid, dt, kind, cfg, method)
    return fac * _free(values, grid, dt, kind, cfg, method)


def trotter_step_quantum(psi: ComplexField, dt_slice: float, cfg: PhysConfig, method: str = "auto",
                         potential_first: bool = True) -> ComplexField:
    if not dt_slice > 0:
        raise PreconditionError("dt_slice must be positive")
    m = _choose(method, psi.grid, dt_slice, "quantum", cfg)
    out = _slice(psi.values, psi.grid, dt_slice, "quantum", cfg, m, potential_first)
    return ComplexField(psi.grid, out, psi.time_tag + dt_slice)


def trotter_step_heat(h: ComplexField, dt_slice: float, cfg: PhysConfig, method: str = "kernel",
                      potential_first: bool = True) -> ComplexField:
    if not dt_slice > 0:
        raise PreconditionError("dt_slice must be positive")
    m = _choose(method, h.grid, dt_slice, "heat", cfg)
    out = _slice(h.values, h.grid, dt_slice, "heat", cfg, m, potential_first)
    return ComplexField(h.grid, out.real.astype(complex), h.time_tag + dt_slice)


@dataclass
class TrotterRun:
    l: int
    kind: str
    result: ComplexField
    reference: ComplexField | None
    l2_error: float
    method: str
    potential_first: bool = True
    warnings: list = field(default_factory=list)
    tail_loss: float = 0.0
    clipped: int = 0

    def to_dict(self) -> dict:
        return {"l": self.l, "kind": self.kind, "l2_error": self.l2_error, "method": self.method,
                "potential_first": self.potential_first, "warnings": list(self.warnings),
                "tail_loss": self.tail_loss, "clipped_negative": self.clipped}


def _tail_fraction(values: np.ndarray, grid: GridSpec) -> float:
    w = trapezoid_weights(grid)
    a2 = np.abs(values) ** 2
    tail = np.abs(grid.x) > grid.half_width - TAIL_MARGIN
    tot = float(w @ a2)
    return float(w[tail] @ a2[tail]) / tot if tot > 0 else 0.0


def reference_solution(f0: ComplexField, cfg: PhysConfig, t: float, kind: str) -> ComplexField:
    """Crank-Nicolson reference (quantum) or the backward heat solve read at its start (heat)."""
    if kind == "quantum":
        return schrodinger_evolve(f0, cfg, t).field(-1)
    rec = heat_terminal_solve(f0, cfg, 0.0, t)
    out = rec.field(0)
    return ComplexField(out.grid, out.values, t)


def trotter_evolve(psi0: ComplexField, cfg: PhysConfig, t: float, l: int, kind: str = "quantum",
                   method: str = "auto", potential_first: bool = True,
                   reference: ComplexField | str | None = "solver") -> TrotterRun:
    """Apply ``l`` slices of length ``t / l``.

    ``reference="solver"`` compares with Crank-Nicolson (quantum) or the
    terminal-value heat solve (heat); a ComplexField is used as given; None
    skips the comparison.  Raises SupportError when more than 1e-6 of the
    norm ends up within 2 length units of the box edge.
    """
    if l < 1:
        raise PreconditionError("slice count must be at least 1")
    if kind not in ("quantum", "heat"):
        raise PreconditionError(f"unknown kind {kind!r}")
    dt = t / l
    grid = psi0.grid
    used = _choose(method, grid, dt, kind, cfg)
    warnings = []
    if kind == "quantum" and dt < kernel_threshold(grid, cfg):
        msg = (f"dt_slice={dt:.6g} below kernel resolution threshold {kernel_threshold(grid, cfg):.6g}")
        if used == "kernel":
            warnings.append(msg + "; trapezoid kernel quadrature aliases")
        else:
            warnings.append(msg + "; free step applied spectrally")
    if kind == "quantum" and dt < fresnel_warning_threshold(grid, cfg):
        warnings.append("dt_slice below dx^2 m / (pi hbar)")
    vals = psi0.values.copy()
    clipped = 0
    tail = _tail_fraction(vals, grid)
    for _ in range(l):
        vals = _slice(vals, grid, dt, kind, cfg, used, potential_first)
        if kind == "heat":
            vals = vals.real
            neg = vals < 0
            if neg.any():
                clipped += int(neg.sum())
                vals = np.where(neg, 0.0, vals)
            vals = vals.astype(complex)
        tail = max(tail, _tail_fraction(vals, grid))
    if tail > TAIL_LOSS_TOL:
        raise SupportError(f"{tail:.3e} of the norm reached the box edge; enlarge the domain")
    result = ComplexField(grid, vals, psi0.time_tag + t)
    if isinstance(reference, str):
        reference = reference_solution(psi0, cfg, t, kind)
    err = l2_distance(result, reference) if reference is not None else float("nan")
    return TrotterRun(l, kind, result, reference, err, used, potential_first, warnings, tail, clipped)


def convergence_scan(psi0: ComplexField, cfg: PhysConfig, t: float, ls, kind: str = "quantum",
                     reference: ComplexField | str | None = "solver", **kw):
    """Runs for each ``l`` against one shared reference; returns ``(runs, ratios)``."""
    if isinstance(reference, str):
        reference = reference_solution(psi0, cfg, t, kind)
    runs = [trotter_evolve(psi0, cfg, t, int(l), kind, reference=reference, **kw) for l in ls]
    ratios = [float("nan")] + [runs[i - 1].l2_error / runs[i].l2_error for i in range(1, len(runs))]
    return runs, ratios


def write_convergence_csv(path, runs, ratios) -> None:
    write_csv(path, ["kind", "l", "l2_error", "ratio_to_prev"],
              [[r.kind for r in runs], [r.l for r in runs], [r.l2_error for r in runs], ratios])


# --- kernel identities --------------------------------------------------------

def fokker_planck_density(h_rec: EvolutionRecord, x: float, t: float, width: float | None = None,
                          dt: float | None = None) -> ComplexField:
    """Transition density at ``t1`` of ``dx = grad log h dt + dw`` started near ``x`` at ``t``.

    The start is a Gaussian of standard deviation ``width`` (default 3 dx).
    Strang splitting: exact free diffusion by FFT for half steps around an
    RK4 step of ``q_s = -(b q)'`` with a spectral derivative.
    """
    grid = h_rec.grid
    width = 3 * grid.dx if width is None else width
    dt = h_rec.dt if dt is None else dt
    n = int(round((h_rec.t1 - t) / dt))
    if n < 1 or abs(n * dt - (h_rec.t1 - t)) > 1e-9:
        raise PreconditionError("t1 - t must be a positive multiple of dt")
    xs = grid.x
    vals = h_rec.values.real
    if np.any(vals <= 0):
        raise PreconditionError("h record is not positive")
    logh = np.log(vals)
    from .grid import d1
    btab = d1(logh, grid.dx)
    k = 2 * math.pi * np.fft.fftfreq(grid.n_points, d=grid.dx)
    half = np.exp(-0.25 * k * k * dt)

    def flux_div(q, b):
        return -np.fft.ifft(1j * k * np.fft.fft(b * q)).real

    q = np.exp(-(xs - x) ** 2 / (2 * width * width)) / math.sqrt(2 * math.pi * width * width)
    for j in range(n):
        s = t + j * dt
        b0 = btab[h_rec.index_of(s)]
        b1 = btab[h_rec.index_of(s + dt)]
        bm = 0.5 * (b0 + b1)
        q = np.fft.ifft(half * np.fft.fft(q)).real
        k1 = flux_div(q, b0)
        k2 = flux_div(q + 0.5 * dt * k1, bm)
        k3 = flux_div(q + 0.5 * dt * k2, bm)
        k4 = flux_div(q + dt * k3, b1)
        q = q + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        q = np.fft.ifft(half * np.fft.fft(q)).real
    return ComplexField(grid, q.astype(complex), h_rec.t1)


def prop7_product(h_rec: EvolutionRecord, x: float, t: float, width: float | None = None):
    """``(y, h(x,t)/h1(y) q(t,x,t1,y))`` on the grid nodes."""
    q = fokker_planck_density(h_rec, x, t, width).values.real
    hx = float(interp_values(h_rec.at(t).values.real, h_rec.grid, x))
    h1 = h_rec.values[-1].real
    return h_rec.grid.x, hx / h1 * q


def prop7_kernel_check(h_rec: EvolutionRecord, t: float | None = None, xs=(-1.0, 0.0, 1.0),
                       y_window: float = 3.0, tolerance: float = 5e-2,
                       width: float | None = None) -> ResidualReport:
    """Max over a sub-grid of ``|h(x,t)/h1(y) q(t,x,t1,y) - p(t,x,t1,y)|``.

    The start is a Gaussian of variance ``width^2`` rather than a delta, so
    the comparison kernel is ``p`` over the time ``t1 - t + width^2``.
    """
    if not h_rec.config.potential.is_zero():
        raise PreconditionError("prop7 check needs a record with V = 0")
    if h_rec.kind != "heat":
        raise PreconditionError("prop7 check needs a heat record")
    t = h_rec.t0 if t is None else t
    width = 3 * h_rec.grid.dx if width is None else width
    tau = h_rec.t1 - t
    worst, worst_raw = 0.0, 0.0
    for x in xs:
        y, prod = prop7_product(h_rec, x, t, width)
        sel = np.abs(y - x) <= y_window
        p_reg = kernel_p(0.0, x, tau + width * width, y[sel])
        p_raw = kernel_p(0.0, x, tau, y[sel])
        worst = max(worst, float(np.abs(prod[sel] - p_reg).max()))
        worst_raw = max(worst_raw, float(np.abs(prod[sel] - p_raw).max()))
    return ResidualReport("prop7_kernel", worst, tolerance, h_rec.grid.to_dict(), h_rec.dt,
                          {"xs": list(xs), "y_window": y_window, "t": t, "t1": h_rec.t1,
                           "start_width": width, "residual_vs_unregularised_p": worst_raw})


def prop7_independence(h_a: EvolutionRecord, h_b: EvolutionRecord, t: float | None = None,
                       xs=(-1.0, 0.0, 1.0), y_window: float = 3.0,
                       tolerance: float = 5e-2) -> ResidualReport:
    """Largest difference between the product kernels of two heat records."""
    t = h_a.t0 if t is None else t
    worst = 0.0
    for x in xs:
        y, pa = prop7_product(h_a, x, t)
        _, pb = prop7_product(h_b, x, t)
        sel = np.abs(y - x) <= y_window
        worst = max(worst, float(np.abs(pa[sel] - pb[sel]).max()))
    return ResidualReport("prop7_independence", worst, tolerance, h_a.grid.to_dict(), h_a.dt,
                          {"xs": list(xs), "y_window": y_window, "t": t})


def pq_independence_check(rec_a: EvolutionRecord, rec_b: EvolutionRecord, t0: float, t: float,
                            xs, ys, tolerance: float = 1e-12) -> ResidualReport:
    """``psi(t,x)/psi0(y) p_q`` for two records against each other and against ``K``.

    The residual is relative to ``|K|``, which is constant in ``x`` and ``y``.
    """
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    K = kernel_K(t0, Y, t, X, rec_a.config)
    out = []
    for rec in (rec_a, rec_b):
        psi_t = interp_values(rec.at(t).values, rec.grid, X)
        psi_0 = interp_values(rec.at(t0).values, rec.grid, Y)
        out.append(psi_t / psi_0 * kernel_pq(t0, Y, t, X, rec))
    scale = float(np.abs(K).max())
    diff_ab = float(np.abs(out[0] - out[1]).max()) / scale
    diff_k = max(float(np.abs(o - K).max()) for o in out) / scale
    pq_change = float(np.abs(kernel_pq(t0, Y, t, X, rec_a) - kernel_pq(t0, Y, t, X, rec_b)).max())
    return ResidualReport("pq_independence", max(diff_ab, diff_k), tolerance,
                          rec_a.grid.to_dict(), rec_a.dt,
                          {"between_records": diff_ab, "against_K": diff_k,
                           "max_change_in_p_q": pq_change, "t0": t0, "t": t})


__all__ = ["trotter_step_quantum", "trotter_step_heat", "trotter_evolve", "TrotterRun",
           "convergence_scan", "write_convergence_csv", "kernel_threshold",
           "fresnel_warning_threshold", "free_step_spectral", "reference_solution",
           "fokker_planck_density", "prop7_kernel_check", "prop7_independence",
           "prop7_product", "pq_independence_check"]
