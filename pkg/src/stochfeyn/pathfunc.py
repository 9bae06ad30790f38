"""Path functionals on sampled ensembles.

* ``girsanov_weight``: the real weight Z between the h-transformed diffusion
  and Wiener measure, and the pathwise Feynman-Kac identity it satisfies.
* ``feynman_kac_estimate``: plain Monte Carlo over Wiener paths.
* ``complex_weight``: the complex weight Z~ built from the quantum drift and
  bilateral increments, with its pathwise, conditional and modulus checks.
* Finite-partition complex measures (total variation, polar decomposition).

Stochastic sums
---------------
Forward (Ito) sums of ``f(x) dx`` are left-point sums.  By default each step
also carries the second-order Ito-Taylor term ``+1/2 f'(x) ((dx)^2 - s2 dt)``
(``-`` for backward sums).  The term has zero conditional mean, so it does
not change the continuum limit, but it removes the O(sqrt(dt)) pathwise
fluctuation of the plain sum, which would otherwise swamp pathwise identity
checks at dt = 1e-3.  ``ito_correction=False`` gives the plain sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .evolve import EvolutionRecord
from .grid import GridSpec, d1, interp_values, trapezoid_weights
from .reports import write_csv
from .sde import DriftLookup, PathEnsemble, as_table, bin_average, path_seeds

MIN_PATHS_PER_BIN = 200


@dataclass
class WeightSeries:
    """Per-path weights stored as per-step log increments.

    ``log_increments[k, i]`` is the contribution of step ``times[k] -> times[k+1]``
    for path ``i``; any sub-interval weight is the exponential of a partial sum,
    which makes the multiplicative property hold by construction.
    """

    definition: str
    times: np.ndarray
    log_increments: np.ndarray
    dt: float
    potential_integral: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.log_increments.shape[1]

    def _index(self, t) -> int:
        k = int(round((t - self.times[0]) / self.dt))
        if k < 0 or k >= len(self.times):
            raise PreconditionError(f"time {t} outside weight series span")
        return k

    def log_weight(self, t_a=None, t_b=None) -> np.ndarray:
        a = 0 if t_a is None else self._index(t_a)
        b = len(self.times) - 1 if t_b is None else self._index(t_b)
        return self.log_increments[a:b].sum(axis=0)

    def weight(self, t_a=None, t_b=None) -> np.ndarray:
        return np.exp(self.log_weight(t_a, t_b))

    @property
    def final(self) -> np.ndarray:
        return self.weight()


def _trapezoid_in_time(values: np.ndarray, dt: float) -> np.ndarray:
    """Per-step trapezoid contributions ``(f_k + f_{k+1}) dt / 2`` of a (time, path) array."""
    return 0.5 * (values[1:] + values[:-1]) * dt


def potential_on_paths(pe: PathEnsemble, V) -> np.ndarray:
    """``V(x)`` at every stored (time, path) point."""
    return np.asarray(V(pe.positions), dtype=float).reshape(pe.positions.shape)


# --- Girsanov weight and Feynman-Kac -----------------------------------------

def girsanov_weight(pe: PathEnsemble, h_rec: EvolutionRecord,
                    ito_correction: bool = True) -> WeightSeries:
    """Discrete ``Z = exp{ 1/2 int |grad log h|^2 dtau - int grad log h . dx }``.

    ``pe`` must be a forward ensemble simulated under the drift ``grad log h``
    of the heat record ``h_rec``.  The potential integral ``int V dtau``
    (trapezoid in time) is attached for the pathwise identity check.
    """
    if pe.direction != "forward" or pe.n_times < 2 or pe.noise_plus is None:
        raise PreconditionError("girsanov_weight needs a full forward ensemble")
    if h_rec.kind != "heat":
        raise PreconditionError("girsanov_weight needs a heat record")
    table = as_table(h_rec)
    lookup = DriftLookup(table, pe.dt)
    db = d1(table.b_plus, table.grid.dx)
    X, dt = pe.positions, pe.dt
    n = pe.n_times - 1
    inc = np.empty((n, pe.n_paths))
    for k in range(n):
        t = pe.times[k]
        b = lookup("b_plus", t, X[k])
        dx = X[k + 1] - X[k]
        inc[k] = 0.5 * b * b * dt - b * dx
        if ito_correction:
            inc[k] -= 0.5 * lookup(db, t, X[k]) * (dx * dx - dt)
    Vint = _trapezoid_in_time(potential_on_paths(pe, h_rec.config.potential), dt)
    return WeightSeries("girsanov", pe.times.copy(), inc, dt, Vint)


@dataclass
class PathwiseReport:
    check: str
    tolerance: float
    fraction_within: float
    required_fraction: float
    median_error: float
    p95_error: float
    n_paths: int
    details: dict = field(default_factory=dict)
    errors: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.fraction_within >= self.required_fraction

    def to_dict(self) -> dict:
        return {"check": self.check, "tolerance": self.tolerance,
                "fraction_within": self.fraction_within,
                "required_fraction": self.required_fraction,
                "median_error": self.median_error, "p95_error": self.p95_error,
                "n_paths": self.n_paths, "pass": self.passed, **self.details}


def _pathwise(check, err, tol, frac, **details) -> PathwiseReport:
    err = np.asarray(err, dtype=float)
    return PathwiseReport(check, tol, float(np.mean(err <= tol)), frac,
                          float(np.median(err)), float(np.quantile(err, 0.95)), len(err),
                          details, err)


def girsanov_pathwise_check(pe: PathEnsemble, h_rec: EvolutionRecord, t: float | None = None,
                       tolerance: float = 2e-2, required_fraction: float = 0.95,
                       ito_correction: bool = True) -> PathwiseReport:
    """Relative error of ``h(x(t),t) = h1(x(t1)) exp(-int_t^t1 V) Z_t^t1`` per path."""
    ws = girsanov_weight(pe, h_rec, ito_correction)
    t = pe.times[0] if t is None else t
    k = ws._index(t)
    g = h_rec.grid.with_boundary("clamp-drift")
    h_t = interp_values(h_rec.at(pe.times[k]).values.real, g, pe.positions[k])
    h_1 = interp_values(h_rec.at(pe.times[-1]).values.real, g, pe.positions[-1])
    rhs = h_1 * np.exp(-ws.potential_integral[k:].sum(axis=0)) * ws.weight(pe.times[k])
    err = np.abs(rhs / h_t - 1.0)
    return _pathwise("girsanov_pathwise", err, tolerance, required_fraction, t=float(pe.times[k]),
                     dt_sde=pe.dt, ito_correction=ito_correction)


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    n_paths: int
    details: dict = field(default_factory=dict)

    def within(self, target: float, n_sigma: float = 3.0) -> bool:
        return abs(self.estimate - target) <= n_sigma * self.stderr

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "n_paths": self.n_paths,
                **self.details}


def feynman_kac_estimate(x: float, t: float, t1: float, V, h1, n_paths: int, seed: int,
                         dt: float = 1e-3, batch_size: int = 20000) -> MCEstimate:
    """Monte Carlo for ``E[h1(w(t1)) exp(-int_t^t1 V(w) dtau)]`` over Wiener paths from ``(t, x)``.

    ``V`` and ``h1`` are vectorised callables.  The time integral is the
    trapezoid rule on the Euler grid.  Path ``i`` uses the generator seeded
    from ``(seed, i)``, so the result does not depend on ``batch_size``.
    """
    if n_paths < 100:
        raise PreconditionError("feynman_kac_estimate needs at least 100 paths")
    if seed is None:
        raise PreconditionError("a seed is required")
    n = int(round((t1 - t) / dt))
    if n < 1 or abs(n * dt - (t1 - t)) > 1e-9 * max(1.0, abs(t1)):
        raise PreconditionError("t1 - t must be a positive multiple of dt")
    values = np.empty(n_paths)
    sq = math.sqrt(dt)
    for start in range(0, n_paths, batch_size):
        idx = np.arange(start, min(start + batch_size, n_paths))
        w = np.full(len(idx), float(x))
        vint = 0.5 * np.asarray(V(w), dtype=float) * dt
        z = _normals(path_seeds(seed, idx), n)
        for k in range(n):
            w = w + sq * z[k]
            vk = np.asarray(V(w), dtype=float) * dt
            vint = vint + (vk if k < n - 1 else 0.5 * vk)
        values[idx] = np.asarray(h1(w), dtype=float) * np.exp(-vint)
    mean = math.fsum(values) / n_paths
    se = float(np.std(values, ddof=1) / math.sqrt(n_paths))
    return MCEstimate(mean, se, n_paths, {"x": x, "t": t, "t1": t1, "dt": dt, "seed": int(seed)})


def _normals(seeds, n_steps: int) -> np.ndarray:
    z = np.empty((n_steps, len(seeds)))
    for i, s in enumerate(seeds):
        z[:, i] = np.random.default_rng(int(s)).standard_normal(n_steps)
    return z


# --- complex weight -----------------------------------------------------------

def complex_weight(pe: PathEnsemble, rec: EvolutionRecord,
                   ito_correction: bool = True) -> WeightSeries:
    """Discrete ``Z~ = exp{ -(i m / 2 hbar) int v_q.v_q dtau + (i m / hbar) int v_q . d_b x }``.

    The bilateral integral is ``(1-i)/2`` times a forward sum plus ``(1+i)/2``
    times a backward sum.  Step ``k -> k+1`` contributes the forward term at
    ``x_k`` and the backward term at ``x_{k+1}``; the ``dtau`` integral uses
    the same weighting.  ``v_q.v_q`` is the complex square (no conjugate).
    The potential integral (trapezoid in time) is attached separately.
    """
    if pe.direction != "forward" or pe.n_times < 2:
        raise PreconditionError("complex_weight needs a full forward ensemble")
    if rec.kind == "heat":
        raise PreconditionError("complex_weight needs a Schrodinger record")
    table = as_table(rec)
    lookup = DriftLookup(table, pe.dt)
    cfg = rec.config
    c = 1j * cfg.mass / cfg.hbar
    # g = (i m / hbar) v_q = grad log psi and its gradient
    g_tab = c * table.v_q
    dg_tab = d1(g_tab, table.grid.dx)
    s2 = cfg.sigma2
    X, dt = pe.positions, pe.dt
    n = pe.n_times - 1
    wf, wb = 0.5 * (1 - 1j), 0.5 * (1 + 1j)

    def term(k, dx, sign):
        g = lookup(g_tab, pe.times[k], X[k])
        out = g * dx - g * g * dt / (2 * c)
        if ito_correction:
            out = out + sign * 0.5 * lookup(dg_tab, pe.times[k], X[k]) * (dx * dx - s2 * dt)
        return out

    inc = np.empty((n, pe.n_paths), dtype=complex)
    for k in range(n):
        dx = X[k + 1] - X[k]
        inc[k] = wf * term(k, dx, +1) + wb * term(k + 1, dx, -1)
    Vint = _trapezoid_in_time(potential_on_paths(pe, cfg.potential), dt)
    return WeightSeries("complex", pe.times.copy(), inc, dt, Vint)


def _psi_at(rec: EvolutionRecord, t: float, x: np.ndarray) -> np.ndarray:
    return interp_values(rec.at(t).values, rec.grid.with_boundary("clamp-drift"), x)


def feynman_integrand(pe: PathEnsemble, rec: EvolutionRecord, ws: WeightSeries,
                      t: float | None = None) -> np.ndarray:
    """Per-path ``psi0(x(t0)) exp(-(i/hbar) int_t0^t V) Z~_t0^t``."""
    t = pe.times[-1] if t is None else t
    k = ws._index(t)
    psi0 = _psi_at(rec, pe.times[0], pe.positions[0])
    phase = np.exp(-1j / rec.config.hbar * ws.potential_integral[:k].sum(axis=0))
    return psi0 * phase * ws.weight(None, pe.times[k])


def psi_pathwise_check(pe: PathEnsemble, rec: EvolutionRecord, t: float | None = None,
                      tolerance: float = 5e-2, required_fraction: float = 0.95,
                      ws: WeightSeries | None = None) -> PathwiseReport:
    """Per-path relative error of ``psi(x(t),t) = psi0(x(0)) exp(-(i/hbar) int V) Z~``."""
    ws = complex_weight(pe, rec) if ws is None else ws
    t = pe.times[-1] if t is None else t
    k = ws._index(t)
    lhs = _psi_at(rec, pe.times[k], pe.positions[k])
    rhs = feynman_integrand(pe, rec, ws, pe.times[k])
    err = np.abs(rhs / lhs - 1.0)
    return _pathwise("psi_pathwise", err, tolerance, required_fraction, t=float(pe.times[k]),
                     dt_sde=pe.dt)


def modulus_law_check(pe: PathEnsemble, rec: EvolutionRecord, t: float | None = None,
                      tolerance: float = 5e-2, required_fraction: float = 0.95,
                      ws: WeightSeries | None = None) -> PathwiseReport:
    """Per-path relative error of ``|Z~| = rho^(1/2)(x(t), t) / rho0^(1/2)(x(0))``."""
    ws = complex_weight(pe, rec) if ws is None else ws
    t = pe.times[-1] if t is None else t
    k = ws._index(t)
    target = (np.abs(_psi_at(rec, pe.times[k], pe.positions[k]))
              / np.abs(_psi_at(rec, pe.times[0], pe.positions[0])))
    err = np.abs(np.abs(ws.weight(None, pe.times[k])) / target - 1.0)
    return _pathwise("modulus_law", err, tolerance, required_fraction, t=float(pe.times[k]),
                     dt_sde=pe.dt)


@dataclass
class BinReport:
    """Per-endpoint-bin comparison of a Monte Carlo estimate with a target."""

    check: str
    centers: np.ndarray
    counts: np.ndarray
    estimate: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    bias: np.ndarray
    min_count: int = MIN_PATHS_PER_BIN
    n_sigma: float = 3.0
    required_fraction: float = 0.9
    details: dict = field(default_factory=dict)

    @property
    def qualifying(self) -> np.ndarray:
        return self.counts >= self.min_count

    @property
    def within(self) -> np.ndarray:
        return np.abs(self.estimate - self.target) <= self.n_sigma * self.stderr + self.bias

    @property
    def pass_fraction(self) -> float:
        q = self.qualifying
        return float(np.mean(self.within[q])) if q.any() else float("nan")

    @property
    def passed(self) -> bool:
        return bool(self.pass_fraction >= self.required_fraction)

    def to_dict(self) -> dict:
        return {"check": self.check, "pass_fraction": self.pass_fraction,
                "required_fraction": self.required_fraction, "n_sigma": self.n_sigma,
                "min_count": self.min_count, "n_qualifying": int(self.qualifying.sum()),
                "max_bias": float(np.max(self.bias[self.qualifying], initial=0.0)),
                "pass": self.passed, **self.details}

    def to_csv(self, path) -> None:
        est = np.asarray(self.estimate, dtype=complex)
        tgt = np.asarray(self.target, dtype=complex)
        write_csv(path, ["bin_center", "count", "re_est", "im_est", "re_target", "im_target",
                         "stderr"],
                  [self.centers, self.counts, np.nan_to_num(est.real), np.nan_to_num(est.imag),
                   tgt.real, tgt.imag, self.stderr])


def conditional_representation_check(pe: PathEnsemble, rec: EvolutionRecord, t: float | None = None,
                                     n_bins: int = 32, x_range: float = 3.0,
                                     ws: WeightSeries | None = None, target_time: float | None = None
                                     ) -> BinReport:
    """Endpoint-binned estimate of ``E[psi0(x(0)) exp(-(i/hbar) int V) Z~ | x(t) in bin]``.

    The target is ``psi(bin center, t)`` (or at ``target_time`` if given).
    The reported binning bias is ``|mean of psi(x(t)) over the bin's paths -
    psi(bin center)|``, i.e. the difference between conditioning on a bin and
    conditioning on its centre, measured on the same sample.
    """
    ws = complex_weight(pe, rec) if ws is None else ws
    t = pe.times[-1] if t is None else t
    k = ws._index(t)
    xt = pe.positions[k]
    edges = np.linspace(-x_range, x_range, n_bins + 1)
    est = bin_average(xt, feynman_integrand(pe, rec, ws, pe.times[k]), edges, MIN_PATHS_PER_BIN)
    tt = pe.times[k] if target_time is None else target_time
    target = _psi_at(rec, tt, est.centers)
    at_end = bin_average(xt, _psi_at(rec, tt, xt), edges, MIN_PATHS_PER_BIN)
    bias = np.nan_to_num(np.abs(at_end.mean - target), nan=np.inf)
    return BinReport("conditional_representation", est.centers, est.counts, est.mean, target,
                     est.stderr, bias, details={"t": float(pe.times[k]), "n_bins": n_bins,
                                                "x_range": x_range})


@dataclass
class TVReport:
    bins: BinReport
    pathwise: PathwiseReport
    l1_norm_psi0: float
    lebesgue_bin_value: np.ndarray

    @property
    def passed(self) -> bool:
        return self.pathwise.passed and self.bins.passed

    def to_dict(self) -> dict:
        return {"check": "total_variation", "pass": self.passed,
                "pathwise": self.pathwise.to_dict(), "bins": self.bins.to_dict(),
                "l1_norm_psi0": self.l1_norm_psi0}


def l1_norm(values: np.ndarray, grid: GridSpec) -> float:
    """``int |f| dx`` by trapezoid quadrature."""
    return float(trapezoid_weights(grid) @ np.abs(values))


def total_variation_check(pe: PathEnsemble, rec: EvolutionRecord, t: float | None = None,
                          n_bins: int = 32, x_range: float = 3.0,
                          ws: WeightSeries | None = None) -> TVReport:
    """Modulus law per path, plus per-bin mean ``|Z~|``.

    Per bin the estimate is the mean of ``|Z~|`` over paths ending in the bin
    and the target is the bin mean of ``rho^(1/2)(x(t),t) / rho0^(1/2)(x(0))``
    over the same paths.  ``lebesgue_bin_value`` holds
    ``rho^(1/2)(center, t) * int rho0^(1/2) dx`` for reference only; it
    replaces the conditional law of ``x(0)`` by Lebesgue measure and is not
    used for pass/fail.
    """
    ws = complex_weight(pe, rec) if ws is None else ws
    t = pe.times[-1] if t is None else t
    k = ws._index(t)
    xt = pe.positions[k]
    edges = np.linspace(-x_range, x_range, n_bins + 1)
    modz = np.abs(ws.weight(None, pe.times[k]))
    est = bin_average(xt, modz, edges, MIN_PATHS_PER_BIN)
    formula = (np.abs(_psi_at(rec, pe.times[k], xt))
               / np.abs(_psi_at(rec, pe.times[0], pe.positions[0])))
    tgt = bin_average(xt, formula, edges, MIN_PATHS_PER_BIN)
    # bin-mean relative mismatch allowed at the pathwise tolerance
    bias = 5e-2 * np.nan_to_num(np.abs(tgt.mean), nan=np.inf)
    bins = BinReport("total_variation_bins", est.centers, est.counts, est.mean,
                     np.nan_to_num(tgt.mean), est.stderr, bias,
                     details={"t": float(pe.times[k])})
    l1 = l1_norm(rec.at(pe.times[0]).values, rec.grid)
    lebesgue = np.abs(_psi_at(rec, pe.times[k], est.centers)) * l1
    return TVReport(bins, modulus_law_check(pe, rec, pe.times[k], ws=ws), l1, lebesgue)


def solution_dependence_check(pe_a: PathEnsemble, rec_a: EvolutionRecord,
                              pe_b: PathEnsemble, rec_b: EvolutionRecord, t: float | None = None,
                              n_bins: int = 32, x_range: float = 3.0, n_sigma: float = 5.0) -> dict:
    """Compare per-bin mean ``|Z~|`` for two solutions sharing the potential.

    Returns the largest separation in units of the combined standard error;
    the measures differ when it exceeds ``n_sigma`` in some qualifying bin.
    """
    edges = np.linspace(-x_range, x_range, n_bins + 1)
    out = []
    for pe, rec in ((pe_a, rec_a), (pe_b, rec_b)):
        ws = complex_weight(pe, rec)
        tt = pe.times[-1] if t is None else t
        out.append(bin_average(pe.positions[pe.index_of(tt)], np.abs(ws.weight(None, tt)),
                               edges, MIN_PATHS_PER_BIN))
    a, b = out
    q = a.qualifying & b.qualifying
    z = np.abs(a.mean - b.mean) / np.hypot(a.stderr, b.stderr)
    zmax = float(np.max(z[q])) if q.any() else float("nan")
    return {"check": "solution_dependence", "max_separation_sigma": zmax, "n_sigma": n_sigma,
            "n_qualifying": int(q.sum()), "pass": bool(zmax > n_sigma)}


# --- finite-partition complex measures --------------------------------------

@dataclass
class FinitePartitionMeasure:
    cells: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells)
        self.masses = np.asarray(self.masses, dtype=complex)
        if self.cells.shape != self.masses.shape or self.masses.ndim != 1:
            raise PreconditionError("cells and masses must be matching 1D arrays")

    @property
    def total_mass(self) -> complex:
        m = self.masses
        return complex(math.fsum(m.real), math.fsum(m.imag))

    def coarsen(self, labels) -> "FinitePartitionMeasure":
        """Merge cells sharing a label (masses add)."""
        labels = np.asarray(labels)
        uniq, inv = np.unique(labels, return_inverse=True)
        re = np.bincount(inv, weights=self.masses.real, minlength=len(uniq))
        im = np.bincount(inv, weights=self.masses.imag, minlength=len(uniq))
        return FinitePartitionMeasure(uniq, re + 1j * im)


def finite_partition_tv(m: FinitePartitionMeasure) -> float:
    return math.fsum(np.abs(m.masses))


def polar_decompose(m: FinitePartitionMeasure):
    """Return ``(h, |m|)`` with ``|h_k| = 1`` and ``m_k = h_k |m_k|`` (``h_k = 1`` on null cells)."""
    tv = np.abs(m.masses)
    h = np.ones_like(m.masses)
    nz = tv > 0
    h[nz] = m.masses[nz] / tv[nz]
    return h, FinitePartitionMeasure(m.cells.copy(), tv.astype(complex))


def measure_from_weights(weights: np.ndarray) -> FinitePartitionMeasure:
    """Empirical measure putting mass ``Z~_i / n`` on each sampled path."""
    w = np.asarray(weights, dtype=complex)
    return FinitePartitionMeasure(np.arange(len(w)), w / len(w))


__all__ = ["WeightSeries", "girsanov_weight", "girsanov_pathwise_check", "feynman_kac_estimate",
           "MCEstimate", "complex_weight", "feynman_integrand", "psi_pathwise_check",
           "modulus_law_check", "conditional_representation_check", "total_variation_check",
           "solution_dependence_check", "FinitePartitionMeasure", "finite_partition_tv",
           "polar_decompose", "measure_from_weights", "BinReport", "PathwiseReport", "TVReport"]
