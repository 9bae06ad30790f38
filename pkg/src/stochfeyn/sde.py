"""Euler-Maruyama sampling of Nelson diffusions and reconstruction of their noises.

Ensembles are stored time-major: ``positions[k, i]`` is path ``i`` at
``times[k]``.  Every path draws from its own generator seeded by
``SeedSequence(master_seed, spawn_key=(global_index,))``, so any subset of
paths (a batch) reproduces exactly the corresponding slice of a full run.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .evolve import EvolutionRecord
from .fields import DriftTable, drift_table
from .grid import GridSpec, interp_values, trapezoid_weights
from .reports import write_csv

MIN_BIN_COUNT = 50


def path_seeds(master_seed: int, indices) -> np.ndarray:
    """64-bit per-path seeds derived from (master_seed, path index)."""
    return np.array([np.random.SeedSequence(int(master_seed), spawn_key=(int(i),))
                     .generate_state(1, np.uint64)[0] for i in indices], dtype=np.uint64)


def _draw(seeds: np.ndarray, n_steps: int):
    """Per-path uniform (for the initial draw) followed by ``n_steps`` normals."""
    u0 = np.empty(len(seeds))
    z = np.empty((n_steps, len(seeds)))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        u0[i] = rng.random()
        z[:, i] = rng.standard_normal(n_steps)
    return u0, z


def density_cdf(rho: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Normalised cumulative trapezoid integral of a nodal density."""
    rho = np.clip(np.asarray(rho, dtype=float), 0.0, None)
    cells = 0.5 * (rho[1:] + rho[:-1]) * grid.dx
    cdf = np.concatenate([[0.0], np.cumsum(cells)])
    return cdf / cdf[-1]


def sample_inverse_cdf(rho: np.ndarray, grid: GridSpec, uniforms) -> np.ndarray:
    """Positions distributed by the piecewise-linear CDF of ``rho`` on the grid."""
    cdf = density_cdf(rho, grid)
    return np.interp(uniforms, cdf, grid.x)


@dataclass
class PathEnsemble:
    times: np.ndarray
    positions: np.ndarray
    master_seed: int
    path_index: np.ndarray
    per_path_seed: np.ndarray
    direction: str = "forward"
    sigma2: float = 1.0
    noise_plus: np.ndarray | None = None
    noise_minus: np.ndarray | None = None
    clamp_hits: int = 0
    grid: GridSpec | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.positions.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_times(self) -> int:
        return len(self.times)

    def index_of(self, t: float) -> int:
        k = int(round((t - self.times[0]) / self.dt))
        if k < 0 or k >= self.n_times or abs(self.times[k] - t) > 0.5 * self.dt + 1e-12:
            raise PreconditionError(f"time {t} outside ensemble span")
        return k

    def to_binary(self, path) -> None:
        """Little-endian dump: u64 n_paths, u64 n_times, f64 dt, then positions[path][time]."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQd", self.n_paths, self.n_times, self.dt))
            fh.write(np.ascontiguousarray(self.positions.T, dtype="<f8").tobytes())

    @staticmethod
    def read_binary(path):
        """Return ``(dt, positions[path, time])`` from a binary dump."""
        with open(path, "rb") as fh:
            n_paths, n_times, dt = struct.unpack("<QQd", fh.read(24))
            data = np.frombuffer(fh.read(), dtype="<f8")
        return dt, data.reshape(n_paths, n_times)


def as_table(source) -> DriftTable:
    if isinstance(source, DriftTable):
        return source
    if isinstance(source, EvolutionRecord):
        return drift_table(source)
    raise PreconditionError("drift source must be an EvolutionRecord or DriftTable")


class DriftLookup:
    """Nearest-record-time, linear-in-space evaluation of a drift table."""

    def __init__(self, table: DriftTable, dt_sde: float):
        self.table = table
        self.grid = table.grid.with_boundary("clamp-drift")
        if len(table.times) > 1 and table.dt > dt_sde * (1 + 1e-9):
            raise PreconditionError("record step must not exceed the SDE step")
        self.t0 = float(table.times[0])
        self.t1 = float(table.times[-1])
        self.rdt = table.dt if len(table.times) > 1 else 1.0

    def row(self, t: float) -> int:
        if t < self.t0 - 1e-9 or t > self.t1 + 1e-9:
            raise PreconditionError(f"drift lookup at t={t} outside record span [{self.t0}, {self.t1}]")
        return min(int(round((t - self.t0) / self.rdt)), len(self.table.times) - 1)

    def __call__(self, name, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate a table attribute (by name) or any array shaped like the table."""
        data = getattr(self.table, name) if isinstance(name, str) else name
        if data is None or np.all(np.isnan(data[self.row(t)])):
            raise PreconditionError(f"drift table has no {name} data")
        return interp_values(data[self.row(t)], self.grid, x)


def _time_axis(table: DriftTable, dt_sde: float, t_start, t_end):
    if not dt_sde > 0:
        raise PreconditionError("dt_sde must be positive")
    t_start = float(table.times[0]) if t_start is None else float(t_start)
    t_end = float(table.times[-1]) if t_end is None else float(t_end)
    n = int(round((t_end - t_start) / dt_sde))
    if n < 1 or abs(n * dt_sde - (t_end - t_start)) > 1e-9 * max(1.0, t_end):
        raise PreconditionError("SDE span must be a positive multiple of dt_sde")
    return t_start + dt_sde * np.arange(n + 1)


def _initial_positions(table, lookup, t, u0, x0):
    if x0 is not None:
        return np.broadcast_to(np.asarray(x0, dtype=float), u0.shape).copy()
    if table.rho is None:
        raise PreconditionError("no density available for initial sampling; pass x0")
    return sample_inverse_cdf(table.rho[lookup.row(t)], table.grid, u0)


def simulate_forward(source, n_paths: int, dt_sde: float, master_seed: int, *,
                     t_start=None, t_end=None, path_offset: int = 0, x0=None,
                     store: str = "full") -> PathEnsemble:
    """Euler-Maruyama ``x_{k+1} = x_k + b_plus(x_k, t_k) dt + sigma sqrt(dt) z_k``.

    ``source`` is a record (drifts from the fields module) or a DriftTable.
    Initial positions come from ``rho(., t_start)`` by inverse CDF unless
    ``x0`` is given.  ``store="endpoints"`` keeps only the first and last
    time and drops the noise array.
    """
    if master_seed is None:
        raise PreconditionError("a master seed is required")
    table = as_table(source)
    lookup = DriftLookup(table, dt_sde)
    times = _time_axis(table, dt_sde, t_start, t_end)
    n = len(times) - 1
    idx = np.arange(path_offset, path_offset + n_paths)
    seeds = path_seeds(master_seed, idx)
    u0, z = _draw(seeds, n)
    sig = math.sqrt(table.sigma2)
    L = table.grid.half_width

    x = _initial_positions(table, lookup, times[0], u0, x0)
    full = store == "full"
    pos = np.empty((n + 1 if full else 2, n_paths))
    pos[0] = x
    noise = np.empty((n, n_paths)) if full else None
    hits = 0
    for k in range(n):
        dw = sig * math.sqrt(dt_sde) * z[k]
        x = x + lookup("b_plus", times[k], x) * dt_sde + dw
        out = np.abs(x) > L
        if out.any():
            hits += int(out.sum())
            x = np.clip(x, -L, L)
        if full:
            pos[k + 1] = x
            noise[k] = dw
    if not full:
        pos[1] = x
        times = times[[0, -1]]
    return PathEnsemble(times, pos, int(master_seed), idx, seeds, "forward", table.sigma2,
                        noise, None, hits, table.grid)


def simulate_reverse(source, n_paths: int, dt_sde: float, master_seed: int, *,
                     t_start=None, t_end=None, path_offset: int = 0, x_end=None,
                     store: str = "full") -> PathEnsemble:
    """Reverse-time Euler-Maruyama driven by the backward drift.

    Terminal positions are drawn from ``rho(., t_end)``; then
    ``x_{k-1} = x_k - b_minus(x_k, t_k) dt - sigma sqrt(dt) z_k``.
    ``noise_minus[k-1]`` holds ``x_k - x_{k-1} - b_minus(x_k, t_k) dt``.
    """
    if master_seed is None:
        raise PreconditionError("a master seed is required")
    table = as_table(source)
    lookup = DriftLookup(table, dt_sde)
    times = _time_axis(table, dt_sde, t_start, t_end)
    n = len(times) - 1
    idx = np.arange(path_offset, path_offset + n_paths)
    seeds = path_seeds(master_seed, idx)
    u0, z = _draw(seeds, n)
    sig = math.sqrt(table.sigma2)
    L = table.grid.half_width

    x = _initial_positions(table, lookup, times[-1], u0, x_end)
    full = store == "full"
    pos = np.empty((n + 1 if full else 2, n_paths))
    pos[-1] = x
    noise = np.empty((n, n_paths)) if full else None
    hits = 0
    for k in range(n, 0, -1):
        dw = sig * math.sqrt(dt_sde) * z[n - k]
        x = x - lookup("b_minus", times[k], x) * dt_sde - dw
        out = np.abs(x) > L
        if out.any():
            hits += int(out.sum())
            x = np.clip(x, -L, L)
        if full:
            pos[k - 1] = x
            noise[k - 1] = dw
    if not full:
        pos[0] = x
        times = times[[0, -1]]
    return PathEnsemble(times, pos, int(master_seed), idx, seeds, "reverse", table.sigma2,
                        None, noise, hits, table.grid)


# --- noise reconstruction ---------------------------------------------------

@dataclass
class QuantumNoise:
    """Reconstructed unit-variance noise increments at interior times ``times``."""

    times: np.ndarray
    positions: np.ndarray
    d_plus_w_plus: np.ndarray
    d_minus_w_minus: np.ndarray
    d_plus_w_minus: np.ndarray
    dt: float

    @property
    def d_b_w_q(self) -> np.ndarray:
        return 0.5 * (1 - 1j) * self.d_plus_w_plus + 0.5 * (1 + 1j) * self.d_minus_w_minus

    @property
    def d_plus_w_q(self) -> np.ndarray:
        """Forward increment of the quantum noise, (1-i)/2 d+w+ + (1+i)/2 d+w-."""
        return 0.5 * (1 - 1j) * self.d_plus_w_plus + 0.5 * (1 + 1j) * self.d_plus_w_minus


def reconstruct_quantum_noise(pe: PathEnsemble, source) -> QuantumNoise:
    """Invert both Ito representations along the same paths.

    For interior index k::

        d+w+ = (x_{k+1} - x_k - b_plus(x_k, t_k) dt) / sigma
        d-w- = (x_k - x_{k-1} - b_minus(x_k, t_k) dt) / sigma
        d+w- = (x_{k+1} - x_k - b_minus(x_{k+1}, t_{k+1}) dt) / sigma
    """
    if pe.n_times < 3:
        raise PreconditionError("need at least three stored times (interior times only)")
    table = as_table(source)
    lookup = DriftLookup(table, pe.dt)
    dt = pe.dt
    sig = math.sqrt(pe.sigma2)
    X = pe.positions
    n_int = pe.n_times - 2
    dpp = np.empty((n_int, pe.n_paths))
    dmm = np.empty_like(dpp)
    dpm = np.empty_like(dpp)
    bm_next = lookup("b_minus", pe.times[1], X[1])
    for j, k in enumerate(range(1, pe.n_times - 1)):
        t = pe.times[k]
        bp = lookup("b_plus", t, X[k])
        bm = bm_next
        bm_next = lookup("b_minus", pe.times[k + 1], X[k + 1])
        dpp[j] = (X[k + 1] - X[k] - bp * dt) / sig
        dmm[j] = (X[k] - X[k - 1] - bm * dt) / sig
        dpm[j] = (X[k + 1] - X[k] - bm_next * dt) / sig
    return QuantumNoise(pe.times[1:-1], X[1:-1], dpp, dmm, dpm, dt)


@dataclass
class QVReport:
    """Quadratic variation of the quantum noise over the interior times.

    ``qv_sum`` is the ensemble mean of the bilateral quadratic increments
    ``(1-i)/2 (d+w+)^2 - (1+i)/2 (d-w-)^2`` summed over time: the second-order
    term of the bilateral change-of-variables rule, whose target is
    ``-i (t - t0)``.  ``product_sum`` is the ensemble mean of the plain
    products ``(d_b w_q)^2`` summed over time, kept for comparison.
    """

    qv_sum: complex
    target: complex
    error: float
    n_paths: int
    dt_sde: float
    span: float
    stderr: float
    product_sum: complex
    per_path: np.ndarray = field(repr=False, default=None)
    per_path_product: np.ndarray = field(repr=False, default=None)

    @property
    def error_per_unit_time(self) -> float:
        return self.error / self.span

    @classmethod
    def from_per_path(cls, per_path, per_path_product, dt_sde, span) -> "QVReport":
        per_path = np.asarray(per_path)
        n = len(per_path)
        mean = complex(math.fsum(per_path.real) / n, math.fsum(per_path.imag) / n)
        pmean = complex(math.fsum(per_path_product.real) / n, math.fsum(per_path_product.imag) / n)
        target = -1j * span
        se = float(np.sqrt((np.var(per_path.real) + np.var(per_path.imag)) / n))
        return cls(mean, target, abs(mean - target), n, dt_sde, span, se, pmean,
                   per_path, np.asarray(per_path_product))

    @classmethod
    def combine(cls, reports) -> "QVReport":
        reports = list(reports)
        return cls.from_per_path(np.concatenate([r.per_path for r in reports]),
                                 np.concatenate([r.per_path_product for r in reports]),
                                 reports[0].dt_sde, reports[0].span)

    def to_dict(self) -> dict:
        return {"qv_sum": self.qv_sum, "target": self.target, "error": self.error,
                "error_per_unit_time": self.error_per_unit_time, "n_paths": self.n_paths,
                "dt_sde": self.dt_sde, "span": self.span, "stderr": self.stderr,
                "product_sum": self.product_sum}


def quadratic_variation(pe: PathEnsemble, source, noise: QuantumNoise | None = None) -> QVReport:
    qn = noise if noise is not None else reconstruct_quantum_noise(pe, source)
    q = 0.5 * (1 - 1j) * qn.d_plus_w_plus ** 2 - 0.5 * (1 + 1j) * qn.d_minus_w_minus ** 2
    per_path = q.sum(axis=0)
    per_prod = (qn.d_b_w_q ** 2).sum(axis=0)
    span = len(qn.times) * qn.dt
    return QVReport.from_per_path(per_path, per_prod, pe.dt, span)


# --- binned conditional expectations ----------------------------------------

@dataclass
class BinnedEstimate:
    centers: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    target: np.ndarray | None = None
    min_count: int = MIN_BIN_COUNT

    @property
    def qualifying(self) -> np.ndarray:
        return self.counts >= self.min_count

    def within(self, n_sigma: float = 3.0, extra=0.0) -> np.ndarray:
        return np.abs(self.mean - self.target) <= n_sigma * self.stderr + extra

    def pass_fraction(self, n_sigma: float = 3.0, extra=0.0) -> float:
        q = self.qualifying
        return float(np.mean(self.within(n_sigma, extra)[q])) if q.any() else float("nan")


def bin_average(x: np.ndarray, y: np.ndarray, edges: np.ndarray, min_count=MIN_BIN_COUNT):
    """Per-bin count, mean and standard error of ``y`` (real or complex) grouped by ``x``."""
    x = np.ravel(x)
    y = np.ravel(y)
    nb = len(edges) - 1
    which = np.searchsorted(edges, x, side="right") - 1
    ok = (which >= 0) & (which < nb)
    which, y = which[ok], y[ok]
    counts = np.bincount(which, minlength=nb)
    c = np.maximum(counts, 1)

    def _mean_se(yy):
        s1 = np.bincount(which, weights=yy, minlength=nb)
        s2 = np.bincount(which, weights=yy * yy, minlength=nb)
        m = s1 / c
        var = np.maximum(s2 / c - m * m, 0.0) * c / np.maximum(c - 1, 1)
        return m, np.sqrt(var / c)

    if np.iscomplexobj(y):
        mr, sr = _mean_se(y.real)
        mi, si = _mean_se(y.imag)
        mean, se = mr + 1j * mi, np.hypot(sr, si)
    else:
        mean, se = _mean_se(y)
    centers = 0.5 * (edges[1:] + edges[:-1])
    mean = np.where(counts > 0, mean, np.nan)
    return BinnedEstimate(centers, edges, counts, mean, se, None, min_count)


def _time_indices(pe: PathEnsemble, t, stride: int):
    if np.ndim(t) == 0:
        k = pe.index_of(float(t))
        return np.array([k])
    lo, hi = pe.index_of(t[0]), pe.index_of(t[1])
    return np.arange(lo, hi + 1, stride)


def conditional_drift_estimate(pe: PathEnsemble, direction: str, t, bins, source=None,
                               stride: int = 2) -> BinnedEstimate:
    """Binned conditional mean of ``d+x/dt`` (forward), ``d-x/dt`` (backward) or their difference.

    ``t`` is a single time or a ``(t_lo, t_hi)`` window pooled every
    ``stride`` steps (stride 2 keeps the pooled increments disjoint).
    ``bins`` is an array of edges.  With ``source`` the target drift is read
    off the drift table at the bin centres (averaged over the pooled times).
    """
    ks = _time_indices(pe, t, stride)
    if ks.min() < 1 or ks.max() > pe.n_times - 2:
        raise PreconditionError("conditional derivatives need interior times")
    X = pe.positions
    dt = pe.dt
    xs = X[ks]
    fwd = (X[ks + 1] - X[ks]) / dt
    bwd = (X[ks] - X[ks - 1]) / dt
    if direction == "forward":
        y = fwd
    elif direction == "backward":
        y = bwd
    elif direction == "difference":
        y = fwd - bwd
    else:
        raise PreconditionError(f"unknown direction {direction!r}")
    est = bin_average(xs, y, np.asarray(bins, dtype=float))
    if source is not None:
        table = as_table(source)
        lookup = DriftLookup(table, dt)
        c = est.centers
        tgt = np.zeros_like(c)
        for k in ks:
            bp = lookup("b_plus", pe.times[k], c)
            bm = lookup("b_minus", pe.times[k], c)
            tgt += {"forward": bp, "backward": bm, "difference": bp - bm}[direction]
        est.target = tgt / len(ks)
    return est


def forward_quantum_noise_mean(qn: QuantumNoise, bins) -> BinnedEstimate:
    """Binned mean of the forward quantum-noise increment ``d+w_q`` given ``x(t)``."""
    return bin_average(qn.positions, qn.d_plus_w_q, np.asarray(bins, dtype=float))


def write_ensemble_summary(path, pe: PathEnsemble, times, bins) -> None:
    """CSV ``t,bin_center,count,mean_dx_fwd,mean_dx_bwd`` for the requested times."""
    rows = {k: [] for k in ("t", "c", "n", "f", "b")}
    for t in times:
        k = pe.index_of(t)
        f = bin_average(pe.positions[k], pe.positions[k + 1] - pe.positions[k], bins, 0)
        b = bin_average(pe.positions[k], pe.positions[k] - pe.positions[k - 1], bins, 0)
        rows["t"] += [pe.times[k]] * len(f.centers)
        rows["c"] += list(f.centers)
        rows["n"] += list(f.counts)
        rows["f"] += list(np.nan_to_num(f.mean))
        rows["b"] += list(np.nan_to_num(b.mean))
    write_csv(path, ["t", "bin_center", "count", "mean_dx_fwd", "mean_dx_bwd"],
              [rows["t"], rows["c"], rows["n"], rows["f"], rows["b"]])


def histogram_masses(samples: np.ndarray, rho: np.ndarray, grid: GridSpec, n_bins: int = 64,
                     floor: float = 1e-8):
    """Empirical and exact bin masses over the support of ``rho``.

    The bins cover the block where ``rho >= floor * max(rho)``; samples and
    density mass outside it are folded into the two edge bins.
    """
    rho = np.asarray(rho, dtype=float)
    keep = np.flatnonzero(rho >= floor * rho.max())
    lo, hi = grid.x[keep[0]], grid.x[keep[-1]]
    edges = np.linspace(lo, hi, n_bins + 1)
    cdf = density_cdf(rho, grid)
    cdf_edges = np.interp(edges, grid.x, cdf)
    cdf_edges[0], cdf_edges[-1] = 0.0, 1.0
    exact = np.diff(cdf_edges)
    s = np.clip(samples, lo, hi)
    counts, _ = np.histogram(s, bins=edges)
    return edges, counts / len(samples), exact


def tv_distance(samples: np.ndarray, rho: np.ndarray, grid: GridSpec, n_bins: int = 64) -> float:
    """Total-variation distance between the binned sample law and the binned density."""
    _, emp, exact = histogram_masses(samples, rho, grid, n_bins)
    return 0.5 * float(np.abs(emp - exact).sum())


def born_rule_check(pe: PathEnsemble, rec: EvolutionRecord, t: float | None = None,
                    n_bins: int = 64) -> float:
    t = pe.times[-1] if t is None else t
    k = pe.index_of(t)
    rho = np.abs(rec.at(pe.times[k]).values) ** 2
    rho = rho / (trapezoid_weights(rec.grid) @ rho)
    return tv_distance(pe.positions[k], rho, rec.grid, n_bins)
