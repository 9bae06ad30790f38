"""Command-line front end: run solvers, samplers and verification suites, write CSV/JSON.

Exit status 0 means every check passed, 1 means a check failed and 2 means a
usage or configuration error.  Configuration files are YAML with a
``schema_version`` key; command-line flags override file values.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import sde
from . import trotter as tr
from .errors import ConfigError, StochFeynError
from .evolve import relative_norm_drift
from .fields import check_nelson_relation, fields_from_psi
from .grid import ComplexField, l2_distance
from .pathfunc import feynman_kac_estimate
from .reports import write_json
from .scenarios import SCENARIOS, build_scenario
from .verify import SUITES, Context, run_suite

SCHEMA_VERSION = 1
SECTIONS = {"schema_version", "scenario", "seed", "out", "grid", "phys", "state", "sde",
            "trotter", "feynman_kac"}
U64_MAX = 2 ** 64 - 1


@dataclass
class RunConfig:
    scenario: str
    seed: int
    out: Path
    grid: dict = field(default_factory=dict)
    phys: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    sde: dict = field(default_factory=dict)
    trotter: dict = field(default_factory=dict)
    feynman_kac: dict = field(default_factory=dict)
    scenario_given: bool = False

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "scenario": self.scenario, "seed": self.seed,
                "grid": self.grid, "phys": self.phys, "state": self.state, "sde": self.sde,
                "trotter": self.trotter, "feynman_kac": self.feynman_kac}

    def context(self, scenario=None) -> Context:
        return Context(seed=self.seed, n_paths=int(self.sde.get("n_paths", 50000)),
                       dt_sde=float(self.sde.get("dt_sde", 1e-3)), scenario=scenario,
                       grid=self.grid, phys=self.phys, state=self.state)


def _parse_seed(value) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {value!r}")
    if isinstance(value, float) or not 0 <= seed <= U64_MAX:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {value!r}")
    return seed


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}")
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    for key in ("grid", "phys", "state", "sde", "trotter", "feynman_kac"):
        if not isinstance(data.get(key, {}), dict):
            raise ConfigError(f"section {key!r} must be a mapping")
    return data


def resolve(args, data: dict) -> RunConfig:
    """Merge file values and flags, and validate."""
    scenario = args.scenario or data.get("scenario")
    seed = args.seed if args.seed is not None else data.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (--seed or 'seed' in the config)")
    seed = _parse_seed(seed)
    if scenario is not None and scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    out = Path(args.out or data.get("out") or "out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}")
    sections = (dict(data.get(k, {})) for k in ("grid", "phys", "state", "sde", "trotter", "feynman_kac"))
    cfg = RunConfig(scenario or "harmonic_ground", seed, out, *sections,
                    scenario_given=scenario is not None)
    try:
        build_scenario(cfg.scenario, cfg.grid, cfg.phys, cfg.state)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario parameters: {exc}")
    return cfg


def _metadata(cfg: RunConfig, command: str) -> dict:
    now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
    return {"timestamp": now, "version": __version__, "command": command}


def _emit(cfg: RunConfig, name: str, command: str, body: dict) -> Path:
    path = cfg.out / name
    write_json(path, {"metadata": _metadata(cfg, command), "config": cfg.to_dict(), **body})
    return path


# --- subcommands --------------------------------------------------------------

def cmd_evolve(args, cfg: RunConfig) -> int:
    t_end = float(args.t if args.t is not None else cfg.sde.get("t_end", 1.0))
    scn = build_scenario(cfg.scenario, cfg.grid, cfg.phys, cfg.state, t_end)
    rec = scn.record()
    rec.to_csv(cfg.out / "record.csv")
    body = {"scenario": scn.to_dict(), "n_times": len(rec.times), "kind": rec.kind}
    if rec.kind != "heat":
        body["relative_norm_drift"] = relative_norm_drift(rec)
    if scn.closed_form is not None:
        exact = ComplexField.from_function(scn.grid, lambda x: scn.closed_form(x, rec.times[-1]))
        body["l2_error_vs_closed_form_at_end"] = l2_distance(rec.field(-1), exact)
    _emit(cfg, "evolve.json", "evolve", body)
    return 0


def cmd_fields(args, cfg: RunConfig) -> int:
    t = float(args.t if args.t is not None else 0.0)
    scn = build_scenario(cfg.scenario, cfg.grid, cfg.phys, cfg.state, max(t, 1e-3))
    if scn.kind == "heat":
        raise ConfigError("fields needs a wave-function scenario")
    rec = scn.record(max(t, scn.cfg.dt))
    df = fields_from_psi(rec.at(t), scn.cfg)
    df.to_csv(cfg.out / "fields.csv")
    rep = check_nelson_relation(df, scn.cfg)
    _emit(cfg, "fields.json", "fields", {"t": t, "nelson_relation": rep.to_dict()})
    return 0 if rep.passed else 1


def cmd_sample(args, cfg: RunConfig) -> int:
    t_end = float(cfg.sde.get("t_end", 1.0))
    scn = build_scenario(cfg.scenario, cfg.grid, cfg.phys, cfg.state, t_end)
    if scn.kind == "heat":
        raise ConfigError("sample needs a wave-function scenario")
    rec = scn.record()
    n = int(args.n_paths or cfg.sde.get("n_paths", 50000))
    dt_sde = float(cfg.sde.get("dt_sde", 1e-3))
    pe = sde.simulate_forward(rec, n, dt_sde, cfg.seed)
    pe.to_binary(cfg.out / "paths.bin")
    edges = np.linspace(-4.0, 4.0, 33)
    inner = np.linspace(rec.t0, rec.t1, 5)[1:-1]
    sde.write_ensemble_summary(cfg.out / "ensemble_summary.csv", pe, inner, edges)
    tv = sde.born_rule_check(pe, rec)
    passed = tv <= 0.05
    _emit(cfg, "sample.json", "sample", {"n_paths": n, "dt_sde": dt_sde, "t_end": t_end,
                                          "tv_distance": tv, "clamp_hits": pe.clamp_hits,
                                          "pass": passed})
    return 0 if passed else 1


def cmd_feynman_kac(args, cfg: RunConfig) -> int:
    fk = cfg.feynman_kac
    x = float(fk.get("x", 0.0))
    t0 = float(fk.get("t", 0.0))
    t1 = float(fk.get("t1", 1.0))
    n = int(args.n_paths or fk.get("n_paths", 100000))
    scn = build_scenario("ou_feynman_kac", cfg.grid, cfg.phys, cfg.state, t1)
    est = feynman_kac_estimate(x, t0, t1, scn.cfg.potential, scn.initial, n, cfg.seed,
                               dt=float(cfg.sde.get("dt_sde", 1e-3)))
    target = math.exp(-0.5 * (t1 - t0)) * math.exp(-0.5 * x * x)
    passed = est.within(target)
    _emit(cfg, "feynman_kac.json", "feynman-kac",
          {"estimate": est.to_dict(), "target": target, "pass": passed})
    return 0 if passed else 1


def _parse_ls(text) -> list:
    if isinstance(text, (list, tuple)):
        vals = [int(v) for v in text]
    else:
        try:
            vals = [int(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"slice counts must be integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise ConfigError("slice counts must be positive")
    return vals


def cmd_trotter(args, cfg: RunConfig) -> int:
    kind = args.kind or cfg.trotter.get("kind", "quantum")
    if kind not in ("quantum", "heat"):
        raise ConfigError(f"unknown trotter kind {kind!r}")
    ls = _parse_ls(args.l if args.l is not None else cfg.trotter.get("l", [8, 16, 32, 64]))
    t = float(cfg.trotter.get("t", 1.0))
    name = cfg.scenario
    if kind == "heat" and not cfg.scenario_given:
        name = "ou_feynman_kac"
    elif kind == "quantum" and not cfg.scenario_given:
        name = "harmonic_coherent"
    scn = build_scenario(name, cfg.grid, cfg.phys, cfg.state, t)
    if (kind == "heat") != (scn.kind == "heat"):
        raise ConfigError(f"scenario {name!r} does not provide {kind} initial data")
    f0 = scn.initial_field()
    if kind == "heat" and scn.closed_form is not None:
        reference = ComplexField.from_function(scn.grid, lambda x: scn.closed_form(x, 0.0), t)
    else:
        reference = "solver"
    runs, ratios = tr.convergence_scan(f0, scn.cfg, t, ls, kind=kind, reference=reference,
                                       potential_first=not args.potential_last)
    tr.write_convergence_csv(cfg.out / f"trotter_{kind}.csv", runs, ratios)
    finite = [r for r in ratios if not math.isnan(r)]
    passed = all(1.6 <= r <= 2.4 for r in finite)
    _emit(cfg, f"trotter_{kind}.json", "trotter",
          {"kind": kind, "scenario": name, "runs": [r.to_dict() for r in runs], "ratios": ratios,
           "ratio_window": [1.6, 2.4], "pass": passed})
    return 0 if passed else 1


def cmd_verify(args, cfg: RunConfig) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    ctx = cfg.context(cfg.scenario if cfg.scenario_given else None)
    results, failures = {}, []
    for name in names:
        checks = run_suite(name, ctx)
        results[name] = checks
        failures += [f"{name}/{c['check']}" for c in checks if not c["pass"]]
    _emit(cfg, f"verify_{args.suite}.json", f"verify {args.suite}",
          {"suites": results, "failures": failures, "pass": not failures})
    for name, checks in results.items():
        for c in checks:
            print(f"{'PASS' if c['pass'] else 'FAIL'}  {name}/{c['check']}")
    return 0 if not failures else 1


COMMANDS = {"evolve": cmd_evolve, "fields": cmd_fields, "sample": cmd_sample,
            "feynman-kac": cmd_feynman_kac, "trotter": cmd_trotter, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--seed", help="master seed, unsigned 64-bit integer")
    common.add_argument("--scenario", help=f"one of {', '.join(SCENARIOS)}")

    p = argparse.ArgumentParser(prog="stochfeyn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("evolve", parents=[common], help="solve and write the record")
    e.add_argument("--t", type=float, help="final time")
    f = sub.add_parser("fields", parents=[common], help="drift fields at one time")
    f.add_argument("--t", type=float, help="time (default 0)")
    s = sub.add_parser("sample", parents=[common], help="forward Nelson ensemble")
    s.add_argument("--n-paths", type=int)
    k = sub.add_parser("feynman-kac", parents=[common], help="Monte Carlo Feynman-Kac estimate")
    k.add_argument("--n-paths", type=int)
    t = sub.add_parser("trotter", parents=[common], help="slice-count convergence scan")
    t.add_argument("--kind", choices=["quantum", "heat"])
    t.add_argument("--l", help="comma-separated slice counts, e.g. 8,16,32,64")
    t.add_argument("--potential-last", action="store_true",
                   help="apply the potential factor after the kernel in each slice")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", choices=sorted(SUITES) + ["all"])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args, load_config(args.config))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StochFeynError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
