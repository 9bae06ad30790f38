"""Named experiment set-ups: grid, physical constants, initial data and a record builder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .evolve import EvolutionRecord, PhysConfig, heat_terminal_solve, record_from_function, schrodinger_evolve
from .grid import ComplexField, GridSpec
from .states import Potential, coherent_state, free_packet, harmonic_ground

SCENARIOS = ("free_packet", "harmonic_ground", "harmonic_coherent", "ou_feynman_kac", "custom")


@dataclass
class Scenario:
    name: str
    grid: GridSpec
    cfg: PhysConfig
    kind: str
    initial: Callable
    closed_form: Callable | None = None
    t_end: float = 1.0
    params: dict = field(default_factory=dict)

    def initial_field(self) -> ComplexField:
        return ComplexField.from_function(self.grid, self.initial)

    def record(self, t1: float | None = None) -> EvolutionRecord:
        """Closed-form record when available, otherwise a solver run from ``t = 0``."""
        t1 = self.t_end if t1 is None else t1
        if self.kind == "heat":
            return heat_terminal_solve(self.initial_field(), self.cfg, 0.0, t1)
        if self.closed_form is not None:
            return record_from_function(self.closed_form, self.grid, self.cfg, 0.0, t1)
        return schrodinger_evolve(self.initial_field(), self.cfg, t1)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "t_end": self.t_end,
                "grid": self.grid.to_dict(), "phys": self.cfg.to_dict(), "params": dict(self.params)}


def _potential(spec: dict, mass: float) -> Potential:
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return Potential.zero()
    if kind == "harmonic":
        return Potential.harmonic(float(spec.get("omega", 1.0)), mass)
    if kind == "constant":
        return Potential.constant(float(spec.get("value", 0.0)))
    raise ConfigError(f"unknown potential kind {kind!r}")


def build_scenario(name: str, grid: dict | None = None, phys: dict | None = None,
                   state: dict | None = None, t_end: float = 1.0) -> Scenario:
    """Assemble a scenario from plain dictionaries (the config file sections)."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    grid = dict(grid or {})
    phys = dict(phys or {})
    state = dict(state or {})
    g = GridSpec(float(grid.get("half_width", 12.0)), int(grid.get("n_points", 1024)))
    hbar = float(phys.get("hbar", 1.0))
    mass = float(phys.get("mass", 1.0))
    dt = float(phys.get("dt", 1e-3))
    omega = float(phys.get("omega", 1.0))
    harm = Potential.harmonic(omega, mass)
    kw = {"hbar": hbar, "mass": mass}

    if name == "free_packet":
        sp = {"s0": float(state.get("s0", 1.0)), "k0": float(state.get("k0", 1.0)),
              "x0": float(state.get("x0", 0.0))}
        cfg = PhysConfig(hbar, mass, Potential.zero(), dt)
        return Scenario(name, g, cfg, "schrodinger", lambda x: free_packet(x, 0.0, **sp, **kw),
                        lambda x, t: free_packet(x, t, **sp, **kw), t_end, sp)
    if name == "harmonic_ground":
        cfg = PhysConfig(hbar, mass, harm, dt)
        return Scenario(name, g, cfg, "schrodinger",
                        lambda x: harmonic_ground(x, 0.0, omega, **kw),
                        lambda x, t: harmonic_ground(x, t, omega, **kw), t_end, {"omega": omega})
    if name == "harmonic_coherent":
        sp = {"q0": float(state.get("q0", 1.0)), "p0": float(state.get("p0", 0.0))}
        cfg = PhysConfig(hbar, mass, harm, dt)
        return Scenario(name, g, cfg, "schrodinger",
                        lambda x: coherent_state(x, 0.0, omega=omega, **sp, **kw),
                        lambda x, t: coherent_state(x, t, omega=omega, **sp, **kw), t_end,
                        {**sp, "omega": omega})
    if name == "ou_feynman_kac":
        # terminal data exp(-x^2/2) with V = x^2/2: h(x, t) = exp(-(t1 - t)/2) exp(-x^2/2)
        cfg = PhysConfig(1.0, 1.0, Potential.harmonic(1.0, 1.0), dt)
        return Scenario(name, g, cfg, "heat", lambda x: np.exp(-0.5 * x * x),
                        lambda x, t: np.exp(-0.5 * (t_end - t)) * np.exp(-0.5 * x * x), t_end, {})
    sp = {"s0": float(state.get("s0", 1.0)), "k0": float(state.get("k0", 0.0)),
          "x0": float(state.get("x0", 0.0))}
    cfg = PhysConfig(hbar, mass, _potential(phys.get("potential", {}), mass), dt)
    return Scenario(name, g, cfg, "schrodinger", lambda x: free_packet(x, 0.0, **sp, **kw), None,
                    t_end, {**sp, "potential": cfg.potential.to_dict()})
