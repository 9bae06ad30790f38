"""Closed-form wave functions and potentials used as references and scenarios."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Potential:
    """Real potential ``V(x)`` identified by a kind and a few parameters.

    ``kind`` is one of ``zero``, ``constant`` (``value``), ``harmonic``
    (``omega``, ``mass``: V = m w^2 x^2 / 2) or ``custom`` (``fn``).
    """

    kind: str = "zero"
    params: dict = field(default_factory=dict)
    fn: Callable | None = field(default=None, compare=False)

    @classmethod
    def zero(cls) -> "Potential":
        return cls("zero")

    @classmethod
    def constant(cls, value: float) -> "Potential":
        return cls("constant", {"value": float(value)})

    @classmethod
    def harmonic(cls, omega: float = 1.0, mass: float = 1.0) -> "Potential":
        return cls("harmonic", {"omega": float(omega), "mass": float(mass)})

    @classmethod
    def custom(cls, fn: Callable, name: str = "custom") -> "Potential":
        return cls("custom", {"name": name}, fn)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "constant":
            return np.full_like(x, self.params["value"])
        if self.kind == "harmonic":
            return 0.5 * self.params["mass"] * self.params["omega"] ** 2 * x * x
        if self.kind == "custom":
            return np.asarray(self.fn(x), dtype=float) * np.ones_like(x)
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "constant" and self.params["value"] == 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: v for k, v in self.params.items()}}


def free_packet(x, t=0.0, s0=1.0, k0=1.0, x0=0.0, hbar=1.0, mass=1.0):
    """Freely spreading Gaussian packet.

    At ``t = 0`` this is ``(pi s0^2)^(-1/4) exp(-(x-x0)^2/(2 s0^2) + i k0 x)``.
    """
    x = np.asarray(x, dtype=float)
    tau = hbar * t / (mass * s0 * s0)
    v = hbar * k0 / mass
    c = 1.0 + 1j * tau
    return ((np.pi * s0 * s0) ** -0.25 / np.sqrt(c)
            * np.exp(-(x - x0 - v * t) ** 2 / (2 * s0 * s0 * c)
                     + 1j * k0 * x - 1j * hbar * k0 * k0 * t / (2 * mass)))


def harmonic_ground(x, t=0.0, omega=1.0, hbar=1.0, mass=1.0):
    x = np.asarray(x, dtype=float)
    alpha = mass * omega / hbar
    return (alpha / np.pi) ** 0.25 * np.exp(-alpha * x * x / 2 - 0.5j * omega * t)


def coherent_state(x, t=0.0, q0=1.0, p0=0.0, omega=1.0, hbar=1.0, mass=1.0):
    """Displaced harmonic ground state following the classical orbit (q(t), p(t))."""
    x = np.asarray(x, dtype=float)
    alpha = mass * omega / hbar
    q = q0 * np.cos(omega * t) + p0 / (mass * omega) * np.sin(omega * t)
    p = p0 * np.cos(omega * t) - mass * omega * q0 * np.sin(omega * t)
    return ((alpha / np.pi) ** 0.25
            * np.exp(-alpha * (x - q) ** 2 / 2 + 1j * p * x / hbar
                     - 0.5j * p * q / hbar - 0.5j * omega * t))
