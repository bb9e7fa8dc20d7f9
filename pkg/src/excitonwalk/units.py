"""Unit conventions.

Energies are wavenumbers (cm^-1), times are femtoseconds and rates are fs^-1.
Chain models use a dimensionless system with ``hbar = kB = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

SPEED_OF_LIGHT_CM_PER_S = 2.99792458e10
PLANCK_J_S = 6.62607015e-34
BOLTZMANN_J_PER_K = 1.380649e-23


@dataclass(frozen=True)
class UnitSystem:
    """Action and Boltzmann constants for a choice of energy/time units."""

    hbar: float
    kB: float
    energy_unit: str = "cm-1"
    time_unit: str = "fs"

    def __post_init__(self):
        if not (self.hbar > 0 and self.kB > 0):
            raise ValueError("hbar and kB must be positive")

    def rate_to_energy(self, rate: float) -> float:
        return rate * self.hbar

    def energy_to_rate(self, energy: float) -> float:
        return energy / self.hbar


# hbar in cm^-1 fs: E[cm^-1] = hbar * omega[rad/fs]
PHYSICAL = UnitSystem(
    hbar=1e15 / (2 * math.pi * SPEED_OF_LIGHT_CM_PER_S),
    kB=BOLTZMANN_J_PER_K / (PLANCK_J_S * SPEED_OF_LIGHT_CM_PER_S),
)

DIMENSIONLESS = UnitSystem(hbar=1.0, kB=1.0, energy_unit="J", time_unit="hbar/J")


def get_units(name: str) -> UnitSystem:
    if name == "physical":
        return PHYSICAL
    if name == "dimensionless":
        return DIMENSIONLESS
    raise ValueError(f"unknown unit system {name!r}")
