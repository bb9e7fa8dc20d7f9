"""Closed-form and reduced (classical random walk) results for dephased chains."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .analysis import Series
from .model import Hamiltonian
from .propagation import Trajectory
from .units import DIMENSIONLESS, UnitSystem


@dataclass(frozen=True)
class ChainBondData:
    """Per-bond coupling J_n, detuning E_{n+1} - E_n and mean dephasing (G_n + G_{n+1})/2."""

    couplings: np.ndarray
    detunings: np.ndarray
    dephasing: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.couplings, self.detunings, self.dephasing)]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValueError("bond arrays must be 1-D with equal length")
        if np.any(arrays[2] < 0):
            raise ValueError("bond dephasing must be non-negative")
        for name, a in zip(("couplings", "detunings", "dephasing"), arrays):
            object.__setattr__(self, name, a)

    @property
    def n_bonds(self) -> int:
        return self.couplings.size

    @classmethod
    def from_chain(cls, H: Hamiltonian, site_dephasing: float | Sequence[float]) -> "ChainBondData":
        g = np.broadcast_to(np.asarray(site_dephasing, dtype=float), (H.n_sites,))
        return cls(H.couplings(), np.diff(H.site_energies), 0.5 * (g[:-1] + g[1:]))

    @classmethod
    def uniform(cls, n_bonds: int, coupling: float, detuning: float, dephasing: float) -> "ChainBondData":
        return cls(np.full(n_bonds, coupling), np.full(n_bonds, detuning), np.full(n_bonds, dephasing))


@dataclass(frozen=True)
class HoppingRates:
    rates: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.rates, dtype=float)
        if k.ndim != 1 or np.any(k < 0):
            raise ValueError("hopping rates must be a non-negative 1-D array")
        object.__setattr__(self, "rates", k)


@dataclass(frozen=True)
class DiffusionEstimate:
    value: float
    stderr: float
    n_members: int


def analytic_msd_dephasing(J: float, gamma: float, t, units: UnitSystem = DIMENSIONLESS):
    """MSD of a dephased ordered chain, (4J^2/hbar^2 G)[t - (1 - exp(-G t))/G].

    Ballistic 2J^2 t^2/hbar^2 for G t << 1, diffusive 2Dt with D = 2J^2/(hbar^2 G)
    for G t >> 1.
    """
    if gamma <= 0:
        raise ValueError("dephasing rate must be positive; use 2 J^2 t^2 / hbar^2 for G = 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    prefactor = 4 * J ** 2 / (units.hbar ** 2 * gamma)
    return prefactor * (t + np.expm1(-gamma * t) / gamma)


def classical_hopping_rates(bonds: ChainBondData, units: UnitSystem = DIMENSIONLESS) -> HoppingRates:
    """k_n = 2 J_n^2 G'_n / (Delta_n^2 + hbar^2 G'_n^2)."""
    if np.any(bonds.dephasing <= 0):
        raise ValueError("quasi-stationary reduction needs non-zero dephasing on every bond")
    g = bonds.dephasing
    k = 2 * bonds.couplings ** 2 * g / (bonds.detunings ** 2 + units.hbar ** 2 * g ** 2)
    return HoppingRates(k)


def propagate_classical(p0: Sequence[float], rates: HoppingRates, t_grid: Sequence[float]) -> Trajectory:
    """Exact solution of the nearest-neighbour master equation for populations.

    dp_n/dt = k_n (p_{n+1} - p_n) + k_{n-1} (p_{n-1} - p_n), solved through the
    eigenbasis of the (symmetric, tridiagonal) rate matrix.
    """
    p0 = np.asarray(p0, dtype=float)
    k = rates.rates
    if p0.ndim != 1 or k.size != p0.size - 1:
        raise ValueError(f"need {p0.size - 1} bond rates for {p0.size} sites")
    if np.any(p0 < -1e-8):
        raise ValueError("initial populations must be non-negative")
    t = np.asarray(t_grid, dtype=float)
    diag = -(np.concatenate([k, [0.0]]) + np.concatenate([[0.0], k]))
    w, v = eigh_tridiagonal(diag, k)
    pops = (np.exp(np.outer(t, w)) * (v.T @ p0)) @ v.T
    if pops.min() < -1e-8:
        raise ValueError(f"negative population {pops.min():.2e} in classical walk")
    drift = np.abs(pops.sum(axis=1) - p0.sum()).max()
    if drift > 1e-8:
        raise ValueError(f"population not conserved (drift {drift:.2e})")
    return Trajectory(t, pops, provenance={"kind": "simulated", "method": "classical"})


def diffusion_coefficient(bonds: ChainBondData, units: UnitSystem = DIMENSIONLESS) -> float:
    """Long-time diffusion constant: inverse bond-average of inverse hopping rates.

    A bond with zero coupling blocks transport, giving D = 0.
    """
    g = bonds.dephasing
    if np.any(g <= 0):
        raise ValueError("diffusion coefficient needs non-zero dephasing on every bond")
    J2 = bonds.couplings ** 2
    if np.any(J2 == 0):
        return 0.0
    resistance = (bonds.detunings ** 2 + units.hbar ** 2 * g ** 2) / (2 * J2 * g)
    return float(1.0 / resistance.mean())


def diffusion_coefficient_uniform(J: float, gamma, delta_sq, units: UnitSystem = DIMENSIONLESS):
    """D = 2 J^2 G / (<Delta^2> + hbar^2 G^2); broadcasts over ``gamma`` and ``delta_sq``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("dephasing rate must be positive")
    out = 2 * J ** 2 * gamma / (np.asarray(delta_sq, dtype=float) + units.hbar ** 2 * gamma ** 2)
    return float(out) if out.ndim == 0 else out


def optimal_dephasing(delta_sq: float, units: UnitSystem = DIMENSIONLESS) -> float:
    """Dephasing rate maximizing the uniform-chain D: hbar G = <Delta^2>^(1/2)."""
    if delta_sq < 0:
        raise ValueError("mean-square detuning must be non-negative")
    return float(np.sqrt(delta_sq) / units.hbar)


def diffusion_surface(delta_rms: Sequence[float], gamma: Sequence[float], J: float = 1.0,
                      units: UnitSystem = DIMENSIONLESS) -> np.ndarray:
    """D on the grid (delta_rms[i], gamma[j])."""
    d, g = np.meshgrid(np.asarray(delta_rms, float), np.asarray(gamma, float), indexing="ij")
    return diffusion_coefficient_uniform(J, g, d ** 2, units)


def empirical_diffusion(ensemble: Sequence[Series], fit_window: tuple[float, float]) -> DiffusionEstimate:
    """Half the least-squares slope of the ensemble-mean MSD over ``fit_window``.

    The standard error comes from the spread of the per-member slopes.
    """
    start, stop = fit_window
    members = [s.between(start, stop) for s in ensemble]
    if not members:
        raise ValueError("empty ensemble")
    t = members[0].times
    if t.size < 10:
        raise ValueError(f"fit window holds {t.size} samples; need at least 10")
    if any(m.times.shape != t.shape or np.any(m.times != t) for m in members):
        raise ValueError("ensemble members must share a time grid")
    values = np.stack([m.values for m in members])
    slope = np.polyfit(t, values.mean(axis=0), 1)[0]
    if len(members) > 1:
        per_member = np.polyfit(t, values.T, 1)[0]
        stderr = per_member.std(ddof=1) / np.sqrt(len(members)) / 2
    else:
        fit, cov = np.polyfit(t, values[0], 1, cov=True)
        stderr = np.sqrt(cov[0, 0]) / 2
    return DiffusionEstimate(float(slope / 2), float(stderr), len(members))
