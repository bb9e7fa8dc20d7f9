"""Hamiltonians, decoherence parameters and site maps for chromophore networks."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
import os
from typing import Sequence

import numpy as np

from .units import PHYSICAL, UnitSystem

FMO_OFFSET_CM = 12210.0
FMO_TRAP_SITE = 2  # site 3
FMO_SOURCE_SITES = (0, 5)  # sites 1 and 6
FMO_TRAP_RATE = 1e-3  # fs^-1, i.e. (1 ps)^-1

# C. tepidum monomer, site basis, cm^-1 relative to FMO_OFFSET_CM
_FMO_ELEMENTS = (
    (200.0, -96.0, 5.0, -4.4, 4.7, -12.6, -6.2),
    (-96.0, 320.0, 33.1, 6.8, 4.5, 7.4, -0.3),
    (5.0, 33.1, 0.0, -51.1, 0.8, -8.4, 7.6),
    (-4.4, 6.8, -51.1, 110.0, -76.6, -14.2, -67.0),
    (4.7, 4.5, 0.8, -76.6, 270.0, 78.3, -0.1),
    (-12.6, 7.4, -8.4, -14.2, 78.3, 420.0, 38.3),
    (-6.2, -0.3, 7.6, -67.0, -0.1, 38.3, 230.0),
)

# Couplings drawn bold in the one-dimensional reduction (0-based site pairs)
FMO_STRONG_BONDS = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (3, 6))

# Approximate nearest-neighbour Mg-Mg separations (angstrom) along the path
# 1-2-3-4-5-6-7. Only their ratios matter for the real_space map.
FMO_PATH_DISTANCES = (12.3, 13.0, 11.8, 11.2, 12.8, 11.0)

SITE_MAP_VARIANTS = ("path_index", "hops_from_trap", "real_space")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Hamiltonian:
    """Real symmetric single-excitation Hamiltonian in the site basis."""

    elements: np.ndarray
    label: str = ""
    offset: float = 0.0

    def __post_init__(self):
        h = _frozen(self.elements)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
            raise ValueError(f"Hamiltonian must be a non-empty square matrix, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("Hamiltonian has non-finite entries")
        scale = max(np.abs(h).max(), 1.0)
        if np.abs(h - h.T).max() > 1e-12 * scale:
            raise ValueError("Hamiltonian is not symmetric")
        object.__setattr__(self, "elements", h)

    @property
    def n_sites(self) -> int:
        return self.elements.shape[0]

    @property
    def site_energies(self) -> np.ndarray:
        return np.diag(self.elements).copy()

    def couplings(self) -> np.ndarray:
        """Nearest-neighbour couplings J_n = H[n, n+1]."""
        return np.diag(self.elements, 1).copy()

    def shifted(self, constant: float) -> "Hamiltonian":
        """Copy with ``constant`` added to every site energy."""
        h = self.elements + constant * np.eye(self.n_sites)
        return Hamiltonian(h, self.label, self.offset - constant)

    def to_csv(self, path: str | os.PathLike) -> None:
        from .io import atomic_write_text

        lines = [f"# {self.label or 'hamiltonian'}; n_sites={self.n_sites}; unit=cm-1; offset={self.offset:g}"]
        lines += [",".join(f"{v:.6g}" for v in row) for row in self.elements]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | os.PathLike, label: str = "") -> "Hamiltonian":
        return cls(np.loadtxt(path, delimiter=",", comments="#", ndmin=2), label)


@dataclass(frozen=True)
class DisorderSpec:
    """Static site-energy disorder.

    ``kind`` is one of ``none``, ``anderson`` (Gaussian energies whose sample
    standard deviation is rescaled to exactly ``sigma``), ``stark`` (linear
    gradient ``delta`` per site) or ``combined`` (both).
    """

    kind: str = "none"
    sigma: float = 0.0
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "anderson", "stark", "combined"):
            raise ValueError(f"unknown disorder kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @classmethod
    def anderson(cls, sigma: float, seed: int = 0) -> "DisorderSpec":
        return cls("anderson", sigma=sigma, seed=seed)

    @classmethod
    def stark(cls, delta: float) -> "DisorderSpec":
        return cls("stark", delta=delta)

    @classmethod
    def combined(cls, sigma: float, delta: float, seed: int = 0) -> "DisorderSpec":
        return cls("combined", sigma=sigma, delta=delta, seed=seed)

    def site_energies(self, n_sites: int) -> np.ndarray:
        energies = np.zeros(n_sites)
        if self.kind in ("anderson", "combined") and self.sigma > 0:
            z = np.random.default_rng(int(self.seed)).standard_normal(n_sites)
            z -= z.mean()
            energies += self.sigma * z / z.std(ddof=1)
        if self.kind in ("stark", "combined"):
            energies += self.delta * np.arange(n_sites)
        return energies


@dataclass(frozen=True)
class DecoherenceSpec:
    """Per-site pure-dephasing rates and loss (trapping) rates, fs^-1."""

    dephasing: np.ndarray
    loss: np.ndarray

    def __post_init__(self):
        deph, loss = _frozen(self.dephasing), _frozen(self.loss)
        if deph.ndim != 1 or deph.shape != loss.shape:
            raise ValueError("dephasing and loss must be 1-D arrays of equal length")
        if np.any(deph < 0) or np.any(loss < 0):
            raise ValueError("decoherence rates must be non-negative")
        object.__setattr__(self, "dephasing", deph)
        object.__setattr__(self, "loss", loss)

    @property
    def n_sites(self) -> int:
        return self.dephasing.size

    @classmethod
    def none(cls, n_sites: int) -> "DecoherenceSpec":
        return cls(np.zeros(n_sites), np.zeros(n_sites))

    @classmethod
    def uniform(cls, n_sites: int, dephasing: float, trap_site: int | None = None,
                trap_rate: float = 0.0) -> "DecoherenceSpec":
        loss = np.zeros(n_sites)
        if trap_site is not None:
            loss[trap_site] = trap_rate
        return cls(np.full(n_sites, float(dephasing)), loss)


@dataclass(frozen=True)
class BathSpec:
    temperature: float
    reorganization_energy: float = 35.0
    cutoff: float = 150.0

    def __post_init__(self):
        if self.temperature < 0 or self.reorganization_energy < 0:
            raise ValueError("temperature and reorganization energy must be non-negative")
        if self.cutoff <= 0:
            raise ValueError("cutoff frequency must be positive")


@dataclass(frozen=True)
class SiteMap:
    """One-dimensional displacement coordinate of each site."""

    positions: np.ndarray
    origin_site: int = 0
    variant: str = "path_index"

    def __post_init__(self):
        x = _frozen(self.positions)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ValueError("positions must be a finite 1-D array")
        if not 0 <= self.origin_site < x.size:
            raise ValueError(f"origin site {self.origin_site} out of range")
        object.__setattr__(self, "positions", x)

    @property
    def n_sites(self) -> int:
        return self.positions.size

    def displacements(self) -> np.ndarray:
        return self.positions - self.positions[self.origin_site]

    def with_origin(self, site: int) -> "SiteMap":
        return SiteMap(self.positions, site, self.variant)

    @classmethod
    def chain(cls, n_sites: int, origin_site: int | None = None) -> "SiteMap":
        if origin_site is None:
            origin_site = n_sites // 2
        return cls(np.arange(n_sites, dtype=float), origin_site, "path_index")


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are eigenstates

    def __iter__(self):
        return iter((self.eigenvalues, self.eigenvectors))


def fmo_hamiltonian() -> Hamiltonian:
    """Seven-site FMO monomer Hamiltonian, stored relative to 12210 cm^-1."""
    return Hamiltonian(np.array(_FMO_ELEMENTS), label="FMO (C. tepidum)", offset=FMO_OFFSET_CM)


def chain_hamiltonian(n_sites: int, coupling: float | Sequence[float] = 1.0,
                      disorder: DisorderSpec | None = None) -> Hamiltonian:
    """Nearest-neighbour tight-binding chain with site energies from ``disorder``."""
    if n_sites < 2:
        raise ValueError("a chain needs at least two sites")
    bonds = np.broadcast_to(np.asarray(coupling, dtype=float), (n_sites - 1,)) \
        if np.ndim(coupling) == 0 else np.asarray(coupling, dtype=float)
    if bonds.shape != (n_sites - 1,):
        raise ValueError(f"expected {n_sites - 1} bond couplings, got {bonds.size}")
    disorder = disorder or DisorderSpec()
    h = np.diag(disorder.site_energies(n_sites)) + np.diag(bonds, 1) + np.diag(bonds, -1)
    return Hamiltonian(h, label=f"chain[{n_sites}, {disorder.kind}]")


def _graph_distances(n_sites: int, bonds: Sequence[tuple[int, int]], source: int) -> np.ndarray:
    adjacency = {i: [] for i in range(n_sites)}
    for a, b in bonds:
        adjacency[a].append(b)
        adjacency[b].append(a)
    dist = np.full(n_sites, -1.0)
    dist[source] = 0
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nxt in adjacency[node]:
            if dist[nxt] < 0:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    if np.any(dist < 0):
        raise ValueError("bond graph is disconnected")
    return dist


def fmo_site_map(variant: str = "path_index", origin_site: int = 5,
                 distances: Sequence[float] = FMO_PATH_DISTANCES) -> SiteMap:
    """Map FMO sites onto a line.

    ``path_index`` numbers the sites 0..6 along 1-2-3-4-5-6-7,
    ``hops_from_trap`` counts strong-coupling hops to the trap (site 3) and
    ``real_space`` accumulates ``distances`` along the path, rescaled to a
    unit mean spacing.
    """
    if variant == "path_index":
        x = np.arange(7, dtype=float)
    elif variant == "hops_from_trap":
        x = _graph_distances(7, FMO_STRONG_BONDS, FMO_TRAP_SITE)
    elif variant == "real_space":
        d = np.asarray(distances, dtype=float)
        if d.shape != (6,) or np.any(d <= 0):
            raise ValueError("real_space needs six positive path distances")
        x = np.concatenate([[0.0], np.cumsum(d / d.mean())])
    else:
        raise ValueError(f"unknown site map variant {variant!r}; expected one of {SITE_MAP_VARIANTS}")
    return SiteMap(x, origin_site, variant)


def eigendecompose(H: Hamiltonian | np.ndarray) -> Spectrum:
    h = H.elements if isinstance(H, Hamiltonian) else np.asarray(H, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    if np.abs(h - h.T).max() > 1e-12 * max(np.abs(h).max(), 1.0):
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(h)
    return Spectrum(w, v)


def dephasing_rate(bath: BathSpec, units: UnitSystem = PHYSICAL) -> float:
    """Haken-Strobl dephasing rate 2 pi kB T E_R / (hbar * hbar omega_c).

    The cutoff is an energy (hbar omega_c), so the result is a rate in
    inverse time units of ``units``.
    """
    if bath.cutoff == 0:
        raise ValueError("cutoff frequency must be non-zero")
    return 2 * np.pi * units.kB * bath.temperature * bath.reorganization_energy / (units.hbar * bath.cutoff)


def fmo_decoherence(temperature: float, trap_rate: float = FMO_TRAP_RATE,
                    bath: BathSpec | None = None, units: UnitSystem = PHYSICAL) -> DecoherenceSpec:
    """Uniform bath dephasing on all seven sites plus trapping at site 3."""
    bath = bath or BathSpec(temperature)
    if bath.temperature != temperature:
        bath = BathSpec(temperature, bath.reorganization_energy, bath.cutoff)
    return DecoherenceSpec.uniform(7, dephasing_rate(bath, units), FMO_TRAP_SITE, trap_rate)
