"""Time evolution of single-excitation density matrices and pure states."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
import math
from typing import Sequence

import numpy as np

from ._kernels import rk4_banded, rk4_dense
from .model import DecoherenceSpec, Hamiltonian, eigendecompose
from .units import PHYSICAL, UnitSystem

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8
# RK4 is stable for purely imaginary eigenvalues up to 2*sqrt(2); keep a margin
RK4_STABILITY = 2.5


class PropagationError(RuntimeError):
    """A density-matrix invariant failed during integration."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:g}")
        self.time = time


class ConvergenceError(PropagationError):
    pass


@dataclass(frozen=True)
class IntegratorSettings:
    step: float
    method: str = "fixed_rk4"
    convergence_check: bool = False
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("integrator step must be positive")
        if self.method != "fixed_rk4":
            raise ValueError(f"unsupported integration method {self.method!r}")


@dataclass
class Trajectory:
    """Sampled evolution of one excitation.

    ``populations`` is always present. Full ``states`` are kept only when
    requested (they scale as n^2 per sample); ``bands`` holds per-sample
    coherence band sums when recorded during propagation.
    """

    times: np.ndarray
    populations: np.ndarray
    states: np.ndarray | None = None
    bands: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.populations = np.asarray(self.populations, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.populations.shape[0] != self.times.size:
            raise ValueError("populations and times disagree in length")

    @property
    def n_sites(self) -> int:
        return self.populations.shape[1]

    def __len__(self) -> int:
        return self.times.size

    @property
    def trace(self) -> np.ndarray:
        return self.populations.sum(axis=1)

    def require_states(self) -> np.ndarray:
        if self.states is None:
            raise ValueError("trajectory was propagated without keeping full states")
        return self.states


def site_state(n_sites: int, site: int) -> np.ndarray:
    rho = np.zeros((n_sites, n_sites), dtype=complex)
    rho[site, site] = 1.0
    return rho


def pure_state(psi: Sequence[complex]) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def check_density_matrix(rho: np.ndarray, time: float = 0.0, lossless: bool = False,
                         hermitian_tol: float = HERMITIAN_TOL, trace_tol: float = TRACE_TOL,
                         positivity_tol: float | None = POSITIVITY_TOL) -> None:
    """Raise :class:`PropagationError` if ``rho`` is not a valid (sub-)normalized state."""
    if not np.all(np.isfinite(rho)):
        raise PropagationError("non-finite density matrix", time)
    herm = np.abs(rho - rho.conj().T).max()
    if herm > hermitian_tol:
        raise PropagationError(f"density matrix not Hermitian (deviation {herm:.2e})", time)
    tr = np.trace(rho)
    if abs(tr.imag) > trace_tol or not 0 < tr.real <= 1 + trace_tol:
        raise PropagationError(f"trace {tr:.10g} outside (0, 1]", time)
    if lossless and abs(tr.real - 1) > trace_tol:
        raise PropagationError(f"trace {tr.real:.12g} drifted from 1", time)
    if positivity_tol is not None:
        herm_part = 0.5 * (rho + rho.conj().T)
        try:
            np.linalg.cholesky(herm_part + positivity_tol * np.eye(rho.shape[0]))
        except np.linalg.LinAlgError:
            lowest = np.linalg.eigvalsh(herm_part)[0]
            if lowest < -positivity_tol:
                raise PropagationError(f"negative eigenvalue {lowest:.2e}", time) from None


def _decay_matrix(dec: DecoherenceSpec) -> np.ndarray:
    g, G = dec.loss, dec.dephasing
    off = 1.0 - np.eye(g.size)
    return -0.5 * (g[:, None] + g[None, :]) - 0.5 * (G[:, None] + G[None, :]) * off


class _Generator:
    """Right-hand side split into an element-wise part and a hopping part.

    Site energies and decoherence act element-wise; off-diagonal couplings
    use slicing when they are nearest-neighbour only, else dense products.
    """

    def __init__(self, H: Hamiltonian | np.ndarray, dec: DecoherenceSpec, units: UnitSystem):
        h = (H.elements if isinstance(H, Hamiltonian) else np.asarray(H, dtype=float)) / units.hbar
        n = h.shape[0]
        if h.shape != (n, n) or dec.n_sites != n:
            raise ValueError(f"dimension mismatch: H {h.shape}, decoherence {dec.n_sites}")
        e = np.diag(h)
        self.elementwise = -1j * (e[:, None] - e[None, :]) + _decay_matrix(dec)
        hop = h - np.diag(e)
        self.banded = n > 2 and not np.any(np.triu(hop, 2))
        self.bonds = np.ascontiguousarray(np.diag(hop, 1))[:, None]
        self.hop = np.ascontiguousarray(hop)
        self.n = n
        # bound on |eigenvalue| of the coherent part, for the RK4 stability check
        self.frequency = float(np.ptp(np.linalg.eigvalsh(h))) if n > 1 else 0.0

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = self.elementwise * rho
        if self.banded:
            J = self.bonds
            comm = np.zeros_like(rho)
            comm[1:] += J * rho[:-1]
            comm[:-1] += J * rho[1:]
            comm[:, 1:] -= rho[:, :-1] * J.T
            comm[:, :-1] -= rho[:, 1:] * J.T
            out -= 1j * comm
        else:
            out -= 1j * (self.hop @ rho - rho @ self.hop)
        return out

    def advance(self, rho: np.ndarray, dt: float, steps: int) -> None:
        """``steps`` RK4 steps of size ``dt``, in place."""
        if self.banded:
            rk4_banded(rho, self.elementwise, self.bonds[:, 0], dt, steps)
        else:
            rk4_dense(rho, self.elementwise, self.hop, dt, steps)


def lindblad_rhs(rho: np.ndarray, H: Hamiltonian | np.ndarray, dec: DecoherenceSpec,
                 units: UnitSystem = PHYSICAL) -> np.ndarray:
    """d rho/dt = -(i/hbar)[H, rho] + L_loss(rho) + L_deph(rho)."""
    rho = np.asarray(rho, dtype=complex)
    gen = _Generator(H, dec, units)
    if rho.shape != (gen.n, gen.n):
        raise ValueError(f"dimension mismatch: rho {rho.shape}, H {gen.n}")
    return gen(rho)


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must start at 0 and increase strictly")
    return t


def _lower_band_index(n: int):
    rows, cols = np.tril_indices(n)
    return rows, cols, rows - cols


def propagate_master(rho0: np.ndarray, H: Hamiltonian | np.ndarray, dec: DecoherenceSpec,
                     t_grid: Sequence[float], settings: IntegratorSettings,
                     units: UnitSystem = PHYSICAL, keep_states: bool = True,
                     record_bands: bool = False, check_positivity: bool = True) -> Trajectory:
    """Integrate the dephasing/loss master equation with fixed-step RK4.

    Between consecutive samples the interval is split into the fewest equal
    sub-steps no longer than ``settings.step``. Invariants are checked at
    every sample.
    """
    t = _check_grid(t_grid)
    rho = np.array(rho0, dtype=complex)
    n = rho.shape[0]
    gen = _Generator(H, dec, units)
    if rho.shape != (gen.n, gen.n):
        raise ValueError(f"rho0 has shape {rho.shape}, Hamiltonian {gen.n} sites")
    max_dt = np.diff(t).max() if t.size > 1 else 0.0
    if min(settings.step, max_dt) * gen.frequency > RK4_STABILITY:
        raise ValueError(
            f"step {settings.step:g} too large for spectral width {gen.frequency:g}; "
            f"RK4 needs step < {RK4_STABILITY / gen.frequency:.3g}")
    check_density_matrix(rho, 0.0)
    lossless = not np.any(dec.loss > 0)

    pops = np.empty((t.size, n))
    states = np.empty((t.size, n, n), dtype=complex) if keep_states else None
    bands = np.empty((t.size, n)) if record_bands else None
    if record_bands:
        rows, cols, k_index = _lower_band_index(n)

    def record(i: int):
        pops[i] = rho.diagonal().real
        if keep_states:
            states[i] = rho
        if record_bands:
            bands[i] = np.bincount(k_index, weights=np.abs(rho[rows, cols]), minlength=n)

    record(0)
    for i in range(1, t.size):
        interval = t[i] - t[i - 1]
        n_sub = max(1, math.ceil(interval / settings.step - 1e-9))
        dt = interval / n_sub
        gen.advance(rho, dt, n_sub)
        check_density_matrix(rho, t[i], lossless=lossless,
                             positivity_tol=POSITIVITY_TOL if check_positivity else None)
        record(i)

    provenance = {"kind": "simulated", "method": "master", "integrator": asdict(settings)}
    if settings.convergence_check:
        half = IntegratorSettings(settings.step / 2, settings.method, False, settings.tolerance)
        fine = propagate_master(rho0, H, dec, t, half, units, keep_states=False,
                                check_positivity=False)
        err = np.abs(fine.populations - pops).max(axis=1)
        bad = np.nonzero(err > settings.tolerance)[0]
        if bad.size:
            raise ConvergenceError(
                f"step halving changed populations by {err[bad[0]]:.2e}", t[bad[0]])
        provenance["step_halving_error"] = float(err.max())
    return Trajectory(t, pops, states, bands, provenance)


def propagate_coherent(psi0: Sequence[complex], H: Hamiltonian | np.ndarray, t_grid: Sequence[float],
                       units: UnitSystem = PHYSICAL, keep_states: bool = True,
                       record_bands: bool = False) -> Trajectory:
    """Exact unitary evolution through the eigenbasis of ``H``."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must increase strictly")
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.vdot(psi0, psi0).real - 1) > 1e-10:
        raise ValueError("initial state is not normalized")
    energies, vectors = eigendecompose(H)
    coeffs = vectors.T @ psi0
    phases = np.exp(-1j * np.outer(t, energies) / units.hbar)
    amplitudes = (phases * coeffs) @ vectors.T  # (T, n)
    norm_error = np.abs(np.sum(np.abs(amplitudes) ** 2, axis=1) - 1).max()
    if norm_error > 1e-10:
        raise PropagationError(f"norm drifted by {norm_error:.2e}", float(t[-1]))
    states = np.einsum("ti,tj->tij", amplitudes, amplitudes.conj()) if keep_states else None
    bands = None
    if record_bands:
        n = psi0.size
        rows, cols, k_index = _lower_band_index(n)
        mags = np.abs(amplitudes)
        bands = np.stack([np.bincount(k_index, weights=m[rows] * m[cols], minlength=n) for m in mags])
    return Trajectory(t, np.abs(amplitudes) ** 2, states, bands,
                      {"kind": "simulated", "method": "coherent"})
