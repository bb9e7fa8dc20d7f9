"""Transport observables: spreading, power-law exponents, localization and coherence."""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import Hamiltonian, SiteMap, eigendecompose
from .propagation import Trajectory
from .units import PHYSICAL, UnitSystem

GEOMETRY_LINE = math.sqrt(2.0)  # walk started in the bulk of an infinite line
GEOMETRY_END = math.sqrt(3.0)  # walk started at the end of a half-infinite line


@dataclass(frozen=True)
class Series:
    times: np.ndarray
    values: np.ndarray
    name: str = "value"
    unit: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("series times must increase strictly")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size

    def between(self, start: float, stop: float) -> "Series":
        keep = (self.times >= start) & (self.times <= stop)
        return Series(self.times[keep], self.values[keep], self.name, self.unit)


@dataclass(frozen=True)
class PowerLawSettings:
    """Sliding-window settings for the local log-log slope.

    A float ``window`` is a width in decades of time (for log-spaced grids);
    an int is a number of consecutive samples (for dense linear grids).
    ``order`` > 1 fits a polynomial in log-log coordinates inside each window
    and takes its slope at the window centre.
    """

    window: float | int = 0.5
    order: int = 1

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be positive")
        if self.order < 1:
            raise ValueError("polynomial order must be at least 1")

    @property
    def by_points(self) -> bool:
        return isinstance(self.window, (int, np.integer)) and not isinstance(self.window, bool)


def msd(traj: Trajectory, site_map: SiteMap) -> Series:
    """Mean squared displacement sum_n p_n (x_n - x_origin)^2 / sum_n p_n."""
    if site_map.n_sites != traj.n_sites:
        raise ValueError(f"site map has {site_map.n_sites} sites, trajectory {traj.n_sites}")
    trace = traj.populations.sum(axis=1)
    if np.any(trace <= 0):
        raise ValueError("zero trace: displacement undefined")
    x2 = site_map.displacements() ** 2
    return Series(traj.times, traj.populations @ x2 / trace, "msd", "lattice^2")


def _slope(x: np.ndarray, y: np.ndarray, order: int) -> float:
    xc = x - x.mean()
    if order == 1:
        return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    return float(np.polynomial.polynomial.polyfit(xc, y, order)[1])


def power_law_exponent(series: Series, settings: PowerLawSettings = PowerLawSettings()) -> Series:
    """Local exponent b(t) = d log(value) / d log(t) by sliding least squares."""
    keep = series.times > 0
    t, v = series.times[keep], series.values[keep]
    if np.any(v <= 0):
        raise ValueError("power-law analysis needs strictly positive values")
    lt, lv = np.log(t), np.log(v)
    min_points = max(3, settings.order + 2)

    if settings.by_points:
        w = int(settings.window)
        if w < min_points:
            raise ValueError(f"window of {w} points is too small (need {min_points})")
        if t.size < w:
            raise ValueError("series shorter than the fit window")
        X, Y = sliding_window_view(lt, w), sliding_window_view(lv, w)
        centres = X.mean(axis=1)
        if settings.order == 1:
            xc = X - centres[:, None]
            yc = Y - Y.mean(axis=1)[:, None]
            b = (xc * yc).sum(axis=1) / (xc * xc).sum(axis=1)
        else:
            b = np.array([_slope(x, y, settings.order) for x, y in zip(X, Y)])
        return Series(np.exp(centres), b, "b", "")

    half = 0.5 * float(settings.window) * np.log(10)
    inside = np.nonzero((lt - half >= lt[0] - 1e-12) & (lt + half <= lt[-1] + 1e-12))[0]
    out_t, out_b = [], []
    for i in inside:
        sel = np.abs(lt - lt[i]) <= half + 1e-12
        if sel.sum() < min_points:
            raise ValueError(f"fewer than {min_points} points in the window centred at t={t[i]:g}")
        x, y = lt[sel], lv[sel]
        out_t.append(math.exp(x.mean()))
        out_b.append(_slope(x, y, settings.order))
    if not out_t:
        raise ValueError("series spans less than one window")
    return Series(np.array(out_t), np.array(out_b), "b", "")


def ipr(psi: Sequence[complex]) -> float:
    """Inverse participation ratio (sum |psi|^2)^2 / sum |psi|^4; scale-free, so 1/sum |psi|^4 when normalized."""
    p = np.abs(np.asarray(psi)) ** 2
    if not np.any(p > 0):
        raise ValueError("zero vector has no participation ratio")
    return float(p.sum() ** 2 / np.sum(p ** 2))


def mean_ipr(H: Hamiltonian | np.ndarray) -> float:
    _, vectors = eigendecompose(H)
    return float(np.mean([ipr(v) for v in vectors.T]))


def localization_bound(xi: float, J: float, g: float = GEOMETRY_END,
                       units: UnitSystem = PHYSICAL) -> float:
    """Lower bound hbar xi / (g J) on the localization time."""
    if xi <= 0 or J <= 0 or g <= 0:
        raise ValueError("xi, J and g must be positive")
    return units.hbar * xi / (g * J)


def mean_coupling(H: Hamiltonian, threshold: float = 0.0) -> float:
    """Mean |J_nm| over distinct pairs with |J_nm| > threshold."""
    h = H.elements
    upper = np.abs(h[np.triu_indices(H.n_sites, 1)])
    return float(upper[upper > threshold].mean())


def coherence_bands(rho: np.ndarray) -> np.ndarray:
    """Band sums S_k = sum_n |rho[n+k, n]| for k = 0..n-1 (last axis).

    Accepts one matrix or a stack of shape (..., n, n).
    """
    mags = np.abs(np.asarray(rho))
    n = mags.shape[-1]
    return np.stack([np.trace(mags, offset=-k, axis1=-2, axis2=-1) for k in range(n)], axis=-1)


def total_coherence(rho: np.ndarray) -> np.ndarray:
    """Sum of |rho_nm| over all n != m."""
    mags = np.abs(np.asarray(rho))
    return mags.sum(axis=(-2, -1)) - np.trace(mags, axis1=-2, axis2=-1)


def trajectory_bands(traj: Trajectory) -> np.ndarray:
    if traj.bands is not None:
        return traj.bands
    return coherence_bands(traj.require_states())


def trajectory_coherence(traj: Trajectory) -> Series:
    if traj.states is not None:
        values = total_coherence(traj.states)
    else:
        values = 2 * traj.bands[:, 1:].sum(axis=1) if traj.bands is not None else None
        if values is None:
            raise ValueError("trajectory carries neither states nor band sums")
    return Series(traj.times, values, "coherence", "")


def subdiffusive_onset(b: Series, threshold: float = 1.0, t_min: float = 20.0,
                       hold_window: float = 50.0) -> float | None:
    """Earliest t > t_min where b drops below ``threshold`` and stays there for ``hold_window``.

    The hold is checked over the samples available; a crossing near the end
    of the series is accepted on what remains.
    """
    t, v = b.times, b.values
    below = v < threshold
    for i in np.nonzero(below & (t > t_min))[0]:
        span = (t >= t[i]) & (t <= t[i] + hold_window)
        if np.all(below[span]):
            return float(t[i])
    return None


def plateau_mean(series: Series, decades: float = 1.0) -> float:
    """Mean value over the last ``decades`` of the time axis."""
    t = series.times
    start = t[-1] / 10 ** decades
    return float(series.values[t >= start].mean())


def sign_changes(values: np.ndarray) -> int:
    s = np.sign(values - values.mean())
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
