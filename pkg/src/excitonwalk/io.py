"""Columnar trajectory files, CSV export and ingestion of external trajectories.

Trajectory file layout::

    # excitonwalk-trajectory v1
    # n_sites=7
    # time_unit=fs
    # form=full            (or: populations)
    # provenance={...}     (JSON, optional)
    time,re_0_0,im_0_0,re_0_1,im_0_1,...
    0,1,0,0,0,...

Rows hold the time followed by the row-major real and imaginary parts of
rho (``full``) or the site populations p_0..p_{n-1} (``populations``).
Any external code that writes this layout can be ingested.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .analysis import Series
from .model import SiteMap
from .propagation import PropagationError, Trajectory, check_density_matrix

SERIES_DIGITS = 12
_MAGIC = "excitonwalk-trajectory v1"


class TrajectoryFormatError(ValueError):
    pass


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value: float, digits: int) -> str:
    return f"{value:.{digits}g}"


def export_columns(path: str | os.PathLike, times: Sequence[float], columns: Mapping[str, Sequence[float]],
                   time_unit: str = "fs", comment: str | None = None,
                   digits: int = SERIES_DIGITS) -> Path:
    """Write a CSV with a ``time_<unit>`` column followed by ``columns``."""
    times = np.asarray(times, dtype=float)
    data = [np.asarray(v, dtype=float) for v in columns.values()]
    if any(d.shape != times.shape for d in data):
        raise ValueError("every column must match the time axis")
    lines = [f"# {comment}"] if comment else []
    lines.append(",".join([f"time_{time_unit}", *columns]))
    table = np.column_stack([times, *data]) if data else times[:, None]
    lines += [",".join(_fmt(v, digits) for v in row) for row in table]
    atomic_write_text(path, "\n".join(lines) + "\n")
    return Path(path)


def export_series(series: Series, path: str | os.PathLike, time_unit: str = "fs",
                  digits: int = SERIES_DIGITS) -> Path:
    comment = f"quantity={series.name}; unit={series.unit or '1'}; time_unit={time_unit}"
    return export_columns(path, series.times, {series.name: series.values}, time_unit, comment, digits)


def export_bands(times: Sequence[float], bands: np.ndarray, path: str | os.PathLike,
                 time_unit: str = "fs", digits: int = SERIES_DIGITS) -> Path:
    """Coherence band sums, one column per band k0..k(n-1)."""
    bands = np.asarray(bands, dtype=float)
    columns = {f"k{k}": bands[:, k] for k in range(bands.shape[1])}
    return export_columns(path, times, columns, time_unit, "quantity=coherence_band_sums", digits)


def read_columns(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return header, data


def read_series(path: str | os.PathLike) -> Series:
    header, data = read_columns(path)
    if len(header) != 2:
        raise ValueError(f"{path}: expected two columns, found {len(header)}")
    return Series(data[:, 0], data[:, 1], header[1])


def write_trajectory(traj: Trajectory, path: str | os.PathLike, form: str | None = None,
                     time_unit: str = "fs") -> Path:
    """Serialize with full precision so that a round trip is exact."""
    if form is None:
        form = "full" if traj.states is not None else "populations"
    n = traj.n_sites
    if form == "full":
        states = traj.require_states().reshape(len(traj), n * n)
        body = np.empty((len(traj), 2 * n * n))
        body[:, 0::2], body[:, 1::2] = states.real, states.imag
        names = [f"{part}_{i}_{j}" for i in range(n) for j in range(n) for part in ("re", "im")]
    elif form == "populations":
        body = traj.populations
        names = [f"p_{i}" for i in range(n)]
    else:
        raise ValueError(f"unknown trajectory form {form!r}")
    lines = [f"# {_MAGIC}", f"# n_sites={n}", f"# time_unit={time_unit}", f"# form={form}"]
    if traj.provenance:
        lines.append(f"# provenance={json.dumps(traj.provenance, sort_keys=True, default=str)}")
    lines.append(",".join(["time", *names]))
    rows = np.column_stack([traj.times, body])
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
    return Path(path)


def _parse_header(lines: list[str]) -> dict:
    meta = {}
    for ln in lines:
        if not ln.startswith("#"):
            break
        body = ln[1:].strip()
        if "=" in body:
            key, value = body.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def read_trajectory(path: str | os.PathLike) -> tuple[dict, np.ndarray, np.ndarray | None, np.ndarray]:
    """Parse a trajectory file into (metadata, times, states or None, populations)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta = _parse_header(lines)
    if "n_sites" not in meta:
        raise TrajectoryFormatError(f"{path}: header lacks n_sites")
    n = int(meta["n_sites"])
    form = meta.get("form", "full")
    width = 1 + (2 * n * n if form == "full" else n)
    rows = []
    for lineno, ln in enumerate(lines, 1):
        if not ln.strip() or ln.startswith("#") or ln.startswith("time"):
            continue
        fields = ln.split(",")
        if len(fields) != width:
            raise TrajectoryFormatError(f"{path}:{lineno}: expected {width} fields, found {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise TrajectoryFormatError(f"{path}: no data rows")
    data = np.array(rows)
    times = data[:, 0]
    if np.any(np.diff(times) <= 0):
        raise TrajectoryFormatError(f"{path}: times are not strictly increasing")
    if form == "full":
        states = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(-1, n, n)
        pops = states.diagonal(axis1=1, axis2=2).real.copy()
    else:
        states, pops = None, data[:, 1:]
    if "provenance" in meta:
        meta["provenance"] = json.loads(meta["provenance"])
    return meta, times, states, pops


def polynomial_resample(times: np.ndarray, values: np.ndarray, new_times: np.ndarray,
                        order: int = 4, points: int | None = None) -> np.ndarray:
    """Local polynomial fit of ``values`` (first axis = time) evaluated at ``new_times``.

    Each output time uses the ``points`` samples (default ``order + 1``,
    i.e. interpolation) closest to it; more points give a least-squares fit.
    """
    points = order + 1 if points is None else points
    if points < order + 1 or points > times.size:
        raise ValueError(f"need between {order + 1} and {times.size} points per fit, got {points}")
    flat = values.reshape(times.size, -1)
    out = np.empty((new_times.size, flat.shape[1]), dtype=flat.dtype)
    # window start index: centre the window on the new time, clipped to the data
    nearest = np.searchsorted(times, new_times)
    start = np.clip(nearest - (points + 1) // 2, 0, times.size - points)
    for s in np.unique(start):
        pick = np.nonzero(start == s)[0]
        t_win = times[s:s + points]
        centre, scale = t_win.mean(), np.ptp(t_win) or 1.0
        x = (t_win - centre) / scale
        coeffs = np.polynomial.polynomial.polyfit(x, flat[s:s + points], order)
        out[pick] = np.polynomial.polynomial.polyval((new_times[pick] - centre) / scale, coeffs).T
    return out.reshape((new_times.size,) + values.shape[1:])


def ingest_trajectory(path: str | os.PathLike, site_count: int, site_map: SiteMap | None = None,
                      interpolation: int | None = None, fine_step: float | None = None,
                      fit_points: int | None = None, tolerance: float = 1e-6) -> Trajectory:
    """Load an externally computed trajectory and optionally resample it.

    Sampled states must be Hermitian with trace in (0, 1] and eigenvalues
    above ``-tolerance``; external integrators carry their own error, so the
    tolerance is looser than for native propagation. With ``interpolation``
    set to a polynomial order, every matrix element is refit locally and
    evaluated on a uniform grid of spacing ``fine_step`` (default: the
    median input spacing / 8).
    """
    meta, times, states, pops = read_trajectory(path)
    n = int(meta["n_sites"])
    if n != site_count:
        raise TrajectoryFormatError(f"{path}: file has {n} sites, expected {site_count}")
    if site_map is not None and site_map.n_sites != n:
        raise ValueError(f"site map has {site_map.n_sites} sites, trajectory {n}")
    if states is not None:
        for t, rho in zip(times, states):
            try:
                check_density_matrix(rho, t, hermitian_tol=tolerance, trace_tol=tolerance,
                                     positivity_tol=tolerance)
            except PropagationError as exc:
                raise TrajectoryFormatError(f"{path}: {exc}") from None
    elif np.any(pops < -tolerance) or np.any(pops.sum(axis=1) > 1 + tolerance):
        raise TrajectoryFormatError(f"{path}: populations outside [0, 1]")

    provenance = {"kind": "ingested", "source": str(path), "time_unit": meta.get("time_unit", "fs")}
    if "provenance" in meta:
        provenance["upstream"] = meta["provenance"]
    if interpolation is None:
        return Trajectory(times, pops, states, provenance=provenance)

    step = fine_step or float(np.median(np.diff(times))) / 8
    fine = np.arange(times[0], times[-1] + 0.5 * step, step)
    fine = fine[fine <= times[-1] + 1e-9 * step]
    provenance.update(interpolation_order=interpolation, fine_step=step,
                      fit_points=fit_points or interpolation + 1)
    if states is not None:
        fine_states = polynomial_resample(times, states, fine, interpolation, fit_points)
        fine_states = 0.5 * (fine_states + np.conj(np.swapaxes(fine_states, 1, 2)))
        fine_pops = fine_states.diagonal(axis1=1, axis2=2).real.copy()
    else:
        fine_states = None
        fine_pops = polynomial_resample(times, pops, fine, interpolation, fit_points)
    return Trajectory(fine, fine_pops, fine_states, provenance=provenance)
