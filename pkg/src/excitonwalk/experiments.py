"""Experiment presets and the runner that turns a config into CSV data and a summary."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import json
import logging
import math
import os
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .analysis import (PowerLawSettings, Series, localization_bound, mean_ipr, msd,
                       plateau_mean, power_law_exponent, subdiffusive_onset,
                       trajectory_coherence)
from .diffusion import (ChainBondData, diffusion_coefficient, diffusion_coefficient_uniform,
                        diffusion_surface, empirical_diffusion, optimal_dephasing)
from .io import atomic_write_text, export_bands, export_columns, export_series
from .model import (FMO_STRONG_BONDS, BathSpec, DecoherenceSpec, DisorderSpec, Hamiltonian, SiteMap,
                    chain_hamiltonian, dephasing_rate, fmo_hamiltonian, fmo_site_map)
from .propagation import IntegratorSettings, propagate_coherent, propagate_master, site_state
from .units import get_units

log = logging.getLogger(__name__)

EXPERIMENTS = ("fmo_transport", "chain_powerlaw", "coherence_decay", "diffusion_surface",
               "diffusion_ensemble")


class ConfigError(ValueError):
    pass


def _from_mapping(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in fields(cls)}
    missing = names - data.keys()
    unknown = data.keys() - names
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


@dataclass
class Case:
    """One chain variant: static disorder plus a uniform dephasing rate.

    A positive ``delta_rms`` rescales the drawn Anderson energies so that this
    instance's root-mean-square bond detuning equals it exactly (``sigma`` is
    then only the width of the draw before rescaling).
    """

    label: str
    disorder: str = "none"
    sigma: float = 0.0
    delta: float = 0.0
    dephasing: float = 0.0
    delta_rms: float = 0.0

    def disorder_spec(self, seed: int) -> DisorderSpec:
        return DisorderSpec(self.disorder, self.sigma, self.delta, seed)

    def hamiltonian(self, n_sites: int, coupling: float, seed: int):
        H = chain_hamiltonian(n_sites, coupling, self.disorder_spec(seed))
        if self.delta_rms <= 0:
            return H
        if self.disorder != "anderson" or self.sigma <= 0:
            raise ConfigError(f"case {self.label!r}: delta_rms needs anderson disorder with sigma > 0")
        energies = H.site_energies
        scale = self.delta_rms / np.sqrt(np.mean(np.diff(energies) ** 2))
        return Hamiltonian(H.elements + np.diag((scale - 1) * energies), label=H.label)


@dataclass
class ModelConfig:
    kind: str  # "fmo" or "chain"
    n_sites: int
    coupling: float
    units: str  # "physical" or "dimensionless"


@dataclass
class FMOConfig:
    temperatures: list[float]
    reorganization_energy: float
    cutoff: float
    trap_site: int
    trap_rate: float
    site_maps: list[str]


@dataclass
class TimeConfig:
    t_max: float
    sampling: str  # "linear" or "log"
    sample_step: float  # linear spacing
    t_first: float  # first non-zero time on log grids
    n_samples: int  # points on log grids
    integrator_step: float
    convergence_check: bool

    def grid(self) -> np.ndarray:
        if self.sampling == "linear":
            n = int(round(self.t_max / self.sample_step))
            return np.arange(n + 1) * self.sample_step
        if self.sampling == "log":
            return np.concatenate([[0.0], np.geomspace(self.t_first, self.t_max, self.n_samples)])
        raise ConfigError(f"unknown sampling {self.sampling!r}")


@dataclass
class AnalysisConfig:
    window: float | int
    order: int
    onset_threshold: float
    onset_t_min: float
    onset_hold: float
    fit_window: list[float]
    coherent: bool
    bands: int

    def power_law(self) -> PowerLawSettings:
        return PowerLawSettings(self.window, self.order)


@dataclass
class SurfaceConfig:
    delta_rms_max: float
    gamma_max: float
    resolution: int


@dataclass
class ExperimentConfig:
    preset: str
    experiment: str
    model: ModelConfig
    initial_sites: list[int]
    fmo: FMOConfig | None
    cases: list[Case]
    time: TimeConfig
    analysis: AnalysisConfig
    surface: SurfaceConfig | None
    seeds: list[int]
    workers: int
    output_dir: str

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        top = _from_mapping(cls, data, "config")
        if top.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {top.experiment!r}; expected one of {EXPERIMENTS}")
        top.model = _from_mapping(ModelConfig, data["model"], "model")
        top.fmo = None if data["fmo"] is None else _from_mapping(FMOConfig, data["fmo"], "fmo")
        top.cases = [_from_mapping(Case, c, f"cases[{i}]") for i, c in enumerate(data["cases"])]
        top.time = _from_mapping(TimeConfig, data["time"], "time")
        top.analysis = _from_mapping(AnalysisConfig, data["analysis"], "analysis")
        top.surface = None if data["surface"] is None else _from_mapping(SurfaceConfig, data["surface"], "surface")
        if top.experiment == "fmo_transport" and top.fmo is None:
            raise ConfigError("fmo_transport needs an 'fmo' section")
        if top.experiment == "diffusion_surface" and top.surface is None:
            raise ConfigError("diffusion_surface needs a 'surface' section")
        return top

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        """Read a config file, or the ``config`` block of a run's ``summary.json``."""
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict) and "config" in data and "model" not in data:
            data = data["config"]
        return cls.from_dict(data)

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """Apply dotted-key overrides such as ``{"time.t_max": 500}``."""
        data = self.to_dict()
        for key, value in overrides.items():
            node = data
            *parents, leaf = key.split(".")
            for part in parents:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"cannot override {key!r}")
                node = node[part]
            if leaf not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[leaf] = value
        return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------- presets

_CHAIN_MODEL = dict(kind="chain", n_sites=101, coupling=1.0, units="dimensionless")
_CHAIN_ANALYSIS = dict(window=0.5, order=1, onset_threshold=1.0, onset_t_min=0.0, onset_hold=0.0,
                       fit_window=[10.0, 30.0], coherent=False, bands=0)


def _chain_time(t_max: float, n_samples: int = 241, t_first: float = 0.01) -> dict:
    return dict(t_max=t_max, sampling="log", sample_step=0.01, t_first=t_first,
                n_samples=n_samples, integrator_step=0.01, convergence_check=False)


def _config(**parts) -> ExperimentConfig:
    base = dict(initial_sites=[], fmo=None, cases=[], surface=None, seeds=[0], workers=1,
                output_dir="")
    base.update(parts)
    if not base["output_dir"]:
        base["output_dir"] = base["preset"]
    return ExperimentConfig.from_dict(base)


def _sigmas_cases(sigmas, dephasing):
    return [dict(label=f"sigma{s:g}", disorder="anderson", sigma=s, delta=0.0, dephasing=dephasing,
                 delta_rms=0.0)
            for s in sigmas]


def _preset_factories():
    fig5_rms = math.pi / 2
    return {
        "fig2a": ("ordered chain with dephasing 1, 3, 9: power law from ballistic to diffusive", "2a",
                  lambda: _config(
                      preset="fig2a", experiment="chain_powerlaw", model=_CHAIN_MODEL,
                      cases=[dict(label=f"gamma{g}", disorder="none", sigma=0.0, delta=0.0,
                                  dephasing=float(g), delta_rms=0.0) for g in (1, 3, 9)],
                      time=_chain_time(10.0), analysis=_CHAIN_ANALYSIS)),
        "fig2b": ("single Anderson instances sigma = 1, 3, 9 without dephasing: localization", "2b",
                  lambda: _config(
                      preset="fig2b", experiment="chain_powerlaw",
                      model=dict(_CHAIN_MODEL, n_sites=201), cases=_sigmas_cases((1.0, 3.0, 9.0), 0.0),
                      time=_chain_time(100.0, 321), analysis=_CHAIN_ANALYSIS, seeds=[7])),
        "fig2c": ("same Anderson instances with dephasing 1: sub-diffusive window", "2c",
                  lambda: _config(
                      preset="fig2c", experiment="chain_powerlaw",
                      model=dict(_CHAIN_MODEL, n_sites=201), cases=_sigmas_cases((1.0, 3.0, 9.0), 1.0),
                      time=_chain_time(50.0, 281), analysis=_CHAIN_ANALYSIS, seeds=[7])),
        "fig3": ("FMO MSD/power-law/coherence at 77 K and 300 K", "3",
                 lambda: _config(
                     preset="fig3", experiment="fmo_transport",
                     model=dict(kind="fmo", n_sites=7, coupling=0.0, units="physical"),
                     initial_sites=[5, 0],
                     fmo=dict(temperatures=[77.0, 300.0], reorganization_energy=35.0, cutoff=150.0,
                              trap_site=2, trap_rate=1e-3, site_maps=["path_index", "hops_from_trap", "real_space"]),
                     time=dict(t_max=2000.0, sampling="linear", sample_step=0.25, t_first=0.25,
                               n_samples=0, integrator_step=0.25, convergence_check=True),
                     analysis=dict(window=5, order=1, onset_threshold=1.0, onset_t_min=20.0,
                                   onset_hold=50.0, fit_window=[0.0, 0.0], coherent=True, bands=0))),
        "fig4": ("diffusion-coefficient surface over static disorder and dephasing", "4",
                 lambda: _config(
                     preset="fig4", experiment="diffusion_surface", model=_CHAIN_MODEL,
                     time=_chain_time(1.0, 2), analysis=_CHAIN_ANALYSIS,
                     surface=dict(delta_rms_max=4.0, gamma_max=4.0, resolution=81))),
        "fig5": ("coherence band decay for walk, Stark and Anderson chains at dephasing 1", "5",
                 lambda: _config(
                     preset="fig5", experiment="coherence_decay", model=_CHAIN_MODEL,
                     cases=[dict(label="walk", disorder="none", sigma=0.0, delta=0.0, dephasing=1.0, delta_rms=0.0),
                            dict(label="stark", disorder="stark", sigma=0.0, delta=fig5_rms, dephasing=1.0,
                                 delta_rms=0.0),
                            dict(label="anderson", disorder="anderson", sigma=fig5_rms / math.sqrt(2),
                                 delta=0.0, dephasing=1.0, delta_rms=fig5_rms)],
                     time=_chain_time(50.0, 281), analysis=dict(_CHAIN_ANALYSIS, bands=8), seeds=[3])),
        "diffusion": ("ensemble diffusion constants versus the bond-averaged prediction", None,
                      lambda: _config(
                          preset="diffusion", experiment="diffusion_ensemble",
                          model=dict(_CHAIN_MODEL, n_sites=201),
                          cases=[dict(label=f"sigma{s:g}_gamma{g:g}", disorder="anderson" if s else "none",
                                      sigma=s, delta=0.0, dephasing=g, delta_rms=0.0)
                                 for s, g in ((0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (1.0, 0.5))],
                          time=dict(t_max=30.0, sampling="linear", sample_step=0.1, t_first=0.1,
                                    n_samples=0, integrator_step=0.01, convergence_check=False),
                          analysis=dict(_CHAIN_ANALYSIS, fit_window=[10.0, 30.0]),
                          seeds=list(range(20)))),
    }


def list_presets() -> list[dict]:
    return [{"name": name, "description": desc, "figure": fig}
            for name, (desc, fig, _) in _preset_factories().items()]


def preset_config(name: str) -> ExperimentConfig:
    try:
        return _preset_factories()[name][2]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(_preset_factories())}") from None


# ---------------------------------------------------------------- runners

@dataclass
class RunResult:
    output_dir: Path
    files: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _settings(cfg: ExperimentConfig) -> IntegratorSettings:
    return IntegratorSettings(cfg.time.integrator_step, convergence_check=cfg.time.convergence_check)


def _onset(b: Series, a: AnalysisConfig) -> float | None:
    return subdiffusive_onset(b, a.onset_threshold, a.onset_t_min, a.onset_hold)


def _run_fmo(cfg: ExperimentConfig, out: Path, result: RunResult) -> None:
    units = get_units(cfg.model.units)
    H = fmo_hamiltonian()
    f = cfg.fmo
    grid = cfg.time.grid()
    settings = _settings(cfg)
    pl = cfg.analysis.power_law()
    xi = mean_ipr(H)
    strong = float(np.mean([abs(H.elements[a, b]) for a, b in FMO_STRONG_BONDS]))
    summary = result.summary
    summary.update(xi_avg=xi, mean_strong_coupling=strong,
                   localization_bound_fs=localization_bound(xi, strong, math.sqrt(3), units),
                   dephasing_time_fs={}, onset_fs={}, coherent_onset_fs={})
    result.files.append(_export_hamiltonian(H, out))

    for site in cfg.initial_sites:
        if cfg.analysis.coherent:
            psi0 = np.eye(H.n_sites)[site]
            traj = propagate_coherent(psi0, H, grid, units, keep_states=False)
            for variant in f.site_maps:
                smap = fmo_site_map(variant, origin_site=site)
                m = msd(traj, smap)
                b = power_law_exponent(m, pl)
                tag = f"coherent_site{site + 1}_{variant}"
                result.files += [export_series(m, out / f"msd_{tag}.csv"),
                                 export_series(b, out / f"b_{tag}.csv")]
                summary["coherent_onset_fs"][tag] = _onset(b, cfg.analysis)
        for T in f.temperatures:
            bath = BathSpec(T, f.reorganization_energy, f.cutoff)
            gamma = dephasing_rate(bath, units)
            summary["dephasing_time_fs"][f"{T:g}K"] = 1 / gamma if gamma > 0 else None
            dec = DecoherenceSpec.uniform(H.n_sites, gamma, f.trap_site, f.trap_rate)
            traj = propagate_master(site_state(H.n_sites, site), H, dec, grid, settings, units)
            tag = f"T{T:g}K_site{site + 1}"
            result.files.append(export_series(trajectory_coherence(traj), out / f"coherence_{tag}.csv"))
            result.files.append(export_columns(out / f"populations_{tag}.csv", traj.times,
                                               {f"p{i + 1}": traj.populations[:, i] for i in range(H.n_sites)},
                                               comment="quantity=site_populations"))
            for variant in f.site_maps:
                smap = fmo_site_map(variant, origin_site=site)
                m = msd(traj, smap)
                b = power_law_exponent(m, pl)
                result.files += [export_series(m, out / f"msd_{tag}_{variant}.csv"),
                                 export_series(b, out / f"b_{tag}_{variant}.csv")]
                summary["onset_fs"][f"{tag}_{variant}"] = _onset(b, cfg.analysis)


def _export_hamiltonian(H, out: Path) -> Path:
    path = out / "hamiltonian.csv"
    H.to_csv(path)
    return path


def _chain_member(args) -> dict:
    """One chain trajectory; top-level so process pools can pickle it."""
    cfg_dict, case_dict, seed, want_bands = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    case = Case(**case_dict)
    units = get_units(cfg.model.units)
    n = cfg.model.n_sites
    H = case.hamiltonian(n, cfg.model.coupling, seed)
    origin = cfg.initial_sites[0] if cfg.initial_sites else n // 2
    grid = cfg.time.grid()
    if case.dephasing == 0:
        traj = propagate_coherent(np.eye(n)[origin], H, grid, units, keep_states=False,
                                  record_bands=want_bands)
    else:
        traj = propagate_master(site_state(n, origin), H, DecoherenceSpec.uniform(n, case.dephasing),
                                grid, _settings(cfg), units, keep_states=False, record_bands=want_bands)
    m = msd(traj, SiteMap.chain(n, origin))
    bonds_D = diffusion_coefficient(ChainBondData.from_chain(H, case.dephasing)) if case.dephasing > 0 else None
    return {"times": traj.times, "msd": m.values, "bands": traj.bands,
            "end_population": float(traj.populations[:, [0, -1]].max()),
            "bond_D": bonds_D, "delta_sq": float(np.mean(np.diff(H.site_energies) ** 2))}


def _members(cfg: ExperimentConfig, jobs: list) -> list[dict]:
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_chain_member, jobs))
    return [_chain_member(j) for j in jobs]


def _run_chain_powerlaw(cfg: ExperimentConfig, out: Path, result: RunResult) -> None:
    seed = cfg.seeds[0]
    jobs = [(cfg.to_dict(), asdict(c), seed, False) for c in cfg.cases]
    pl = cfg.analysis.power_law()
    unit = cfg.model.units == "physical" and "fs" or "dimensionless"
    cases = result.summary.setdefault("cases", {})
    for case, member in zip(cfg.cases, _members(cfg, jobs)):
        m = Series(member["times"], member["msd"], "msd", "lattice^2")
        b = power_law_exponent(m, pl)
        result.files += [export_series(m, out / f"msd_{case.label}.csv", unit),
                         export_series(b, out / f"b_{case.label}.csv", unit)]
        below = b.values < 1
        cases[case.label] = {
            "seed": seed, "b_min": float(b.values.min()), "b_max": float(b.values.max()),
            "b_monotone": bool(np.all(np.diff(b.values) <= 1e-9)),
            "first_below_1": float(b.times[np.argmax(below)]) if below.any() else None,
            "msd_plateau": plateau_mean(m), "end_population": member["end_population"],
        }


def _run_coherence_decay(cfg: ExperimentConfig, out: Path, result: RunResult) -> None:
    seed = cfg.seeds[0]
    jobs = [(cfg.to_dict(), asdict(c), seed, True) for c in cfg.cases]
    kmax = cfg.analysis.bands
    cases = result.summary.setdefault("cases", {})
    for case, member in zip(cfg.cases, _members(cfg, jobs)):
        t, bands = member["times"], member["bands"][:, :kmax]
        result.files.append(export_bands(t, bands, out / f"bands_{case.label}.csv", "dimensionless"))
        late = t >= 1.0 / case.dephasing
        ripple = [float(np.max(bands[late, k] / np.minimum.accumulate(bands[late, k])) - 1)
                  for k in range(1, kmax)]
        cases[case.label] = {"seed": seed, "delta_rms": math.sqrt(member["delta_sq"]),
                             "band0_max_deviation": float(np.abs(bands[:, 0] - 1).max()),
                             "ripple_after_dephasing_time": ripple}


def _run_surface(cfg: ExperimentConfig, out: Path, result: RunResult) -> None:
    s = cfg.surface
    units = get_units(cfg.model.units)
    d = np.linspace(0, s.delta_rms_max, s.resolution)
    g = np.linspace(0, s.gamma_max, s.resolution)[1:]
    D = diffusion_surface(d, g, cfg.model.coupling, units)
    rows = ["delta_rms,gamma,D"]
    rows += [f"{di:.12g},{gj:.12g},{D[i, j]:.12g}" for i, di in enumerate(d) for j, gj in enumerate(g)]
    path = out / "diffusion_surface.csv"
    atomic_write_text(path, "\n".join(rows) + "\n")
    opt = out / "optimal_dephasing.csv"
    atomic_write_text(opt, "delta_rms,gamma_opt\n" + "".join(
        f"{di:.12g},{optimal_dephasing(di ** 2, units):.12g}\n" for di in d))
    result.files += [path, opt]
    argmax = g[np.argmax(D[1:], axis=1)]
    result.summary["max_argmax_offset"] = float(np.max(np.abs(argmax - d[1:] / units.hbar)))
    result.summary["grid_step"] = float(g[1] - g[0])


def _run_diffusion_ensemble(cfg: ExperimentConfig, out: Path, result: RunResult) -> None:
    units = get_units(cfg.model.units)
    fit = tuple(cfg.analysis.fit_window)
    cases = result.summary.setdefault("cases", {})
    for case in cfg.cases:
        seeds = cfg.seeds if case.disorder in ("anderson", "combined") else cfg.seeds[:1]
        members = _members(cfg, [(cfg.to_dict(), asdict(case), s, False) for s in seeds])
        series = [Series(m["times"], m["msd"], "msd") for m in members]
        est = empirical_diffusion(series, fit)
        mean_msd = Series(series[0].times, np.mean([s.values for s in series], axis=0), "msd", "lattice^2")
        result.files.append(export_series(mean_msd, out / f"msd_mean_{case.label}.csv", "dimensionless"))
        bond_D = float(np.mean([m["bond_D"] for m in members]))
        cases[case.label] = {
            "seeds": list(seeds), "D_empirical": est.value, "D_stderr": est.stderr,
            "D_bond_average": bond_D,
            "D_uniform": diffusion_coefficient_uniform(cfg.model.coupling, case.dephasing,
                                                       float(np.mean([m["delta_sq"] for m in members])), units),
            "max_end_population": max(m["end_population"] for m in members),
        }


_RUNNERS = {
    "fmo_transport": _run_fmo,
    "chain_powerlaw": _run_chain_powerlaw,
    "coherence_decay": _run_coherence_decay,
    "diffusion_surface": _run_surface,
    "diffusion_ensemble": _run_diffusion_ensemble,
}


def run_experiment(cfg: ExperimentConfig, output_root: str | os.PathLike | None = None) -> RunResult:
    """Run ``cfg`` and write CSV data, ``config.json`` and ``summary.json``.

    Relative ``output_dir`` values resolve against ``output_root`` (default:
    ``$EXCITONWALK_OUTPUT`` or the working directory).
    """
    root = Path(output_root or os.environ.get("EXCITONWALK_OUTPUT", "."))
    out = Path(cfg.output_dir)
    out = out if out.is_absolute() else root / out
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    log.info("running %s (%s) into %s", cfg.preset, cfg.experiment, out)
    _RUNNERS[cfg.experiment](cfg, out, result)
    result.summary = {"preset": cfg.preset, "experiment": cfg.experiment, "version": __version__,
                      **result.summary, "config": cfg.to_dict()}
    config_path = out / "config.json"
    atomic_write_text(config_path, cfg.to_json() + "\n")
    summary_path = out / "summary.json"
    atomic_write_text(summary_path, json.dumps(result.summary, indent=2, sort_keys=True, default=_jsonable) + "\n")
    result.files += [config_path, summary_path]
    return result


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")
