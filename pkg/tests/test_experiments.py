import json

import numpy as np
import pytest

from excitonwalk.experiments import (
    Case, ConfigError, ExperimentConfig, list_presets, preset_config, run_experiment,
)
from excitonwalk.io import read_columns, read_series

SMALL_CHAIN = {"model.n_sites": 21, "time.t_max": 2.0, "time.n_samples": 61}


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


class TestCatalog:
    def test_count(self):
        assert len(list_presets()) >= 6

    def test_descriptions(self):
        catalog = {p["name"]: p for p in list_presets()}
        assert catalog["fig3"]["description"] == "FMO MSD/power-law/coherence at 77 K and 300 K"
        assert "diffusion-coefficient surface" in catalog["fig4"]["description"]
        assert catalog["fig2a"]["figure"] == "2a"

    @pytest.mark.parametrize("name", [p["name"] for p in list_presets()])
    def test_presets_round_trip(self, name):
        cfg = preset_config(name)
        assert ExperimentConfig.from_json(cfg.to_json()) == cfg

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_config("fig9")


class TestConfig:
    def test_fig3_parameters(self):
        cfg = preset_config("fig3")
        assert cfg.fmo.temperatures == [77.0, 300.0]
        assert (cfg.fmo.reorganization_energy, cfg.fmo.cutoff) == (35.0, 150.0)
        assert cfg.fmo.trap_site == 2 and cfg.fmo.trap_rate == 1e-3
        assert cfg.initial_sites[0] == 5 and cfg.time.t_max == 2000.0

    def test_fig2a_dephasing_rates(self):
        assert [c.dephasing for c in preset_config("fig2a").cases] == [1.0, 3.0, 9.0]

    def test_custom_requires_every_key(self):
        data = preset_config("fig2a").to_dict()
        del data["time"]["integrator_step"]
        with pytest.raises(ConfigError, match="integrator_step"):
            ExperimentConfig.from_dict(data)

    def test_unknown_key_rejected(self):
        data = preset_config("fig2a").to_dict()
        data["analysis"]["smoothing"] = "gaussian"
        with pytest.raises(ConfigError, match="smoothing"):
            ExperimentConfig.from_dict(data)

    def test_unknown_experiment(self):
        data = preset_config("fig2a").to_dict()
        data["experiment"] = "teleport"
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(data)

    def test_overrides(self):
        cfg = preset_config("fig2a").with_overrides({"time.t_max": 3.0, "preset": "custom"})
        assert cfg.time.t_max == 3.0 and cfg.preset == "custom"
        with pytest.raises(ConfigError):
            cfg.with_overrides({"time.nope": 1})

    def test_file_round_trip(self, tmp_path):
        cfg = preset_config("fig5")
        (tmp_path / "c.json").write_text(cfg.to_json())
        assert ExperimentConfig.load(tmp_path / "c.json") == cfg

    def test_delta_rms_rescaling(self):
        case = Case("a", "anderson", sigma=1.0, dephasing=1.0, delta_rms=0.5)
        energies = case.hamiltonian(50, 1.0, seed=4).site_energies
        assert np.sqrt(np.mean(np.diff(energies) ** 2)) == pytest.approx(0.5, rel=1e-12)

    def test_delta_rms_needs_anderson(self):
        with pytest.raises(ConfigError):
            Case("s", "stark", delta=1.0, delta_rms=0.5).hamiltonian(5, 1.0, 0)


class TestRuns:
    def test_chain_powerlaw_outputs(self, tmp_path):
        cfg = preset_config("fig2a").with_overrides(SMALL_CHAIN)
        result = run_experiment(cfg, tmp_path)
        names = {p.name for p in result.files}
        assert {"msd_gamma1.csv", "b_gamma9.csv", "summary.json", "config.json"} <= names
        summary = json.loads((result.output_dir / "summary.json").read_text())
        assert summary["cases"]["gamma3"]["b_monotone"]
        assert read_series(result.output_dir / "msd_gamma1.csv").name == "msd"

    def test_deterministic_bytes(self, tmp_path):
        cfg = preset_config("fig2b").with_overrides(SMALL_CHAIN)
        a = run_experiment(cfg, tmp_path / "a").output_dir
        b = run_experiment(cfg, tmp_path / "b").output_dir
        assert _files(a) == _files(b)

    def test_summary_closes_the_loop(self, tmp_path):
        cfg = preset_config("fig5").with_overrides(SMALL_CHAIN)
        first = run_experiment(cfg, tmp_path / "a")
        summary = json.loads((first.output_dir / "summary.json").read_text())
        rerun = run_experiment(ExperimentConfig.from_dict(summary["config"]), tmp_path / "b")
        assert _files(first.output_dir) == _files(rerun.output_dir)

    def test_band_zero_is_one(self, tmp_path):
        cfg = preset_config("fig5").with_overrides(SMALL_CHAIN)
        out = run_experiment(cfg, tmp_path).output_dir
        header, data = read_columns(out / "bands_stark.csv")
        assert header[:3] == ["time_dimensionless", "k0", "k1"]
        np.testing.assert_allclose(data[:, 1], 1.0, atol=1e-12)

    def test_surface(self, tmp_path):
        cfg = preset_config("fig4").with_overrides({"surface.resolution": 21})
        result = run_experiment(cfg, tmp_path)
        header, data = read_columns(result.output_dir / "diffusion_surface.csv")
        assert header == ["delta_rms", "gamma", "D"] and data.shape == (21 * 20, 3)
        assert result.summary["max_argmax_offset"] <= result.summary["grid_step"]

    def test_fmo_short(self, tmp_path):
        cfg = preset_config("fig3").with_overrides({"time.t_max": 200.0, "initial_sites": [5],
                                                    "fmo.site_maps": ["path_index"]})
        result = run_experiment(cfg, tmp_path)
        s = result.summary
        assert set(s["onset_fs"]) == {"T77K_site6_path_index", "T300K_site6_path_index"}
        assert 1.5 <= s["xi_avg"] <= 2.5
        assert (result.output_dir / "populations_T77K_site6.csv").exists()
        assert (result.output_dir / "hamiltonian.csv").exists()

    def test_ensemble_small(self, tmp_path):
        cfg = preset_config("diffusion").with_overrides({
            "model.n_sites": 41, "time.t_max": 6.0, "analysis.fit_window": [3.0, 6.0], "seeds": [0, 1, 2],
            "time.integrator_step": 0.02})
        result = run_experiment(cfg, tmp_path)
        cases = result.summary["cases"]
        assert cases["sigma0_gamma1"]["seeds"] == [0]
        assert len(cases["sigma1_gamma1"]["seeds"]) == 3
        assert cases["sigma0_gamma1"]["D_bond_average"] == pytest.approx(2.0)

    def test_output_root_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EXCITONWALK_OUTPUT", str(tmp_path))
        result = run_experiment(preset_config("fig4").with_overrides({"surface.resolution": 5}))
        assert result.output_dir == tmp_path / "fig4"
