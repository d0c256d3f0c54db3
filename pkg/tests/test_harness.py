import json

import numpy as np
import pytest

import nonlocal_limit.cli as cli
from nonlocal_limit import (
    ConfigError,
    FluxModel,
    NumericalBlowupError,
    Window,
    sample_profile,
    solve_local,
    sup_time_l1,
)
from nonlocal_limit.harness import (
    PLOT_SCRIPT_NAME,
    SWEEP_COLUMNS,
    config_from_dict,
    emit_plot_script,
    eta_dirname,
    parse_config,
    perturbed_initial_field,
    run_single,
    run_stability_probe,
    run_sweep,
    serialize_config,
    sweep_cells_for_eta,
)

SMALL_DOC = {
    "grid": {"n_cells": 256},
    "eta_list": [0.3],
    "t_end": 1.0,
    "reference_refinement": 4,
}


def small_config(**overrides):
    doc = {**SMALL_DOC, **overrides}
    return config_from_dict(doc)


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


class TestParseConfig:
    def test_minimal_document_resolves_defaults(self):
        cfg = parse_config("{}")
        assert cfg.velocity_name == "linear"
        assert cfg.cfl == 0.5
        assert (cfg.window_lo, cfg.window_hi) == (-1.0, 2.0)
        assert cfg.eta_list == (0.1, 0.01, 0.001)
        assert cfg.n_cells == 4096
        assert cfg.reference_refinement == 8
        assert cfg.snapshot_times[0] == 0.0
        assert cfg.snapshot_times[-1] == pytest.approx(1.5)

    def test_round_trip(self):
        cfg = parse_config(json.dumps({"eta_list": [0.1, 0.01, 0.001]}))
        assert parse_config(serialize_config(cfg)) == cfg

    def test_nonpositive_eta_named_by_index(self):
        with pytest.raises(ConfigError, match=r"eta_list\[2\]"):
            parse_config(json.dumps({"eta_list": [0.1, 0.01, -0.001]}))

    def test_non_decreasing_eta_rejected(self):
        with pytest.raises(ConfigError, match=r"eta_list\[1\]"):
            parse_config(json.dumps({"eta_list": [0.1, 0.1]}))

    def test_unknown_keys_rejected_with_path(self):
        with pytest.raises(ConfigError, match="unknown key frequency"):
            parse_config(json.dumps({"frequency": 3}))
        with pytest.raises(ConfigError, match="unknown key grid.dz"):
            parse_config(json.dumps({"grid": {"dz": 0.1}}))
        with pytest.raises(ConfigError, match="unknown key kernel.width"):
            parse_config(json.dumps({"kernel": {"width": 0.1}}))

    def test_malformed_document(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("{not json")

    def test_window_must_sit_inside_domain(self):
        with pytest.raises(ConfigError, match="window"):
            parse_config(json.dumps({"window": {"lo": -5.0, "hi": 0.0}}))

    def test_profile_level_count_checked(self):
        with pytest.raises(ConfigError, match="profile.levels"):
            parse_config(json.dumps({"profile": {"breakpoints": [0.0],
                                                 "levels": [1.0]}}))

    def test_bad_velocity_name(self):
        with pytest.raises(ConfigError, match="velocity.name"):
            parse_config(json.dumps({"velocity": {"name": "sigmoid"}}))

    def test_cfl_bounds(self):
        with pytest.raises(ConfigError, match="cfl"):
            parse_config(json.dumps({"cfl": 1.5}))

    def test_reference_refinement_minimum(self):
        with pytest.raises(ConfigError, match="reference_refinement"):
            parse_config(json.dumps({"reference_refinement": 2}))


class TestRunSingle:
    def test_writes_expected_files(self, tmp_path):
        cfg = small_config()
        report = run_single(cfg, 0.3, output_dir=tmp_path)
        out = tmp_path / eta_dirname(0.3)
        header, rows = read_csv(out / "snapshots.csv")
        assert header == ["time", "cell_index", "x_center", "q", "W"]
        assert len(rows) % cfg.n_cells == 0
        header, rows = read_csv(out / "tv_series.csv")
        assert header == ["step", "time", "tv_q", "tv_W", "mass"]
        assert len(rows) == report.n_steps + 1
        header, rows = read_csv(out / "diagnostics.csv")
        assert header == ["name", "value"]
        assert [r[0] for r in rows] == [
            "wq_identity_gap", "weak_residual", "transport_residual_W",
            "entropy_residual_min", "max_principle_violation",
        ]

    def test_eta_must_be_configured(self, tmp_path):
        with pytest.raises(ConfigError, match="eta_list"):
            run_single(small_config(), 0.123, output_dir=tmp_path)

    def test_constant_kernel_variant_completes(self, tmp_path):
        cfg = small_config(kernel={"family": "constant"})
        run_single(cfg, 0.3, output_dir=tmp_path)
        header, rows = read_csv(tmp_path / eta_dirname(0.3) / "diagnostics.csv")
        values = dict(rows)
        # the transport identity only applies to the exponential kernel
        assert values["transport_residual_W"] == "nan"
        assert float(values["max_principle_violation"]) <= 1e-12

    def test_zero_profile_run_is_silent(self, tmp_path):
        cfg = small_config(profile={"breakpoints": [], "levels": [0.0]})
        report = run_single(cfg, 0.3, output_dir=tmp_path)
        np.testing.assert_array_equal(report.tv_q_series, 0.0)
        np.testing.assert_array_equal(report.tv_w_series, 0.0)
        np.testing.assert_array_equal(report.mass_series, 0.0)
        values = dict(read_csv(tmp_path / eta_dirname(0.3) / "diagnostics.csv")[1])
        assert float(values["wq_identity_gap"]) == 0.0
        assert float(values["weak_residual"]) == 0.0
        assert float(values["transport_residual_W"]) == 0.0
        assert float(values["max_principle_violation"]) == 0.0

    def test_repeated_runs_are_byte_identical(self, tmp_path):
        cfg = small_config()
        run_single(cfg, 0.3, output_dir=tmp_path / "a")
        run_single(cfg, 0.3, output_dir=tmp_path / "b")
        for name in ("snapshots.csv", "tv_series.csv", "diagnostics.csv"):
            first = (tmp_path / "a" / eta_dirname(0.3) / name).read_bytes()
            second = (tmp_path / "b" / eta_dirname(0.3) / name).read_bytes()
            assert first == second


class TestRunSweep:
    def test_sweep_writes_rows_and_reference_once(self, tmp_path):
        cfg = small_config(eta_list=[0.3, 0.15])
        result = run_sweep(cfg, output_dir=tmp_path)
        assert result.reference_runs == 1
        assert result.nonlocal_runs == 2
        header, rows = read_csv(tmp_path / "sweep.csv")
        assert header == list(SWEEP_COLUMNS)
        assert len(rows) == 2
        assert (tmp_path / "reference" / "tv_series.csv").is_file()
        assert (tmp_path / "reference" / "snapshots.csv").is_file()
        for eta in (0.3, 0.15):
            assert (tmp_path / eta_dirname(eta) / "snapshots.csv").is_file()

    def test_grid_couples_to_eta(self):
        cfg = small_config(eta_list=[0.3, 0.15])
        span = cfg.x_max - cfg.x_min
        for eta in cfg.eta_list:
            n = sweep_cells_for_eta(cfg, eta)
            assert span / n <= eta / 10.0
            assert n >= cfg.n_cells
            assert (cfg.n_cells * cfg.reference_refinement) % n == 0

    def test_insufficient_refinement_rejected(self):
        cfg = small_config(eta_list=[0.3, 0.02])
        with pytest.raises(ConfigError, match="reference_refinement"):
            sweep_cells_for_eta(cfg, 0.02)

    def test_single_entry_sweep_matches_manual_composition(self, tmp_path):
        cfg = small_config()
        result = run_sweep(cfg, output_dir=tmp_path)
        row = result.rows[0]

        ref_grid = cfg.build_grid(cfg.n_cells * cfg.reference_refinement)
        ref_q0 = sample_profile(cfg.build_profile(), ref_grid)
        reference = solve_local(
            ref_q0, FluxModel(velocity=cfg.build_velocity()), cfl=cfg.cfl,
            t_end=cfg.t_end, snapshot_times=cfg.merged_snapshot_times(),
        )
        expected = sup_time_l1(result.reports[0], reference,
                               Window(cfg.window_lo, cfg.window_hi))
        assert row["sup_time_l1_q_vs_ref"] == pytest.approx(expected, rel=1e-12)


class TestStabilityProbe:
    def test_zero_delta_gives_zero_distance(self, tmp_path):
        distance = run_stability_probe(small_config(), 0.0, output_dir=tmp_path)
        assert distance == 0.0
        header, rows = read_csv(tmp_path / "probe.csv")
        assert header == ["delta", "sup_time_l1"]
        assert len(rows) == 1

    def test_perturbation_respects_bounds(self):
        cfg = small_config()
        grid = cfg.build_grid()
        q0 = sample_profile(cfg.build_profile(), grid)
        perturbed = perturbed_initial_field(q0, 0.25)
        assert float(np.min(perturbed.values)) >= 0.0
        assert float(np.max(perturbed.values)) <= 1.0
        added = float(np.sum(perturbed.values - q0.values) * grid.dx)
        assert added == pytest.approx(0.25, rel=0.05)

    def test_negative_delta_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="delta"):
            run_stability_probe(small_config(), -0.1, output_dir=tmp_path)


class TestEmitPlotScript:
    def test_script_references_each_csv_exactly_once(self, tmp_path):
        cfg = small_config()
        run_sweep(cfg, output_dir=tmp_path)
        run_stability_probe(cfg, 0.01, output_dir=tmp_path)
        path = emit_plot_script(cfg, output_dir=tmp_path)
        script = path.read_text(encoding="utf-8")
        expected = [
            f"{eta_dirname(0.3)}/snapshots.csv",
            f"{eta_dirname(0.3)}/tv_series.csv",
            f"{eta_dirname(0.3)}/diagnostics.csv",
            "reference/tv_series.csv",
            "reference/snapshots.csv",
            "sweep.csv",
            "probe.csv",
        ]
        for rel in expected:
            assert script.count(rel) == 1, rel

    def test_regeneration_is_deterministic(self, tmp_path):
        cfg = small_config()
        run_single(cfg, 0.3, output_dir=tmp_path)
        first = emit_plot_script(cfg, output_dir=tmp_path).read_bytes()
        second = emit_plot_script(cfg, output_dir=tmp_path).read_bytes()
        assert first == second

    def test_empty_output_dir_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="no per-eta CSV"):
            emit_plot_script(small_config(), output_dir=tmp_path)
        with pytest.raises(ConfigError, match="does not exist"):
            emit_plot_script(small_config(), output_dir=tmp_path / "missing")

    def test_partial_files_named_in_error(self, tmp_path):
        cfg = small_config()
        run_single(cfg, 0.3, output_dir=tmp_path)
        (tmp_path / eta_dirname(0.3) / "diagnostics.csv").unlink()
        with pytest.raises(ConfigError, match="diagnostics.csv"):
            emit_plot_script(cfg, output_dir=tmp_path)

    def test_generated_script_runs(self, tmp_path):
        import subprocess
        import sys

        cfg = small_config()
        run_single(cfg, 0.3, output_dir=tmp_path)
        path = emit_plot_script(cfg, output_dir=tmp_path)
        proc = subprocess.run([sys.executable, str(path)], capture_output=True,
                              text=True, cwd=tmp_path)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "tv_curves.png").is_file()
        assert (tmp_path / "profiles.png").is_file()


class TestCli:
    def write_config(self, tmp_path, doc=None):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(doc if doc is not None else SMALL_DOC))
        return path

    def test_run_command(self, tmp_path, capsys):
        config = self.write_config(tmp_path)
        code = cli.main(["run", "--config", str(config), "--eta", "0.3",
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / eta_dirname(0.3) / "snapshots.csv").is_file()

    def test_stability_command(self, tmp_path):
        config = self.write_config(tmp_path)
        code = cli.main(["stability", "--config", str(config), "--delta", "0.01",
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "probe.csv").is_file()

    def test_plot_command_requires_csvs(self, tmp_path, capsys):
        config = self.write_config(tmp_path)
        code = cli.main(["plot", "--config", str(config),
                         "--out", str(tmp_path / "out")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_validation_error_exits_one(self, tmp_path, capsys):
        config = self.write_config(tmp_path, {"eta_list": [-1.0]})
        code = cli.main(["run", "--config", str(config), "--eta", "0.3",
                         "--out", str(tmp_path / "out")])
        assert code == 1
        assert "eta_list[0]" in capsys.readouterr().err

    def test_missing_config_exits_one(self, tmp_path, capsys):
        code = cli.main(["run", "--config", str(tmp_path / "nope.json"),
                         "--eta", "0.3", "--out", str(tmp_path / "out")])
        assert code == 1

    def test_blowup_exits_two(self, tmp_path, monkeypatch, capsys):
        config = self.write_config(tmp_path)

        def explode(cfg, eta, output_dir=None):
            raise NumericalBlowupError("synthetic blowup", step=7)

        monkeypatch.setattr(cli, "run_single", explode)
        code = cli.main(["run", "--config", str(config), "--eta", "0.3",
                         "--out", str(tmp_path / "out")])
        assert code == 2
        assert "blowup" in capsys.readouterr().err
