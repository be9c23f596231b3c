from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from src.common.errors import ConfigError, ManifestError, NumericalAbort
from src.common.io_utils import read_csv
from src.common.paths import models_dir, scenarios_dir
from src.evolution.solvers import solve_flat
from src.experiments import scenarios
from src.experiments.config import (
    apply_overrides,
    box_length,
    config_from_dict,
    load_config,
    parse_value,
    parse_vary,
)
from src.experiments.initial_data import build_initial, tagged_rng
from src.experiments.report import INSUFFICIENT, NOT_RUN, PASS, ReportRow, RunReport, build_report, diff_reports, render_diff
from src.experiments.runner import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, MANIFEST, resolve_threads, run
from src.main import main
from src.model.spec import load_model
from src.model.structure import validate_structure
from src.spectral.operators import SUPPORT_MASS_FRACTION, mass_fraction_in_central_half_box


def tiny_raw(**overrides) -> dict:
    raw = {
        "scenario": "tiny-flat",
        "seed": 0,
        "model": "flat-2d",
        "diagnostics": ["density-flux", "morawetz"],
        "grid": {"dim": 2, "points_per_axis": 32, "box_length": "2pi"},
        "initial": {"kind": "shell-random", "shell": 1},
        "solver": {"T": 0.01, "dt": 1e-3},
    }
    raw.update(overrides)
    return raw


def write_config(path: Path, raw: dict) -> Path:
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


def artifact_paths(run_dir: Path) -> set:
    return {p.relative_to(run_dir).as_posix() for p in run_dir.rglob("*") if p.is_file() and p != run_dir / MANIFEST}


@pytest.fixture(scope="module")
def flat_run(tmp_path_factory):
    cfg = config_from_dict(tiny_raw())
    return run(cfg, out=tmp_path_factory.mktemp("runs") / "tiny")


# -----------------------------
# config
# -----------------------------
def test_config_from_dict_normalises_grid_and_solver():
    cfg = config_from_dict(tiny_raw())
    assert cfg.grid == {"dim": 2, "points_per_axis": 32, "box_length": pytest.approx(2 * np.pi)}
    assert cfg.diagnostics == ("density-flux", "morawetz")
    assert cfg.solver_value("dt") == 1e-3
    assert cfg.solver_value("stride") == 1
    assert cfg.to_dict()["solver"]["divergence_form"] is True
    assert cfg.model_path() == models_dir() / "flat-2d.toml"


@pytest.mark.parametrize(
    "change, match",
    [
        ({"diagnostics": ["no-such-check"]}, "unknown diagnostic"),
        ({"diagnostics": []}, "non-empty"),
        ({"grid": {"dim": 2, "points_per_axis": 16}}, "box_length"),
        ({"grid": {"dim": 2, "points_per_axis": 16, "box_length": "two pi"}}, "multiple of pi"),
        ({"initial": {"kind": "sawtooth"}}, "initial"),
        ({"initial": {"kind": "shell-random", "nested": {"a": 1}}}, "one nesting level"),
        ({"solver": {"dt": -1e-3}}, "positive"),
        ({"solver": {"stride": 0}}, "stride"),
        ({"solver": {"method": "euler"}}, "unknown keys"),
        ({"seed": -1}, "seed"),
        ({"colour": "blue"}, "unknown config keys"),
    ],
)
def test_config_validation_errors(change, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(tiny_raw(**change))


def test_missing_required_key():
    raw = tiny_raw()
    del raw["model"]
    with pytest.raises(ConfigError, match="model"):
        config_from_dict(raw)


def test_box_length_forms():
    assert box_length(3) == 3.0
    assert box_length("2pi") == pytest.approx(2 * np.pi)
    assert box_length("pi") == pytest.approx(np.pi)
    assert box_length("0.5*pi") == pytest.approx(0.5 * np.pi)
    with pytest.raises(ConfigError):
        box_length(True)


def test_parse_value():
    assert parse_value("5e-4") == 5e-4
    assert parse_value("true") is True
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value(".5") == 0.5
    assert parse_value("quadratic") == "quadratic"


def test_overrides_change_the_hash_but_out_does_not():
    base = config_from_dict(tiny_raw())
    changed = config_from_dict(apply_overrides(tiny_raw(), ["solver.dt=5e-4", "params.morawetz_weight=abs"]))
    assert changed.solver_value("dt") == 5e-4
    assert changed.param("morawetz_weight") == "abs"
    assert changed.config_hash != base.config_hash
    moved = config_from_dict(tiny_raw(out="somewhere/else"))
    assert moved.config_hash == base.config_hash


@pytest.mark.parametrize("bad", ["solver=1", "grid.dim.x=1", "nope.key=1", "=3", "missing-equals"])
def test_bad_overrides(bad):
    with pytest.raises(ConfigError):
        apply_overrides(tiny_raw(), [bad])


def test_parse_vary():
    assert parse_vary(["solver.dt=1e-3, 5e-4", "seed=1,2,3"]) == [("solver.dt", ["1e-3", "5e-4"]), ("seed", ["1", "2", "3"])]
    with pytest.raises(ConfigError):
        parse_vary(["seed="])


def test_load_config_reads_json_and_applies_cli_values(tmp_path):
    path = write_config(tmp_path / "tiny.json", tiny_raw())
    cfg = load_config(path, overrides=["solver.T=0.02"], seed=11, out=str(tmp_path / "out"))
    assert cfg.seed == 11
    assert cfg.solver_value("T") == 0.02
    assert cfg.out == str(tmp_path / "out")
    assert cfg.source == str(path.resolve())
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.toml")


@pytest.mark.parametrize("path", sorted(Path(scenarios_dir()).glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_scenarios_validate(path):
    cfg = load_config(path)
    assert cfg.scenario == path.stem
    assert cfg.model_path().exists()


@pytest.mark.parametrize("path", sorted(Path(models_dir()).glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_models_load(path):
    model = load_model(path)
    assert model.name == path.stem
    assert model.dim in (1, 2, 3)


def test_non_cubic_model_is_reported_and_declared_as_such():
    rep = validate_structure(load_model(models_dir() / "non-cubic-2d.toml"))
    assert not rep.cubic.passed
    assert not rep.phase_rotation
    assert not rep.mismatches


# -----------------------------
# initial data
# -----------------------------
def test_tagged_streams_are_independent_and_reproducible():
    a = tagged_rng(3, "initial").standard_normal(4)
    assert np.array_equal(a, tagged_rng(3, "initial").standard_normal(4))
    assert not np.array_equal(a, tagged_rng(3, "positivity").standard_normal(4))
    assert not np.array_equal(a, tagged_rng(4, "initial").standard_normal(4))


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "gaussian-bump", "width": 0.5, "xi0": [1.0, 0.0]},
        {"kind": "shell-random", "shell": 2, "amplitude": 0.3},
        {"kind": "plane-wave", "mode": [1, -2]},
        {"kind": "two-shell", "shells": [1, 3]},
    ],
)
def test_initial_data_is_deterministic(grid2d, spec):
    f = build_initial(grid2d, spec, tagged_rng(5, "initial"))
    g = build_initial(grid2d, spec, tagged_rng(5, "initial"))
    assert f.grid == grid2d
    assert np.array_equal(f.values, g.values)


def test_shell_random_peak_modulus(grid2d):
    f = build_initial(grid2d, {"kind": "shell-random", "shell": 2, "amplitude": 0.3}, tagged_rng(0, "initial"))
    assert np.max(np.abs(f.values)) == pytest.approx(0.3, rel=1e-12)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "plane-wave", "mode": [16, 0]},
        {"kind": "two-shell", "shells": [2, 2]},
        {"kind": "gaussian-bump", "width": 0.0},
        {"kind": "shell-random", "shell": 40},
        {"kind": "zigzag"},
    ],
)
def test_initial_data_errors(grid2d, spec):
    with pytest.raises(ConfigError):
        build_initial(grid2d, spec, tagged_rng(0, "initial"))


# -----------------------------
# runs
# -----------------------------
def test_flat_run_passes_and_lists_every_artifact(flat_run):
    assert flat_run.exit_code == EXIT_OK
    assert flat_run.passed
    m = json.loads((flat_run.run_dir / MANIFEST).read_text(encoding="utf-8"))
    assert m["status"] == "completed"
    assert m["diagnostics"] == {"density-flux": "done", "morawetz": "done"}
    assert set(m["versions"]) == {"qnls", "python", "numpy", "scipy"}
    assert m["config_hash"] == config_from_dict(tiny_raw()).config_hash
    assert {a["path"] for a in m["artifacts"]} == artifact_paths(flat_run.run_dir)
    for name in ("config.json", "ledger_density_flux.csv", "ledger_morawetz.csv", "trajectory/manifest.json", "morawetz_trajectory/manifest.json"):
        assert name in {a["path"] for a in m["artifacts"]}
    assert len(list((flat_run.run_dir / "trajectory").glob("snap_*.qnls"))) == 11
    assert len(list((flat_run.run_dir / "morawetz_trajectory").glob("snap_*.qnls"))) == 11


def test_morawetz_data_sits_in_the_central_half_box(tmp_path):
    ctx = scenarios.RunContext(config_from_dict(tiny_raw()), tmp_path)
    u0 = ctx.localized_data()
    assert mass_fraction_in_central_half_box(u0) >= SUPPORT_MASS_FRACTION
    assert mass_fraction_in_central_half_box(ctx.u0) < SUPPORT_MASS_FRACTION


def test_shipped_flat_identities_scenario_passes(tmp_path):
    result = run(load_config(scenarios_dir() / "flat-identities.toml"), out=tmp_path / "run")
    assert result.exit_code == EXIT_OK
    assert result.passed, [c for c in result.criteria if not c.passed]
    assert {c.name for c in result.criteria} >= {"|dI/dt - J4| / max(|J4|, 1)", "refinement order under dt halving"}


def test_failed_criteria_still_exit_zero(tmp_path, capsys):
    path = write_config(tmp_path / "strict.json", tiny_raw(diagnostics=["density-flux"], params={"flux_tolerance": -1.0}))
    assert main(["run", str(path), "--out", str(tmp_path / "run")]) == EXIT_OK
    assert "⚠️ tiny-flat: 0/2 criteria pass" in capsys.readouterr().out
    assert not build_report(tmp_path / "run").passed

    with pytest.raises(SystemExit) as exc:
        main(["run", "--help"])
    assert exc.value.code == 0
    assert "failed criteria still exit 0" in capsys.readouterr().out


def test_scattering_increments_shrink_between_checkpoints(tmp_path):
    # the shipped scenario under u -> 2u(4t, 2x): same dynamics, a quarter of the steps
    overrides = [
        "grid.box_length=128",
        "initial.width=1.0",
        "solver.T=11.25",
        "solver.stride=5",
        "params.scattering_eps=[0.05, 0.1, 0.2]",
        "params.scattering_probes=[1.25, 3.75, 11.25]",
    ]
    cfg = load_config(scenarios_dir() / "scattering-probe.toml", overrides=overrides)
    result = run(cfg, out=tmp_path / "run")
    assert result.exit_code == EXIT_OK
    by_name = {c.name: c for c in result.criteria}
    decrease = by_name["increment decrease per checkpoint step"]
    assert decrease.passed and decrease.value >= 2.0
    assert by_name["first increment slope in ε"].passed
    payload = json.loads((result.run_dir / "scattering.json").read_text(encoding="utf-8"))
    assert payload["min_decrease"] == pytest.approx(decrease.value)
    assert all(r["monotone"] for r in payload["runs"])


def test_shipped_im_clean_scenario_holds_at_tight_tolerance(tmp_path):
    cfg = load_config(scenarios_dir() / "im-clean.toml", overrides=["params.positivity_samples=5", "params.im_samples=6"])
    assert cfg.param("im_spread_tolerance") == 1e-3
    assert cfg.param("im_cn_tolerance") == 1e-3
    result = run(cfg, out=tmp_path / "run")
    assert result.exit_code == EXIT_OK
    assert result.passed, [c for c in result.criteria if not c.passed]
    ratios = [float(r["ratio"]) for r in read_csv(result.run_dir / "im_clean.csv")]
    assert len(ratios) == 6
    assert np.allclose(ratios, 2 * np.pi, rtol=1e-3)


def test_shipped_resonance_scenario_covers_charged_patterns(tmp_path):
    overrides = ["params.resonance_samples=400", "params.resonance_charged_samples=400"]
    result = run(load_config(scenarios_dir() / "resonance-tables.toml", overrides=overrides), out=tmp_path / "run")
    assert result.exit_code == EXIT_OK
    assert result.passed, [c for c in result.criteria if not c.passed]
    names = {c.name for c in result.criteria}
    assert {"1D charged resonant non-transversal away from 0", "2D charged patterns vs brute force mismatches"} <= names
    rows = read_csv(result.run_dir / "resonance_2d_charged.csv")
    assert len(rows) == 400
    assert {r["case"] for r in rows} >= {"at-most-two-equal", "three-equal", "all-equal"}
    assert all(r["signs"] not in ("+-+-", "-+-+", "++--", "--++", "+--+", "-++-") for r in rows)


def test_identical_runs_are_byte_identical(flat_run, tmp_path):
    again = run(config_from_dict(tiny_raw()), out=tmp_path / "again")
    for name in ("ledger_density_flux.csv", "ledger_morawetz.csv", "trajectory/snap_000010.qnls"):
        assert (again.run_dir / name).read_bytes() == (flat_run.run_dir / name).read_bytes()


def test_transversality_fit_is_reproducible(tmp_path):
    raw = tiny_raw(
        scenario="transversality-fit",
        diagnostics=["transversality"],
        grid={"dim": 2, "points_per_axis": 128, "box_length": "2pi"},
        initial={"kind": "plane-wave"},
        params={
            "transversality_high": [4, 8, 16],
            "transversality_low": [1, 2, 4],
            "transversality_fixed_low": 1,
            "transversality_fixed_high": 16,
        },
    )
    path = write_config(tmp_path / "fit.json", raw)
    for name in ("a", "b"):
        assert main(["run", str(path), "--seed", "7", "--out", str(tmp_path / name)]) == EXIT_OK
    fit_a = (tmp_path / "a" / "transversality_fit.json").read_bytes()
    assert fit_a == (tmp_path / "b" / "transversality_fit.json").read_bytes()
    assert json.loads(fit_a)["seed"] == 7


def test_missing_model_exits_with_config_code(tmp_path, capsys):
    path = write_config(tmp_path / "bad.json", tiny_raw(model="no-such-model"))
    assert main(["run", str(path), "--out", str(tmp_path / "run")]) == EXIT_CONFIG
    assert str(models_dir() / "no-such-model.toml") in capsys.readouterr().err


def test_non_flat_model_is_rejected_by_flat_diagnostics(tmp_path):
    cfg = config_from_dict(tiny_raw(model="cubic-nls-2d", diagnostics=["density-flux"]))
    result = run(cfg, out=tmp_path / "run")
    assert result.exit_code == EXIT_CONFIG
    assert result.manifest["diagnostics"]["density-flux"] == "failed"
    assert "flat model" in result.manifest["error"]["message"]


def test_refuses_to_overwrite_foreign_directory(tmp_path):
    (tmp_path / "keep.txt").write_text("mine", encoding="utf-8")
    with pytest.raises(ConfigError, match="not empty"):
        run(config_from_dict(tiny_raw()), out=tmp_path)


def test_numerical_abort_flushes_partial_trajectory(tmp_path, monkeypatch, capsys):
    def blow_up(ctx):
        partial = solve_flat(ctx.u0, 0.002, 1e-3)
        raise NumericalAbort("L2 norm grew too fast", {"t": 0.003}, partial=partial)

    monkeypatch.setitem(scenarios.DIAGNOSTICS, "morawetz", blow_up)
    path = write_config(tmp_path / "abort.json", tiny_raw(diagnostics=["morawetz"]))
    out = tmp_path / "run"
    assert main(["run", str(path), "--out", str(out)]) == EXIT_ABORT
    assert "morawetz" in capsys.readouterr().err

    m = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    assert m["status"] == "aborted"
    assert m["error"]["partial"] == "trajectory"
    assert m["error"]["detail"] == {"t": 0.003}
    assert {a["path"] for a in m["artifacts"]} == artifact_paths(out)

    rep = build_report(out)
    assert [(r.diagnostic, r.status) for r in rep.rows] == [("morawetz", INSUFFICIENT)]
    assert rep.snapshots == 3
    assert not rep.passed


def test_threads_from_environment_win(monkeypatch):
    monkeypatch.delenv("QNLS_THREADS", raising=False)
    assert resolve_threads(2) == 2
    assert resolve_threads(None) is None
    monkeypatch.setenv("QNLS_THREADS", "3")
    assert resolve_threads(1) == 3
    monkeypatch.setenv("QNLS_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(1)


# -----------------------------
# reports
# -----------------------------
def test_report_of_fresh_run_is_all_pass(flat_run, capsys):
    rep = build_report(flat_run.run_dir)
    assert rep.passed
    assert rep.snapshots == 11
    assert {r.status for r in rep.rows} == {PASS}
    assert len(rep.rows) == len(flat_run.criteria)
    assert main(["report", str(flat_run.run_dir)]) == EXIT_OK
    assert "✅ all criteria pass" in capsys.readouterr().out


def test_truncated_trajectory_gives_insufficient_rows(flat_run, tmp_path):
    run_dir = tmp_path / "copy"
    shutil.copytree(flat_run.run_dir, run_dir)
    for snap in sorted((run_dir / "trajectory").glob("snap_*.qnls"))[3:]:
        snap.unlink()
    rep = build_report(run_dir)
    assert rep.snapshots == 3
    stencil_rows = [r for r in rep.rows if r.name != "J4 against 8‖∂(u⊗ū)‖² (a = |x|²)"]
    assert stencil_rows and all(r.status == INSUFFICIENT for r in stencil_rows)
    assert len(rep.missing_artifacts) == 8
    assert not rep.passed
    assert INSUFFICIENT in rep.render()


def test_report_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        build_report(tmp_path)
    (tmp_path / MANIFEST).write_text("{not json", encoding="utf-8")
    with pytest.raises(ManifestError):
        build_report(tmp_path)
    (tmp_path / MANIFEST).write_text(json.dumps({"scenario": "x"}), encoding="utf-8")
    with pytest.raises(ManifestError, match="config_hash"):
        build_report(tmp_path)
    assert main(["report", str(tmp_path)]) == EXIT_CONFIG


def test_unfinished_diagnostics_are_not_run(tmp_path):
    manifest = {
        "scenario": "x",
        "config_hash": "0" * 64,
        "status": "failed",
        "diagnostics": {"structure": "failed", "solver": "pending"},
        "criteria": [],
        "artifacts": [],
    }
    (tmp_path / MANIFEST).write_text(json.dumps(manifest), encoding="utf-8")
    rep = build_report(tmp_path)
    assert [(r.diagnostic, r.status) for r in rep.rows] == [("structure", NOT_RUN), ("solver", NOT_RUN)]
    assert rep.snapshots is None


def test_diff_reports():
    def report(name, rows):
        return RunReport(Path(name), "s", name * 64, "completed", 1.0, 11, rows=rows)

    a = report("a", [ReportRow("solver", "order", 4.1, "4 ± 0.3", PASS), ReportRow("solver", "drift", 1e-9, "<= 1e-08", PASS)])
    b = report("b", [ReportRow("solver", "order", 3.6, "4 ± 0.3", "fail"), ReportRow("norms", "slope", 3.0, ">= 2.5", PASS)])
    rows = diff_reports(a, b)
    assert [(r["diagnostic"], r["criterion"]) for r in rows] == [("solver", "order"), ("solver", "drift"), ("norms", "slope")]
    assert rows[0]["delta"] == pytest.approx(-0.5)
    assert rows[0]["status_b"] == "fail"
    assert rows[1]["value_b"] is None and rows[1]["delta"] is None and rows[1]["status_b"] == "-"
    assert rows[2]["status_a"] == "-"
    text = render_diff(a, b)
    assert "b - a" in text and "-0.5" in text


def test_report_diff_from_cli(flat_run, capsys):
    assert main(["report", str(flat_run.run_dir), "--diff", str(flat_run.run_dir)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "b - a" in out and "mass residual" in out


# -----------------------------
# sweeps
# -----------------------------
def test_sweep_dry_run_prints_the_product(tmp_path, capsys):
    path = write_config(tmp_path / "tiny.json", tiny_raw())
    code = main(
        [
            "sweep",
            str(path),
            "--vary",
            "solver.dt=1e-3,5e-4",
            "--vary",
            "seed=1,2",
            "--out",
            str(tmp_path / "sweep"),
            "--threads",
            "2",
            "--python",
            "python3",
            "--dry-run",
        ]
    )
    assert code == EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("> ")]
    assert len(lines) == 4
    assert all(ln.startswith("> python3 -m src.main") and "--threads 2" in ln for ln in lines)
    assert "--set solver.dt=5e-4 --set seed=2" in lines[3]
    assert str(tmp_path / "sweep" / "solver.dt=5e-4-seed=2") in lines[3]
    assert not (tmp_path / "sweep").exists()


def test_sweep_rejects_bad_vary(tmp_path):
    path = write_config(tmp_path / "tiny.json", tiny_raw())
    assert main(["sweep", str(path), "--vary", "seed=", "--dry-run"]) == EXIT_CONFIG
