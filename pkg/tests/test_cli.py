import hashlib
import json
from pathlib import Path

import pandas as pd
import pytest

from popforge.cli import main
from popforge.config import SCHEMAS
from popforge.fixtures import build_fixture_inputs


def dir_digest(path):
    out = {}
    for f in sorted(Path(path).rglob("*")):
        if f.is_file():
            out[str(f.relative_to(path))] = hashlib.sha256(f.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """Fixture inputs plus one small generated population for CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    inputs = root / "inputs"
    build_fixture_inputs(inputs)
    out = root / "pop"
    code = main(["generate", "--config", str(inputs / "generate_config.json"),
                 "--out", str(out), "--overrides", "target_population=4000",
                 "--threads", "1"])
    assert code == 0
    return {"inputs": inputs, "pop_dir": out, "pop": out / "population.csv"}


def test_fixtures_deterministic(tmp_path):
    assert main(["fixtures", "--out", str(tmp_path / "a")]) == 0
    assert main(["fixtures", "--out", str(tmp_path / "b")]) == 0
    assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")


def test_fixture_polygon_contains_weighted_grid_cells(fixture_paths, marginals):
    # by construction the boundary keeps a usable share of the grid
    from popforge.data_io import load_grid_density, load_region_polygon, points_in_polygon
    grid = load_grid_density(fixture_paths["grid.csv"], 1 / 120)
    poly = load_region_polygon(fixture_paths["boundary.geojson"])
    inside = points_in_polygon(grid.cells, poly)
    assert inside.any() and grid.z[inside].sum() > 0
    assert not inside.all()                     # the boundary clips the corners


def test_generate_outputs_exist(cli_env):
    assert cli_env["pop"].exists()
    assert (cli_env["pop_dir"] / "provenance.json").exists()


def test_generate_missing_grid_exit_code_and_message(cli_env, tmp_path, capsys):
    code = main(["generate", "--config", str(cli_env["inputs"] / "generate_config.json"),
                 "--out", str(tmp_path / "x"),
                 "--overrides", "grid_path=no_such_grid.csv"])
    assert code == 1
    assert "no_such_grid.csv" in capsys.readouterr().err


def test_generate_override_seed_deterministic(cli_env, tmp_path):
    args = ["generate", "--config", str(cli_env["inputs"] / "generate_config.json"),
            "--overrides", "rng_seed=7", "target_population=2000", "--threads", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "population.csv").read_bytes() == \
        (tmp_path / "b" / "population.csv").read_bytes()


def test_unknown_override_key_rejected(cli_env, tmp_path, capsys):
    code = main(["generate", "--config", str(cli_env["inputs"] / "generate_config.json"),
                 "--out", str(tmp_path / "x"), "--overrides", "bogus_key=1"])
    assert code == 1
    assert "bogus_key" in capsys.readouterr().err


def test_badly_typed_override_rejected(cli_env, tmp_path, capsys):
    code = main(["generate", "--config", str(cli_env["inputs"] / "generate_config.json"),
                 "--out", str(tmp_path / "x"), "--overrides", "n_workplaces=lots"])
    assert code == 1
    assert "n_workplaces" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["generate", "evaluate", "simulate"])
def test_help_lists_every_config_key(command, capsys):
    with pytest.raises(SystemExit) as exit_info:
        main([command, "--help"])
    assert exit_info.value.code == 0
    text = capsys.readouterr().out
    for key in SCHEMAS[command]:
        assert key in text, f"--help for {command} missing config key {key}"


def test_evaluate_population_against_source(cli_env, tmp_path):
    out = tmp_path / "eval"
    code = main(["evaluate", "--config", str(cli_env["inputs"] / "eval_config.json"),
                 "--out", str(out),
                 "--overrides", f"population_path={cli_env['pop']}",
                 'efficacy_models=["linear"]'])
    assert code == 0
    report = (out / "report.txt").read_text()
    scores = {}
    section = None
    for line in report.splitlines():
        if line.startswith("["):
            section = line
        elif section == "[ks_scores]" and "=" in line:
            k, v = line.split(" = ")
            scores[k] = float(v)
    assert set(scores) == {"age", "height", "weight"}
    assert all(v >= 0.9 for v in scores.values())
    plot = out / "plot_data"
    assert (plot / "hist_age.csv").exists()
    assert (plot / "quartiles.csv").exists()
    assert (plot / "geo_households.csv").exists()
    assert (plot / "geo_schools.csv").exists()


def test_evaluate_unknown_column(cli_env, tmp_path, capsys):
    code = main(["evaluate", "--config", str(cli_env["inputs"] / "eval_config.json"),
                 "--out", str(tmp_path / "x"),
                 "--overrides", f"population_path={cli_env['pop']}",
                 'numeric_columns=["age","nonexistent"]'])
    assert code == 1
    assert "nonexistent" in capsys.readouterr().err


def simulate_args(cli_env, out, extra):
    return ["simulate", "--config", str(cli_env["inputs"] / "epi_config.json"),
            "--out", str(out), "--overrides",
            f"population_path={cli_env['pop']}"] + extra


def test_simulate_run_files(cli_env, tmp_path):
    out = tmp_path / "sim"
    code = main(simulate_args(cli_env, out, ["n_runs=20", "max_days=5",
                                             "lockdown_thresholds=[null]"]))
    assert code == 0
    files = sorted(p.name for p in out.glob("*.csv"))
    assert len(files) == 21                     # 20 runs + ensemble mean
    assert "ensemble_mean.csv" in files


def test_simulate_single_run_mean_equals_run(cli_env, tmp_path):
    out = tmp_path / "sim1"
    code = main(simulate_args(cli_env, out, ["n_runs=1", "max_days=5",
                                             "lockdown_thresholds=[null]"]))
    assert code == 0
    run = pd.read_csv(out / "run_01.csv")
    mean = pd.read_csv(out / "ensemble_mean.csv")
    assert (run.to_numpy(dtype=float) == mean.to_numpy(dtype=float)).all()


def test_simulate_threshold_sweep(cli_env, tmp_path):
    out = tmp_path / "sweep"
    code = main(simulate_args(cli_env, out, ["n_runs=2", "max_days=5"]))
    assert code == 0                            # config default sweep: 0.01, 0.02, none
    dirs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert dirs == ["lockdown_0.01", "lockdown_0.02", "lockdown_none"]
    for d in dirs:
        assert (out / d / "ensemble_mean.csv").exists()


def test_simulate_missing_location_columns(cli_env, tmp_path, capsys):
    broken = tmp_path / "broken.csv"
    df = pd.read_csv(cli_env["pop"], nrows=50).drop(columns=["school_id"])
    df.to_csv(broken, index=False)
    code = main(simulate_args(cli_env, tmp_path / "x",
                              [f"population_path={broken}"]))
    assert code == 1
    assert "column" in capsys.readouterr().err.lower()


def test_semantically_bad_config_is_pipeline_error(cli_env, tmp_path):
    code = main(simulate_args(cli_env, tmp_path / "x", ["tick_hours=7"]))
    assert code == 2
