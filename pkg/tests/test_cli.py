import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import migrate_rum
from migrate_rum.cli import digest, main
from simulations import gmm_panel, mixed_logit_data

TOY = Path(migrate_rum.__file__).parent / "data" / "toy"


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def run_report(out):
    return json.loads((Path(out) / "run_report.json").read_text())


@pytest.fixture
def toy_dir(tmp_path):
    dest = tmp_path / "toy"
    shutil.copytree(TOY, dest)
    return dest


def test_simulate_is_deterministic(tmp_path):
    cfg = write_config(tmp_path / "sim.json", {
        "world": {"random": {"n_cities": 4, "years": [2000, 2004], "beta": 0.8}},
        "n_individuals": 25, "true_coeffs": {"distance_jobtrend": 0.5},
    })
    for name in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--seed", "13"]) == 0
    for f in ("simulated_panel.csv", "generator_params.json"):
        assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)
    report = run_report(tmp_path / "a")
    assert report["seed"] == 13 and report["status"] == "ok"
    assert report["outputs"]["panel"]["sha256"] == digest(tmp_path / "a" / "simulated_panel.csv")


def test_build_panel_reproduces_shipped_fixture(toy_dir, tmp_path):
    before = {p.name: digest(p) for p in toy_dir.iterdir()}
    out = tmp_path / "built"
    assert main(["build-panel", "--config", str(toy_dir / "config_build.json"), "--out", str(out)]) == 0
    assert (out / "quasi_panel.csv").read_bytes() == (toy_dir / "quasi_panel.csv").read_bytes()
    report = run_report(out)
    drops = json.loads((out / "drop_report.json").read_text())
    assert report["rows_out"] == drops["rows_out"] == 219
    assert report["drop_reasons"] == {"multi_move": 1, "never_worked": 1}
    assert report["started_log_c"] == pytest.approx(drops["started_log_c"])
    # inputs untouched
    assert {p.name: digest(p) for p in toy_dir.iterdir()} == before


def test_estimate_lpm_on_toy_fixture(toy_dir, tmp_path):
    out = tmp_path / "lpm"
    assert main(["estimate", "lpm", "--config", str(toy_dir / "config_lpm.json"), "--out", str(out)]) == 0
    table = pd.read_csv(out / "lpm_coefficients.csv")
    assert list(table.columns) == ["term", "coefficient", "std_error", "t", "p_value", "ci_low", "ci_high"]
    assert table["term"].tolist() == ["distance_jobtrend", "distance_lngdppc", "age", "pioneer"]
    payload = json.loads((out / "lpm_result.json").read_text())
    assert payload["estimator"] == "lpm"
    assert "prediction_report" in payload["diagnostics"]


def test_missing_input_file(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.json", {"panel": "does_not_exist.csv", "regressors": ["x"]})
    status = main(["estimate", "lpm", "--config", cfg, "--out", str(tmp_path / "o")])
    assert status == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert set(err) == {"type", "category", "exit_code", "message"}
    assert err["exit_code"] == 2 and err["category"] == "config"
    report = run_report(tmp_path / "o")
    assert report["status"] == "error" and report["error"] == err


def test_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2


def test_data_error_exit_code(tmp_path):
    panel = pd.DataFrame({"migrate": [0, 0, 0], "x": [1.0, 2.0, 3.0], "destination": ["a", "b", "c"]})
    panel.to_csv(tmp_path / "p.csv", index=False)
    cfg = write_config(tmp_path / "c.json", {"panel": "p.csv", "regressors": ["x"], "fixed_effects": []})
    assert main(["estimate", "lpm", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


@pytest.fixture
def estimation_outputs(toy_dir, tmp_path):
    X, y, g = mixed_logit_data(0, n_groups=30, per_group=40)
    panel = pd.DataFrame({"x": X["x"], "migrate": y, "destination": g, "origin": 0})
    panel.to_csv(tmp_path / "ml.csv", index=False)
    cfg = write_config(tmp_path / "ml.json", {
        "panel": "ml.csv", "regressors": ["x"], "nesting": {"level2": "destination"}, "nodes": 5,
        "marginal_effect": {"variable": "x", "lower": -1.0, "upper": 1.0, "step": 0.2},
    })
    assert main(["estimate", "mlogit", "--config", cfg, "--out", str(tmp_path / "ml")]) == 0
    assert main(["estimate", "lpm", "--config", str(toy_dir / "config_lpm.json"), "--out", str(tmp_path / "lpm")]) == 0
    return tmp_path


def test_report_single_block(estimation_outputs, tmp_path):
    out = tmp_path / "rep1"
    assert main(["report", str(estimation_outputs / "lpm"), "--out", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert text.count("\n## ") == 1 and "Intra-class" not in text


def test_report_two_blocks_and_curve(estimation_outputs, tmp_path):
    out = tmp_path / "rep2"
    assert main(["report", str(estimation_outputs / "lpm"), str(estimation_outputs / "ml"), "--out", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert text.count("\n## ") == 2 and "### Intra-class correlation" in text
    curve = pd.read_csv(out / "marginal_effects_ml_x.csv")
    assert len(curve) == 11
    np.testing.assert_allclose(curve["value"], np.linspace(-1, 1, 11), atol=1e-12)


def test_report_without_results(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 3


def test_estimate_gmm(tmp_path):
    gmm_panel(0, n_units=60, periods=5).to_csv(tmp_path / "g.csv", index=False)
    cfg = write_config(tmp_path / "g.json", {
        "panel": "g.csv", "regressors": ["x"], "spec": {"endogenous": ["x"], "fe": ["time"]},
        "diff_hansen": ["level"],
    })
    assert main(["estimate", "gmm", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    payload = json.loads((tmp_path / "o" / "gmm_result.json").read_text())
    diag = payload["diagnostics"]
    assert diag["hansen_j"]["df"] == diag["n_instruments"] - len(payload["coefficients"])
    assert set(diag["ar_tests"]) == {"1", "2"}


def test_module_entry_point(tmp_path, toy_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "migrate_rum", "build-panel", "--config", str(toy_dir / "config_build.json"),
         "--out", str(tmp_path / "o"), "--threads", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
