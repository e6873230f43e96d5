import json
from pathlib import Path

import numpy as np
import pytest

from fplab.cli import RunConfig, main
from fplab.errors import ConfigError


def _hopf_config(out_dir, nx=64, eps=(0.3, 0.15), thresholds=None):
    cfg = {
        "scenario": {"name": "hopf", "b": 1.0},
        "grid": {"x_min": -2.5, "x_max": 2.5, "y_min": -2.5, "y_max": 2.5,
                 "nx": nx, "ny": nx},
        "schedule": {"eps": list(eps), "shape": "modulated"},
        "analysis": {"dictionary": "hopf-offcycle-v1"},
        "output_dir": str(out_dir),
        "seed": 0,
    }
    if thresholds:
        cfg["analysis"]["thresholds"] = thresholds
    return cfg


def test_config_validation_errors():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"scenario": {"name": "hopf"}, "grid": {}, "schedule": {"eps": [0.1, 0.2]},
                             "output_dir": "x"})
    assert exc.value.field == "schedule.eps"
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"grid": {}, "schedule": {"eps": [0.1]}, "output_dir": "x"})
    assert exc.value.field == "scenario"
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"scenario": {"name": "hopf"}, "grid": {},
                             "schedule": {"eps": [0.2, 0.1]}, "output_dir": "x",
                             "analysis": {"thresholds": {"annulus_final": 1.5}}})
    assert exc.value.field == "analysis.thresholds.annulus_final"


def test_cli_exit_2_on_bad_config(tmp_path, capsys):
    cfg = _hopf_config(tmp_path / "out")
    cfg["schedule"]["eps"] = [0.1, 0.2]
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    rc = main(["run", "--config", str(p)])
    assert rc == 2
    assert "schedule.eps" in capsys.readouterr().err


def test_cli_run_roundtrip_and_determinism(tmp_path):
    # small but real end-to-end run; trend thresholds loosened so that the
    # coarse schedule passes and the exit code is 0
    out1 = tmp_path / "run1"
    cfg = _hopf_config(out1, thresholds={
        "annulus_final": 0.3, "origin_final": 0.1, "angular_w1_final": 0.1,
        "residual_ratio_final": 0.9,
    })
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    rc = main(["run", "--config", str(p)])
    assert rc == 0
    assert (out1 / "metrics.csv").exists()
    assert (out1 / "summary.json").exists()
    assert (out1 / "measure_eps0.3.json").exists()

    # config echo re-parses to an equal RunConfig
    echoed = RunConfig.from_dict(json.loads((out1 / "config.json").read_text()))
    assert echoed.to_dict() == RunConfig.from_dict(cfg).to_dict()

    # bit-identical rerun into a fresh directory
    out2 = tmp_path / "run2"
    rc = main(["run", "--config", str(p), "--out", str(out2)])
    assert rc == 0
    assert (out2 / "metrics.csv").read_bytes() == (out1 / "metrics.csv").read_bytes()
    assert (out2 / "measure_eps0.15.json").read_bytes() == (out1 / "measure_eps0.15.json").read_bytes()


def test_cli_exit_1_on_impossible_threshold(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = _hopf_config(out, thresholds={"annulus_final": 0.999})
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    rc = main(["run", "--config", str(p)])
    assert rc == 1
    text = capsys.readouterr().out
    assert "FAIL" in text and "annulus_mass_final" in text


def test_cli_solve_and_verify(tmp_path):
    out = tmp_path / "solve"
    rc = main(["solve", "--scenario", "ou2d", "--eps", "0.2,0.1", "--shape", "iso",
               "--grid-n", "48", "--x-min", "-3", "--x-max", "3",
               "--y-min", "-3", "--y-max", "3", "--out", str(out)])
    assert rc == 0
    assert (out / "measure_eps0.2.json").exists()
    summary = json.loads((out / "solve_summary.json").read_text())
    assert len(summary["reports"]) == 2
    assert all(r["residual"] < 1e-8 for r in summary["reports"])


def test_cli_sample_runs(tmp_path):
    out = tmp_path / "mc"
    rc = main(["sample", "--scenario", "ou2d", "--eps", "0.2", "--shape", "iso",
               "--grid-n", "24", "--x-min", "-3", "--x-max", "3",
               "--y-min", "-3", "--y-max", "3", "--dt", "0.01",
               "--t-total", "20", "--n-paths", "8", "--out", str(out)])
    assert rc == 0
    assert (out / "occupation_eps0.2.json").exists()


def test_cli_design_noise(tmp_path):
    out = tmp_path / "design"
    rc = main(["design-noise", "--target", "attractor", "--scenario", "double-well",
               "--ratio", "10", "--eps", "0.1,0.05", "--grid-n", "100",
               "--out", str(out)])
    assert rc == 0
    shaping = json.loads((out / "shaping.json").read_text())
    assert shaping["ratio"] == 10
    assert min(shaping["shaping"]) >= 0.1 - 1e-12


def test_cli_find_attractor(tmp_path):
    out = tmp_path / "attr"
    rc = main(["find-attractor", "--scenario", "hopf", "--b", "1.0",
               "--grid-n", "48", "--t-end", "40", "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "attractor.json").read_text())
    assert doc["kind"] == "global-attractor"
    assert sum(doc["mask"]) > 0


def test_cli_verify_lyapunov(tmp_path):
    out = tmp_path / "cert"
    rc = main(["verify-lyapunov", "--scenario", "hopf", "--rho-m", "1.5",
               "--gamma", "1.5", "--grid-n", "64", "--out", str(out)])
    assert rc == 0
    rc2 = main(["verify-lyapunov", "--scenario", "hopf", "--rho-m", "0.2",
                "--gamma", "5.0", "--grid-n", "64", "--out", str(out)])
    assert rc2 == 1
