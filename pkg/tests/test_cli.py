import csv
import json

import numpy as np
import pytest

from qclab.cli import main
from qclab.config import ConfigError, ExperimentConfig, parse_rate


# ------------------------------------------------------------------- config

def test_config_roundtrip_lossless(tmp_path):
    cfg = ExperimentConfig(M=9, N=7, K=2, scale=2.5, alpha="3/4", epsilon=1e-5,
                           planner="uniform", seed=42)
    text = cfg.to_text()
    assert ExperimentConfig.from_text(text) == cfg
    assert ExperimentConfig.from_text(text).to_text() == text
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    assert ExperimentConfig.load(path) == cfg


def test_config_hash_tracks_content():
    a = ExperimentConfig()
    b = ExperimentConfig(seed=1)
    assert a.sha256() != b.sha256()
    assert a.sha256() == ExperimentConfig().sha256()


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(K=7)                  # K must stay below N
    with pytest.raises(ConfigError):
        ExperimentConfig(alpha="9/8")
    with pytest.raises(ConfigError):
        ExperimentConfig(planner="bogus")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("M = 7\nbogus_key = 3\n")
    assert parse_rate("8/9") == pytest.approx(8.0 / 9.0)
    assert parse_rate("0.5") == 0.5


# ----------------------------------------------------------------- commands

def _read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_cli_profile(tmp_path, capsys):
    code = main(["profile", "--out", str(tmp_path), "--no-figures"])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert abs(report["results"]["phi_max"] - 2.7810) <= 5e-4
    assert report["results"]["all_assumptions_pass"] is True
    assert report["config_sha256"] == ExperimentConfig().sha256()
    out = capsys.readouterr().out
    assert "load max" in out and "[pass]" in out


def test_cli_bands(tmp_path):
    code = main(["bands", "--out", str(tmp_path), "--no-figures"])
    assert code == 0
    names = [f"bands_alpha_{n}_{d}.csv" for n, d in ((1, 8), (1, 4), (1, 2), (8, 9))]
    for name in names:
        assert (tmp_path / name).exists()
    rows = _read_csv(tmp_path / "bands_alpha_8_9.csv")
    assert rows[0] == ["s", "r", "r_lower", "r_upper"]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    assert data.shape[0] == 512
    assert data[-1, 0] > 1.0 and abs(data[-1, 0] - 1.001) <= 2e-3
    assert np.all(np.diff(data[:, 1]) > 0.0)
    # nested bands at a common load fraction
    s_probe = 0.25
    widths = []
    for name in names:
        d = np.array([[float(v) for v in row] for row in _read_csv(tmp_path / name)[1:]])
        i = np.argmin(np.abs(d[:, 0] - s_probe))
        widths.append(d[i, 3] - d[i, 2])
    assert np.all(np.diff(widths) > 0.0)


def test_cli_fracture(tmp_path, capsys):
    code = main(["fracture", "--out", str(tmp_path), "--no-figures"])
    assert code == 0                         # fracture is this demo's success
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"]["status"] == "fracture"
    assert report["results"]["fracture_element"] in (-4, -3, -2, 2, 3, 4)
    rows = _read_csv(tmp_path / "trace_q1.csv")
    assert rows[0] == ["iter", "max_spacing"]
    spacing = np.array([float(r[1]) for r in rows[1:]])
    threshold = report["results"]["fracture_threshold"]
    # diverging tail: monotone growth once the iterates leave the response zone
    tail = spacing[spacing > 1.2]
    assert tail.size >= 2 and np.all(np.diff(tail) >= 0.0)
    assert spacing[-1] > threshold


def test_cli_continue_endpoint(tmp_path, capsys):
    code = main(["continue", "--epsilon", "1e-4", "--out", str(tmp_path), "--no-figures"])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    res = report["results"]
    assert res["status"] == "converged"
    assert res["final_error"] <= 1e-4
    assert res["supersolution_dominates"] is True
    Q = res["Q"]
    plan_rows = _read_csv(tmp_path / "plan.csv")
    assert plan_rows[0] == ["q", "s_q", "P_q", "gamma_q"]
    assert len(plan_rows) == Q + 2           # header + q = 0..Q
    for q in (1, Q):
        assert (tmp_path / f"trace_q{q}.csv").exists()
    stair = _read_csv(tmp_path / "staircase.csv")
    assert stair[0] == ["s", "error", "delta"]
    assert len(stair) == Q + 1


def test_cli_continue_single_step_fractures(tmp_path, capsys):
    code = main(["continue", "--planner", "single-step", "--out", str(tmp_path),
                 "--no-figures"])
    assert code == 3
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"]["status"] == "aborted"
    assert report["results"]["reason"] == "fracture"
    assert report["results"]["step"] == 1


def test_cli_continue_uniform_planner(tmp_path):
    code = main(["continue", "--planner", "uniform", "--epsilon", "1e-3",
                 "--scale", "2.484", "--out", str(tmp_path), "--no-figures"])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"]["status"] == "converged"


def test_cli_uniform_planner_infeasible_tolerance(tmp_path, capsys):
    code = main(["continue", "--planner", "uniform", "--epsilon", "1e-3",
                 "--out", str(tmp_path), "--no-figures"])
    assert code == 2
    assert "2 eps" in capsys.readouterr().err


def test_cli_plan_only(tmp_path):
    code = main(["plan", "--epsilon", "1e-6", "--out", str(tmp_path), "--no-figures"])
    assert code == 0
    payload = json.loads((tmp_path / "plan.json").read_text())
    assert payload["alpha"] == pytest.approx(8.0 / 9.0)
    assert payload["profile"]["scale"] == 2.76
    assert len(payload["s"]) == len(payload["P"]) + 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"]["admissible"] is True


def test_cli_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("M = 7\nN = 7\nK = 3\nepsilon = 1e-5\n# comment\n")
    out = tmp_path / "out"
    code = main(["plan", "--config", str(cfg), "--epsilon", "1e-3",
                 "--out", str(out), "--no-figures"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["epsilon"] == 1e-3           # CLI flag wins


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["profile", "--K", "9", "--out", str(tmp_path)]) == 4
    assert main(["profile", "--bogus-flag"]) == 4
    missing = tmp_path / "nope.cfg"
    assert main(["profile", "--config", str(missing), "--out", str(tmp_path)]) == 4


def test_cli_outputs_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["bands", "--out", str(out), "--no-figures"]) == 0
        assert main(["fracture", "--out", str(out), "--no-figures"]) == 0
    for name in ("bands_alpha_8_9.csv", "bands_alpha_1_2.csv", "trace_q1.csv",
                 "report.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_cli_renders_figures(tmp_path):
    assert main(["profile", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "potential.png").stat().st_size > 0
    assert main(["fracture", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fracture.png").stat().st_size > 0
