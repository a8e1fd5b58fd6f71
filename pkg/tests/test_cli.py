import json

import numpy as np
import pytest
from scipy import stats

from main import main
from src.modules.calibrate import REFINE_FACTOR
from src.modules.commands import verification_config
from src.modules.coverage import MonteCarloConfig, min_coverage
from src.modules.model import GramData, TuningVector
from src.modules.shapes import build_hull
from src.utils.database import get_db_instance

C_EXAMPLE = [[1.0, -0.5], [-0.5, 1.0]]
LAM = [2.23606797749979, 2.23606797749979]


def _write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


@pytest.fixture
def data_files(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.standard_normal((20, 2))
    y = X @ np.array([1.0, 0.0]) + rng.standard_normal(20)
    np.savetxt(tmp_path / "X.csv", X, delimiter=",")
    np.savetxt(tmp_path / "y.csv", y, delimiter=",")
    return tmp_path / "X.csv", tmp_path / "y.csv"


@pytest.fixture
def ellipse_config(tmp_path):
    return _write_json(tmp_path / "ellipse.json", {"design": {"C": C_EXAMPLE, "n": 20}, "tuning": {"lam": LAM}})


def test_solve_writes_report(data_files, tmp_path):
    X, y = data_files
    out = tmp_path / "solve.json"
    assert main(["solve", "--X", str(X), "--y", str(y), "--lambda", "2.0,2.0", "--output", str(out)]) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["schema"] == "confsets/v1"
    assert report["subcommand"] == "solve"
    assert len(report["result"]["beta"]) == 2
    assert all(g <= 2.0 + 1e-6 for g in report["result"]["ls_lasso_gap"])


def test_solve_least_squares_csv(data_files, capsys):
    X, y = data_files
    assert main(["solve", "--X", str(X), "--y", str(y), "--ls", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "j,beta,active,kkt_gap"
    assert len(lines) == 3


def test_solve_input_errors(data_files, tmp_path):
    X, y = data_files
    assert main(["solve", "--X", str(X), "--y", str(y)]) == 2
    assert main(["solve", "--X", str(tmp_path / "missing.csv"), "--y", str(y), "--ls"]) == 2
    assert main(["solve", "--X", str(X), "--y", str(y), "--lambda", "a,b"]) == 2


def test_ellipse_report_and_boundary(ellipse_config, tmp_path):
    out = tmp_path / "out" / "ellipse.json"
    assert main(["ellipse", "--config", ellipse_config, "--output", str(out)]) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["result"]["k_lasso"] == pytest.approx(stats.ncx2.ppf(0.95, 2, 1.0), rel=1e-8)
    assert report["result"]["k_ls"] == pytest.approx(5.991464547107979)
    boundary = (tmp_path / "out" / "ellipse_boundary.csv").read_text(encoding="utf-8").split("\n")
    assert boundary[0] == "x,y,shape_id"
    assert {line.split(",")[-1] for line in boundary[1:] if line} == {"ls", "lasso"}

    polyline = tmp_path / "polyline.csv"
    assert main(["boundary", "--from-report", str(out), "--format", "csv", "--output", str(polyline)]) == 0
    assert polyline.read_text(encoding="utf-8").startswith("x,y,shape_id\n")


def test_coverage_is_deterministic(tmp_path):
    config = _write_json(
        tmp_path / "coverage.json",
        {
            "design": {"C": C_EXAMPLE, "n": 20},
            "tuning": {"lam": LAM},
            "shape": {"tag": "box", "lower": [-2, -2], "upper": [2, 2]},
            "mc": {"n_samples": 5000},
        },
    )
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["coverage", "--config", config, "--seed", "17", "--output", str(first)]) == 0
    assert main(["coverage", "--config", config, "--seed", "17", "--threads", "2", "--output", str(second)]) == 0
    report_a = json.loads(first.read_text(encoding="utf-8"))
    report_b = json.loads(second.read_text(encoding="utf-8"))
    assert report_a["result"] == report_b["result"]
    assert report_a["seed"] == 17


def test_coverage_without_seed_fails(tmp_path):
    config = _write_json(
        tmp_path / "coverage.json",
        {
            "design": {"C": C_EXAMPLE, "n": 20},
            "tuning": {"lam": LAM},
            "shape": {"tag": "box", "lower": [-2, -2], "upper": [2, 2]},
            "mc": {"n_samples": 5000},
        },
    )
    assert main(["coverage", "--config", config]) == 2


def test_config_errors(tmp_path):
    assert main(["ellipse"]) == 2
    bad = _write_json(tmp_path / "bad.json", {"design": {"C": C_EXAMPLE}, "tuning": {"lam": LAM}})
    assert main(["ellipse", "--config", bad]) == 2
    assert main(["ellipse", "--config", str(tmp_path / "none.json")]) == 2


def test_consistent_command(tmp_path):
    config = _write_json(tmp_path / "consistent.json", {"C": C_EXAMPLE, "lam": [400.0, 200.0], "n": 10_000, "d_scale": 1.5})
    out = tmp_path / "consistent.csv"
    assert main(["consistent", "--config", config, "--format", "csv", "--output", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").strip().split("\n")
    assert lines[0] == "set,m_1,m_2"
    assert len(lines) == 9


def test_simulate_profile(tmp_path):
    config = _write_json(
        tmp_path / "simulate.json",
        {
            "design": {"C": C_EXAMPLE, "n": 20},
            "tuning": {"lam": LAM},
            "grid": {"magnitudes": [0.0, 100.0], "mode": "diagonal"},
            "reps": 500,
            "seed": 2,
        },
    )
    out = tmp_path / "simulate.json.out"
    assert main(["simulate", "--config", config, "--output", str(out)]) == 0
    result = json.loads(out.read_text(encoding="utf-8"))["result"]
    assert result["profile"]["n_points"] == 5
    assert result["formula_min_coverage"] == pytest.approx(0.95, abs=1e-9)


def test_record_writes_run_ledger(ellipse_config, tmp_path):
    assert main(["ellipse", "--config", ellipse_config, "--record", "--output", str(tmp_path / "r.json")]) == 0
    runs = get_db_instance().list_runs("ellipse", limit=5)
    assert runs
    assert json.loads(runs[0].report_json)["subcommand"] == "ellipse"


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "confsets" in capsys.readouterr().out


def test_shape_command_writes_hull_boundary(tmp_path):
    config = _write_json(
        tmp_path / "shape.json",
        {
            "design": {"C": C_EXAMPLE, "n": 20},
            "tuning": {"lam": LAM},
            "mc": {"n_samples": 5000},
            "volume_draws": 5000,
            "verify_samples": 5000,
        },
    )
    out = tmp_path / "shape.json.out"
    assert main(["shape", "--config", config, "--seed", "3", "--output", str(out)]) == 0
    result = json.loads(out.read_text(encoding="utf-8"))["result"]
    assert set(result["shapes"]) == {"ls", "lasso", "hull"}
    assert len(result["centers"]) == 4
    rows = (tmp_path / "shape.json_boundary.csv").read_text(encoding="utf-8").strip().split("\n")[1:]
    assert {row.split(",")[-1] for row in rows} == {"lasso", "hull", "center"}


def test_hull_verification_uses_fresh_larger_sample():
    mc = MonteCarloConfig(n_samples=20_000, seed=3, chunk_size=4096)
    verify = verification_config(mc)
    assert verify.n_samples > REFINE_FACTOR * mc.n_samples
    assert verify.purpose != mc.purpose
    assert verification_config(mc, 5000).n_samples == 5000

    gram = GramData.from_matrix(C_EXAMPLE)
    tuning = TuningVector.finite_sample(LAM, 20)
    hull = build_hull(gram, tuning, 6.0)
    same_size = verify.model_copy(update={"n_samples": mc.n_samples})
    calibration_draws = min_coverage(hull, gram, tuning, 1.0, mc)
    verification_draws = min_coverage(hull, gram, tuning, 1.0, same_size)
    assert [e.probability for e in calibration_draws.per_d] != [e.probability for e in verification_draws.per_d]
