import numpy as np
import pytest
from scipy import stats

from src.modules.coverage import MonteCarloConfig
from src.modules.shapes import Ellipse, build_hull
from src.tools.boundary import BOUNDARY_HEADER, CENTER_ID, boundary_rows
from src.tools.worked_example import example_model, example_tuning, main, run_worked_example
from src.utils.errors import DimensionError

C_EXAMPLE = np.array([[1.0, -0.5], [-0.5, 1.0]])


def test_boundary_rows_are_closed_polylines(example_gram, example_tuning):
    hull = build_hull(example_gram, example_tuning, 2.0)
    rows = boundary_rows([("ellipse", Ellipse(C_EXAMPLE, 2.0)), ("hull", hull)], n_points=64)
    ellipse_rows = [r for r in rows if r[-1] == "ellipse"]
    assert ellipse_rows[0][:2] == pytest.approx(ellipse_rows[-1][:2])
    centers = [r for r in rows if r[-1] == CENTER_ID]
    assert len(centers) == 4
    assert rows[-1][-1] == CENTER_ID
    assert BOUNDARY_HEADER == ["x", "y", "shape_id"]


def test_boundary_rows_reject_higher_dimensions():
    with pytest.raises(DimensionError):
        boundary_rows([("e3", Ellipse(np.eye(3), 1.0))])


def test_example_model_is_reproducible():
    a, b = example_model(seed=7), example_model(seed=7)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_allclose(a.X.T @ a.X / 20, C_EXAMPLE, atol=1e-12)
    assert example_tuning().lam == pytest.approx([np.sqrt(20) / 2] * 2)


def test_worked_example_without_hull():
    example = run_worked_example(seed=7, with_hull=False)
    assert example.hull is None
    assert example.comparison.k_ls == pytest.approx(5.991464547107979)
    assert example.comparison.k_lasso == pytest.approx(stats.ncx2.ppf(0.95, 2, 1.0), rel=1e-8)
    text = example.boundary_csv(64)
    assert text.startswith("x,y,shape_id\n")
    assert {line.split(",")[-1] for line in text.strip().split("\n")[1:]} == {"ls", "lasso"}


@pytest.mark.slow
def test_worked_example_with_hull():
    example = run_worked_example(seed=7, mc_config=MonteCarloConfig(n_samples=20_000, seed=7))
    assert example.hull is not None
    assert example.hull.k_star <= example.comparison.k_ls * (1 + 1e-9)
    ids = {line.split(",")[-1] for line in example.boundary_csv(64).strip().split("\n")[1:]}
    assert ids == {"ls", "lasso", "hull", CENTER_ID}


def test_worked_example_main(tmp_path):
    assert main(["--seed", "7", "--output-dir", str(tmp_path), "--no-hull"]) == 0
    assert (tmp_path / "shapes_boundary.csv").exists()
    assert (tmp_path / "parameter_space_boundary.csv").read_text(encoding="utf-8").startswith("x,y,shape_id\n")
