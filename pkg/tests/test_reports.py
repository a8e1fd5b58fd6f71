import json

import numpy as np
import pytest

from src.modules.reports import (
    CoverageConfig,
    DesignSpec,
    EllipseConfig,
    RunReport,
    SimulateConfig,
    build_shape,
    load_config,
    make_report,
    render_csv,
    render_json,
    to_builtin,
)
from src.modules.shapes import Ellipse
from src.utils.errors import InputValidationError

ELLIPSE_CONFIG = {
    "design": {"C": [[1.0, -0.5], [-0.5, 1.0]], "n": 20},
    "tuning": {"lam": [2.23606797749979, 2.23606797749979]},
    "alpha": 0.05,
}


def test_render_json_is_stable_and_valid():
    config = EllipseConfig.model_validate(ELLIPSE_CONFIG)
    report = make_report("ellipse", config, {"k": np.float64(7.1), "d": np.array([1, -1]), "ok": np.bool_(True)})
    text = render_json(report)
    assert text == render_json(report)
    assert text.endswith("\n")
    data = json.loads(text)
    assert data["schema"] == "confsets/v1"
    assert data["subcommand"] == "ellipse"
    assert data["result"] == {"k": 7.1, "d": [1, -1], "ok": True}
    assert RunReport.model_validate(data).config["alpha"] == 0.05


def test_render_json_rejects_nan():
    config = EllipseConfig.model_validate(ELLIPSE_CONFIG)
    with pytest.raises(ValueError):
        render_json(make_report("ellipse", config, {"k": float("nan")}))


def test_to_builtin_nested():
    value = to_builtin({"a": (np.int64(3), [np.float32(0.5)]), 1: np.zeros(2)})
    assert value == {"a": [3, [0.5]], "1": [0.0, 0.0]}


def test_render_csv_format():
    text = render_csv(["id", "x", "v"], [["a", 0.1, [1.0, -1.0]], ["b", float("inf"), 2]])
    assert text == "id,x,v\na,0.1,1.0 -1.0\nb,inf,2\n"


def test_design_spec_requires_one_source():
    with pytest.raises(ValueError):
        DesignSpec(C=[[1.0]], X_csv="X.csv", n=3)
    with pytest.raises(ValueError):
        DesignSpec(C=[[1.0]])
    with pytest.raises(ValueError):
        DesignSpec()
    spec = DesignSpec(C=[[2.0]], n=5)
    assert spec.sample_size() == 5
    assert spec.gram().C[0, 0] == 2.0
    model = spec.model(1.0)
    np.testing.assert_allclose(model.X.T @ model.X / 5, [[2.0]])


def test_build_shape_fills_design_matrix(example_gram):
    shape = build_shape({"tag": "ellipse", "k": 3.0}, example_gram)
    assert isinstance(shape, Ellipse)
    np.testing.assert_array_equal(shape.C_shape, example_gram.C)


def test_extra_fields_are_rejected():
    with pytest.raises(ValueError):
        EllipseConfig.model_validate({**ELLIPSE_CONFIG, "colour": "red"})


def test_two_point_noise_only_for_consistent_experiment():
    base = {"design": {"C": [[1.0]], "n": 10}, "tuning": {"lam": [1.0]}, "noise": "two_point"}
    with pytest.raises(ValueError):
        SimulateConfig.model_validate(base)
    SimulateConfig.model_validate({**base, "experiment": "consistent", "lambda_exponent": 0.75, "n_list": [10]})


def test_load_config(tmp_path):
    path = tmp_path / "coverage.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(InputValidationError):
        load_config(path, CoverageConfig)

    path.write_text(
        json.dumps({"design": ELLIPSE_CONFIG["design"], "tuning": ELLIPSE_CONFIG["tuning"], "shape": {"tag": "box", "lower": [-1, -1], "upper": [1, 1]}, "seed": 3}),
        encoding="utf-8",
    )
    config = load_config(path, CoverageConfig)
    assert config.seed == 3
    with pytest.raises(InputValidationError):
        load_config(tmp_path / "missing.json", CoverageConfig)
