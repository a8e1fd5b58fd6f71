import math

import numpy as np
import pytest
from scipy import stats

from src.modules.calibrate import calibrate_ellipse
from src.modules.model import TuningVector
from src.modules.shapes import Box
from src.modules.simulate import (
    DesignFamily,
    GridSpec,
    conservative_selection_experiment,
    consistent_regime_experiment,
    coverage_profile,
    empirical_coverage,
    one_dimensional_min_coverage,
    selection_frequency,
)
from src.utils.errors import InputValidationError, WrongRegimeError

N = 20


def test_design_family_has_exact_gram():
    family = DesignFamily(np.array([[1.0, -0.5], [-0.5, 1.0]]), design_seed=4)
    X = family.design(N)
    np.testing.assert_allclose(X.T @ X / N, family.C, atol=1e-12)
    np.testing.assert_array_equal(family.design(N), X)
    assert family.template(N).sigma == 1.0


def test_grid_spec_modes():
    product = GridSpec(magnitudes=(0.0, 1.0)).build(2, 4)
    assert product.shape == (9, 2)
    assert set(np.unique(product)) == {-0.5, 0.0, 0.5}
    diagonal = GridSpec(magnitudes=(0.0, 1.0), mode="diagonal").build(2, 4)
    assert diagonal.shape == (5, 2)
    explicit = GridSpec(points=((1.0, 2.0),)).build(2, 4)
    np.testing.assert_array_equal(explicit, [[1.0, 2.0]])
    with pytest.raises(InputValidationError):
        GridSpec(points=((1.0,),)).build(2, 4)


def test_one_dimensional_closed_form():
    assert one_dimensional_min_coverage(1.96, 0.0, N) == pytest.approx(0.95, abs=1e-3)
    mu = 2.0 / math.sqrt(N)
    expected = stats.norm.cdf(1.5 - mu) - stats.norm.cdf(-1.5 - mu)
    assert one_dimensional_min_coverage(1.5, 2.0, N) == pytest.approx(expected)
    assert one_dimensional_min_coverage(1.5, 2.0, N) < one_dimensional_min_coverage(1.5, 0.0, N)
    with pytest.raises(InputValidationError):
        one_dimensional_min_coverage(0.0, 1.0, N)


def test_one_dimensional_empirical_coverage_matches_closed_form():
    family = DesignFamily(np.array([[1.0]]), design_seed=1)
    model = family.template(N)
    lam = math.sqrt(N) / 2
    tuning = TuningVector.finite_sample([lam], N)
    box = Box([-1.5], [1.5])
    far = empirical_coverage(model, [100.0 / math.sqrt(N)], tuning, box, reps=20_000, seed=5)
    expected = one_dimensional_min_coverage(1.5, lam, N)
    assert abs(far.fraction - expected) < 4 * far.std_error + 1e-3

    profile = coverage_profile(model, tuning, box, GridSpec(), reps=20_000, seed=5)
    assert profile.min_value >= expected - 4 * float(profile.std_error.max()) - 1e-3


def test_worst_case_coverage_matches_noncentral_chi2():
    family = DesignFamily(np.array([[1.0, -0.5], [-0.5, 1.0]]), design_seed=2)
    tuning = TuningVector.finite_sample([math.sqrt(N) / 2] * 2, N)
    ellipse = calibrate_ellipse(family.gram, tuning, 1.0, 0.1).shape
    beta = np.array([100.0, 100.0]) / math.sqrt(N)
    estimate = empirical_coverage(family.template(N), beta, tuning, ellipse, reps=20_000, seed=11)
    assert abs(estimate.fraction - 0.9) < 4 * estimate.std_error + 1e-3


def test_profile_is_deterministic_and_thread_independent():
    family = DesignFamily(np.array([[1.0, 0.3], [0.3, 1.0]]), design_seed=3)
    tuning = TuningVector.finite_sample([2.0, 2.0], N)
    box = Box([-2.0, -2.0], [2.0, 2.0])
    grid = GridSpec(magnitudes=(0.0, 1.0, 10.0))
    first = coverage_profile(family.template(N), tuning, box, grid, reps=3000, seed=8, threads=1)
    second = coverage_profile(family.template(N), tuning, box, grid, reps=3000, seed=8, threads=4)
    np.testing.assert_array_equal(first.coverage, second.coverage)
    assert first.to_dict() == second.to_dict()
    assert len(first.rows()) == first.beta_grid.shape[0]


def test_simulation_rejects_bad_tuning():
    family = DesignFamily(np.eye(2))
    box = Box([-1.0, -1.0], [1.0, 1.0])
    with pytest.raises(WrongRegimeError):
        empirical_coverage(family.template(N), np.zeros(2), TuningVector.conservative([1.0, 1.0]), box, 100, seed=1)
    with pytest.raises(InputValidationError):
        empirical_coverage(family.template(N), np.zeros(2), TuningVector.finite_sample([1.0, 1.0], N + 1), box, 100, seed=1)
    with pytest.raises(InputValidationError):
        empirical_coverage(family.template(N), np.zeros(2), TuningVector.finite_sample([1.0, 1.0], N), box, 100, seed=None)


def test_selection_frequency_extremes():
    family = DesignFamily(np.eye(2), design_seed=6)
    model = family.template(N)
    grid = np.array([[0.0, 0.0], [50.0, 0.0]])
    huge = selection_frequency(model, TuningVector.finite_sample([1e6, 1e6], N), grid, reps=200, seed=2)
    np.testing.assert_array_equal(huge.frequency, np.ones((2, 2)))
    none = selection_frequency(model, TuningVector.finite_sample([0.0, 0.0], N), grid, reps=200, seed=2)
    np.testing.assert_array_equal(none.frequency, np.zeros((2, 2)))
    assert none.to_dict()["sup_frequency"] == [0.0, 0.0]


def test_conservative_selection_trend():
    family = DesignFamily(np.eye(2), design_seed=6)
    rows = conservative_selection_experiment(family, [1.0, 1.0], [20, 80], np.array([[0.0, 0.0], [1.0, -1.0]]), 500, seed=3)
    assert [row.n for row in rows] == [20, 80]
    for row in rows:
        assert all(0.0 < f < 1.0 for f in row.frequency_at_zero)
        assert all(s >= z for s, z in zip(row.sup_frequency, row.frequency_at_zero))


def test_consistent_regime_experiment():
    family = DesignFamily(np.array([[1.0, -0.5], [-0.5, 1.0]]), design_seed=9)
    experiment = consistent_regime_experiment(family, 0.75, 1.5, [50, 200], reps=300, seed=4)
    assert [row.n for row in experiment.rows] == [50, 200]
    for row in experiment.rows:
        assert row.rate == pytest.approx(row.lambda_star / row.n)
        assert 0.0 <= row.worst_coverage <= row.boundary_coverage <= 1.0
    assert len(experiment.worst_trend()) == 2
    assert experiment.to_dict()["noise"] == "gaussian"

    two_point = consistent_regime_experiment(family, 0.75, 1.5, [50], reps=100, seed=4, noise="two_point")
    assert two_point.noise == "two_point"

    with pytest.raises(InputValidationError):
        consistent_regime_experiment(family, 0.5, 1.5, [50], reps=10, seed=4)
    with pytest.raises(InputValidationError):
        consistent_regime_experiment(family, 0.75, 1.5, [50], reps=10, seed=4, lambda_coefficients=[0.0, 0.0])


@pytest.mark.slow
def test_consistent_regime_trends():
    family = DesignFamily(np.array([[1.0, -0.5], [-0.5, 1.0]]), design_seed=1)
    n_list = [200, 1000, 10_000]
    wide = consistent_regime_experiment(family, 0.75, 1.5, n_list, reps=10_000, seed=6)
    worst = wide.worst_trend()
    assert all(later >= earlier - 0.005 for earlier, later in zip(worst, worst[1:]))
    assert worst[-1] >= 0.99
    narrow = consistent_regime_experiment(family, 0.75, 0.5, n_list, reps=10_000, seed=6)
    boundary = narrow.boundary_trend()
    assert all(later <= earlier + 0.005 for earlier, later in zip(boundary, boundary[1:]))
    assert boundary[-1] <= 0.10


@pytest.mark.slow
def test_two_dimensional_profile_minimum_is_target():
    family = DesignFamily(np.array([[1.0, -0.5], [-0.5, 1.0]]), design_seed=2)
    tuning = TuningVector.finite_sample([math.sqrt(N) / 2] * 2, N)
    ellipse = calibrate_ellipse(family.gram, tuning, 1.0, 0.05).shape
    grid = GridSpec(mode="diagonal")
    profile = coverage_profile(family.template(N), tuning, ellipse, grid, reps=100_000, seed=12)
    assert abs(profile.min_value - 0.95) <= 0.007

    # 最小值（在噪声范围内）出现在 ±(1,1) 方向的大幅度 β 上
    far = 100.0 / math.sqrt(N)
    for d in ([1.0, 1.0], [-1.0, -1.0]):
        index = int(np.flatnonzero(np.all(np.isclose(profile.beta_grid, far * np.array(d)), axis=1))[0])
        assert profile.coverage[index] - profile.min_value <= 4 * math.sqrt(2) * profile.std_error[index]
