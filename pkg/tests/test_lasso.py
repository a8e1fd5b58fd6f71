import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.modules.lasso import (
    GAP_SLACK,
    coordinate_descent,
    kkt_violation,
    lasso_objective,
    ls_lasso_gap,
    solve_lasso,
    solve_lasso_batch,
    solve_ls,
)
from src.modules.model import LinearModel, TuningVector
from src.utils.errors import InputValidationError, SolverConvergenceError, WrongRegimeError


def _random_model(rng, n=30, p=3):
    X = rng.standard_normal((n, p))
    y = X @ rng.normal(0, 2, p) + rng.standard_normal(n)
    return LinearModel(X, y, 1.0)


def test_one_dimensional_closed_form():
    X = np.array([[1.0], [2.0], [2.0]])
    y = np.array([3.0, 1.0, 4.0])
    model = LinearModel(X, y, 1.0)
    b = float(X[:, 0] @ y)
    g = float(X[:, 0] @ X[:, 0])
    for lam in (0.0, 1.0, 5.0, b - 1e-3, b, 2 * b):
        sol = solve_lasso(model, TuningVector.finite_sample([lam], 3))
        expected = np.sign(b) * max(abs(b) - lam, 0.0) / g
        assert sol.beta_hat[0] == pytest.approx(expected, abs=1e-9)


def test_zero_penalty_matches_least_squares(rng):
    model = _random_model(rng)
    sol = solve_lasso(model, TuningVector.finite_sample(np.zeros(3), model.n))
    np.testing.assert_allclose(sol.beta_hat, solve_ls(model), atol=1e-8)
    assert sol.active_set.all()


def test_huge_penalty_gives_exact_zeros(rng):
    model = _random_model(rng)
    sol = solve_lasso(model, TuningVector.finite_sample(np.full(3, 1e6), model.n))
    assert np.all(sol.beta_hat == 0.0)
    assert not sol.active_set.any()


def test_penalising_one_coordinate_only(rng):
    model = _random_model(rng)
    sol = solve_lasso(model, TuningVector.finite_sample([0.0, 0.0, 1e6], model.n))
    assert sol.beta_hat[2] == 0.0
    refit = solve_ls(LinearModel(model.X[:, :2], model.y, 1.0))
    np.testing.assert_allclose(sol.beta_hat[:2], refit, atol=1e-7)


def test_kkt_conditions_hold(rng):
    model = _random_model(rng, n=40, p=4)
    lam = np.array([1.0, 5.0, 10.0, 30.0])
    sol = solve_lasso(model, TuningVector.finite_sample(lam, model.n))
    c = model.X.T @ (model.y - model.X @ sol.beta_hat)
    for j in range(4):
        if sol.beta_hat[j] != 0.0:
            assert c[j] == pytest.approx(lam[j] * np.sign(sol.beta_hat[j]), abs=1e-6)
        else:
            assert abs(c[j]) <= lam[j] + 1e-6
    assert sol.kkt_gap.max() <= 1e-6


def test_objective_not_worse_than_perturbations(rng):
    model = _random_model(rng)
    lam = np.array([3.0, 3.0, 3.0])
    sol = solve_lasso(model, TuningVector.finite_sample(lam, model.n))
    best = lasso_objective(model, lam, sol.beta_hat)
    for _ in range(50):
        trial = sol.beta_hat + rng.normal(0, 0.05, 3)
        assert lasso_objective(model, lam, trial) >= best - 1e-9


def test_ls_lasso_gap_bound_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        p = int(rng.integers(1, 5))
        n = int(rng.integers(p + 1, 25))
        model = _random_model(rng, n=n, p=p)
        lam = rng.uniform(0, 20, p)
        tuning = TuningVector.finite_sample(lam, n)
        gap = ls_lasso_gap(model, tuning, solve_lasso(model, tuning))
        assert np.all(gap <= lam + GAP_SLACK)


def test_batch_matches_single_solves(rng):
    model = _random_model(rng)
    lam = np.array([2.0, 4.0, 8.0])
    G = model.X.T @ model.X
    ys = [model.y + rng.standard_normal(model.n) for _ in range(5)]
    B = np.array([model.X.T @ y for y in ys])
    batch = solve_lasso_batch(G, B, lam)
    assert batch.converged.all()
    for row, y in zip(batch.U, ys):
        single = solve_lasso(model.with_response(y), TuningVector.finite_sample(lam, model.n))
        np.testing.assert_allclose(row, single.beta_hat, atol=1e-7)


@given(st.floats(min_value=-1e6, max_value=1e6), st.floats(min_value=0.0, max_value=10.0))
def test_shifted_penalty_one_dimensional(t, lam):
    # min g u² − 2bu + 2λ(|t + u| − |t|)，解析解为 s = t + u 的软阈值
    g, b = 2.0, 3.0
    result = coordinate_descent(np.array([[g]]), np.array([[b]]), np.array([lam]), t=np.array([t]), tol=1e-12)
    x = g * t + b
    s = np.sign(x) * max(abs(x) - lam, 0.0) / g
    assert result.converged[0]
    assert result.U[0, 0] + t == pytest.approx(s, abs=1e-9 * max(1.0, abs(t)))


def test_infinite_shift_is_linear_penalty():
    G = np.array([[2.0, 0.5], [0.5, 1.0]])
    B = np.array([[1.0, -1.0]])
    lam = np.array([0.3, 0.7])
    t = np.array([np.inf, -np.inf])
    result = coordinate_descent(G, B, lam, t=t, tol=1e-12)
    # 驻点条件 G u = B − λ sgn(t)
    expected = np.linalg.solve(G, (B[0] - lam * np.sign(t)))
    np.testing.assert_allclose(result.U[0], expected, atol=1e-10)
    assert kkt_violation(G, B, result.U, lam, t).max() <= 1e-10


def test_solver_reports_non_convergence(rng):
    X = rng.standard_normal((30, 3))
    X[:, 2] = X[:, 1] + 1e-4 * rng.standard_normal(30)
    model = LinearModel(X, rng.standard_normal(30), 1.0)
    with pytest.raises(SolverConvergenceError) as info:
        solve_lasso(model, TuningVector.finite_sample([0.5, 0.5, 0.5], 30), max_iter=1)
    assert info.value.iterations == 1


def test_wrong_regime_and_dimension(rng):
    model = _random_model(rng)
    with pytest.raises(WrongRegimeError):
        solve_lasso(model, TuningVector.conservative([1.0, 1.0, 1.0]))
    with pytest.raises(InputValidationError):
        solve_lasso(model, TuningVector.finite_sample([1.0, 1.0], model.n))


@pytest.mark.parametrize("seed", range(8))
def test_sign_flip_equivariance(seed):
    rng = np.random.default_rng(seed)
    model = _random_model(rng, n=40, p=3)
    tuning = TuningVector.finite_sample(rng.uniform(0.0, 20.0, 3), model.n)
    D = np.diag(rng.choice([-1.0, 1.0], 3))
    flipped = solve_lasso(LinearModel(model.X @ D, model.y, 1.0), tuning)
    original = solve_lasso(model, tuning)
    np.testing.assert_allclose(flipped.beta_hat, D @ original.beta_hat, atol=1e-7)
    np.testing.assert_array_equal(flipped.active_set, original.active_set)


@given(st.floats(min_value=0.1, max_value=10.0), st.integers(0, 1000))
def test_joint_scaling_of_response_and_penalty(c, seed):
    rng = np.random.default_rng(seed)
    model = _random_model(rng, n=30, p=2)
    lam = rng.uniform(0.0, 15.0, 2)
    base = solve_lasso(model, TuningVector.finite_sample(lam, model.n))
    scaled = solve_lasso(model.with_response(c * model.y), TuningVector.finite_sample(c * lam, model.n))
    np.testing.assert_allclose(scaled.beta_hat, c * base.beta_hat, atol=1e-6 * c, rtol=1e-6)
