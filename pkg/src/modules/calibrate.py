"""
形状参数标定：使最小覆盖概率恰为 1 − α
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, stats

from src.modules.coverage import (
    MonteCarloConfig,
    TIE_RTOL,
    ellipse_mass_exact,
    noncentralities,
    std_error_of,
    worst_case_d,
)
from src.modules.lasso import LassoSolution, solve_lasso, solve_ls
from src.modules.model import (
    GramData,
    LinearModel,
    SignVector,
    TuningVector,
    gram_from_design,
    shifted_means,
    sign_matrix,
)
from src.modules.shapes import (
    ConfidenceShape,
    Ellipse,
    EllipseContainment,
    HullOfShiftedEllipses,
    Parallelogram,
    build_hull,
    ellipse_in_ellipse,
)
from src.utils.config import global_config
from src.utils.errors import CalibrationBudgetError, InputValidationError
from src.utils.logger import get_module_logger
from src.utils.parallel import map_chunks
from src.utils.rng import chunk_sizes, substream

logger = get_module_logger("标定")

CALIBRATION_TOL = 1e-9
# 凸包标定第二轮的样本量倍数
REFINE_FACTOR = 10


@dataclass
class CalibrationResult:
    shape: ConfidenceShape
    k_star: float
    target: float
    achieved: float
    std_error: float
    iterations: int
    history: list[tuple[float, float]] = field(default_factory=list)
    worst_case: list[SignVector] = field(default_factory=list)
    noncentrality: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "k_star": self.k_star,
            "target": self.target,
            "achieved": self.achieved,
            "std_error": self.std_error,
            "iterations": self.iterations,
            "history": [[k, c] for k, c in sorted(self.history)],
            "worst_case_d": [list(d.d) for d in self.worst_case],
            "noncentrality": self.noncentrality,
            "shape": self.shape.to_dict(),
        }


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InputValidationError(f"alpha 必须位于 (0, 1)，实际 {alpha}")
    return alpha


def calibrate_ls_ellipse(p: int, sigma: float, alpha: float) -> float:
    """最小二乘椭圆：k = σ² χ²_p 的 1 − α 分位数"""
    alpha = _check_alpha(alpha)
    if not sigma > 0:
        raise InputValidationError(f"sigma 必须为正数，实际 {sigma}")
    return float(stats.chi2.ppf(1.0 - alpha, p)) * sigma**2


def calibrate_ellipse(gram: GramData, tuning: TuningVector, sigma: float, alpha: float) -> CalibrationResult:
    """
    以最坏符号向量 d* 的非中心参数 δ* 求解 F_{δ*}(k) = 1 − α。

    所有并列的最坏 d 具有相同的 δ，因此给出相同的 k*。
    """
    alpha = _check_alpha(alpha)
    target = 1.0 - alpha
    p = gram.p
    worst = worst_case_d(gram, tuning)
    signs = np.array([d.as_array() for d in worst])
    deltas = noncentralities(gram, tuning, sigma, signs)
    delta = float(deltas[0])
    assert np.all(np.abs(deltas - delta) <= TIE_RTOL * max(1.0, abs(delta))), "并列最坏符号向量的非中心参数不一致"

    history: list[tuple[float, float]] = []

    def gap(k: float) -> float:
        value = ellipse_mass_exact(k, delta, p, sigma)
        history.append((k, value))
        return value - target

    lower = calibrate_ls_ellipse(p, sigma, alpha)
    if delta == 0.0:
        k_star, iterations = lower, 0
        history.append((k_star, ellipse_mass_exact(k_star, 0.0, p, sigma)))
    else:
        upper = lower + 4.0 * sigma**2 * (delta + p)
        while gap(upper) < 0:
            upper *= 2.0
        while gap(lower) > 0:
            lower *= 0.5
        k_star, info = optimize.brentq(gap, lower, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500, full_output=True)
        iterations = int(info.iterations)

    achieved = ellipse_mass_exact(k_star, delta, p, sigma)
    if abs(achieved - target) > CALIBRATION_TOL:
        raise AssertionError(f"椭圆标定精度不足: F(k*) = {achieved!r}")
    logger.info(f"椭圆标定完成: δ* = {delta:.6g}, k* = {k_star:.10g}")
    return CalibrationResult(
        shape=Ellipse(gram.C, k_star),
        k_star=float(k_star),
        target=target,
        achieved=achieved,
        std_error=0.0,
        iterations=iterations,
        history=history,
        worst_case=worst,
        noncentrality=delta,
    )


# ---------------------------------------------------------------------------
# 凸包形状的蒙特卡洛标定
# ---------------------------------------------------------------------------


class _HullCoverageSample:
    """
    固定一批公共随机数后，每个样本点对每个 d 的临界尺度 κ。

    P̂(û^d ∈ hull(k)) = #{κ_d ≤ √k} / N，因此覆盖概率关于 k 单调，
    且对任意 k 的求值只需一次二分查找。
    """

    def __init__(self, hull: HullOfShiftedEllipses, gram: GramData, means: np.ndarray, sigma: float, mc: MonteCarloConfig):
        seed = mc.required_seed()
        factor = sigma * gram.C_sqrt_inv

        def scales(index: int, size: int) -> np.ndarray:
            xi = substream(seed, mc.purpose, index).standard_normal((size, gram.p))
            W = xi @ factor
            return np.stack([hull.critical_scale(W + mean) for mean in means])

        blocks = map_chunks(scales, chunk_sizes(mc.n_samples, mc.chunk_size), mc.threads)
        self.sorted_scales = np.sort(np.concatenate(blocks, axis=1), axis=1)
        self.n_samples = mc.n_samples

    def coverage(self, k: float) -> float:
        hits = [np.searchsorted(row, math.sqrt(k), side="right") for row in self.sorted_scales]
        return min(hits) / self.n_samples


def _bisect_hull(
    sample: _HullCoverageSample,
    target: float,
    lower: float,
    upper: float,
    tol: float,
    history: list[tuple[float, float]],
) -> tuple[float, float, int]:
    def evaluate(k: float) -> float:
        value = sample.coverage(k)
        history.append((k, value))
        return value

    low_value, high_value = evaluate(lower), evaluate(upper)
    while low_value >= target:
        lower *= 0.5
        low_value = evaluate(lower)
    while high_value < target:
        upper *= 2.0
        high_value = evaluate(upper)

    for iteration in range(1, global_config.max_bisections + 1):
        noise = 2.0 * std_error_of(high_value, sample.n_samples)
        if high_value - low_value < max(tol, noise):
            return upper, high_value, iteration
        middle = 0.5 * (lower + upper)
        value = evaluate(middle)
        if value >= target:
            upper, high_value = middle, value
        else:
            lower, low_value = middle, value
    raise CalibrationBudgetError(
        f"{global_config.max_bisections} 次二分后覆盖概率差 {high_value - low_value:.4g} 仍未小于容差，"
        f"请增大 n_samples（当前 {sample.n_samples}）"
    )


def calibrate_hull(
    gram: GramData,
    tuning: TuningVector,
    sigma: float,
    alpha: float,
    mc_config: Optional[MonteCarloConfig] = None,
    tol: Optional[float] = None,
) -> CalibrationResult:
    """
    从最小二乘的 k 出发，在公共随机数上对凸包的最小覆盖概率二分 k；
    收敛后以 REFINE_FACTOR 倍样本量重新抽样并再二分一次。
    """
    alpha = _check_alpha(alpha)
    target = 1.0 - alpha
    tol = global_config.coverage_tol if tol is None else tol
    mc_config = mc_config or MonteCarloConfig(n_samples=global_config.hull_mc_samples)
    k0 = calibrate_ls_ellipse(gram.p, sigma, alpha)
    hull = build_hull(gram, tuning, k0)
    signs = sign_matrix(gram.p)
    means = shifted_means(gram, tuning, signs)
    if hull.is_centrally_symmetric:
        means = means[: signs.shape[0] // 2]

    history: list[tuple[float, float]] = []
    logger.info(f"凸包标定开始: k0 = {k0:.6g}, 样本量 {mc_config.n_samples}")
    coarse = _HullCoverageSample(hull, gram, means, sigma, mc_config)
    upper, _, coarse_iterations = _bisect_hull(coarse, target, 0.5 * k0, k0, tol, history)
    lower = max(upper * 0.9, 1e-12)

    refined_config = mc_config.scaled(REFINE_FACTOR)
    refined = _HullCoverageSample(hull, gram, means, sigma, refined_config)
    k_star, achieved, fine_iterations = _bisect_hull(refined, target, lower, upper, tol, history)
    std_error = std_error_of(achieved, refined.n_samples)
    logger.info(f"凸包标定完成: k† = {k_star:.6g}, 覆盖概率 {achieved:.5f} ± {std_error:.5f}")
    return CalibrationResult(
        shape=hull.with_k(k_star),
        k_star=float(k_star),
        target=target,
        achieved=float(achieved),
        std_error=std_error,
        iterations=coarse_iterations + fine_iterations,
        history=history,
    )


# ---------------------------------------------------------------------------
# 一致调参的平行四边形
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsistentSet:
    """β̂_L − d (λ*_n / n) 𝓜，parallelogram 已含缩放 d λ*_n / n"""

    parallelogram: Parallelogram
    unscaled: Parallelogram
    rate: float
    d_scale: float
    n: int

    def vertices(self) -> np.ndarray:
        return self.parallelogram.vertices()

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "d_scale": self.d_scale,
            "n": self.n,
            "scale": self.parallelogram.scale,
            "vertices": self.parallelogram.vertices().tolist(),
            "unscaled_vertices": self.unscaled.vertices().tolist(),
            "shape": self.parallelogram.to_dict(),
        }


def consistent_set(gram_limit: GramData, lambda0: np.ndarray, lambda_star_n: float, n: int, d_scale: float) -> ConsistentSet:
    lambda0 = np.asarray(lambda0, dtype=float).reshape(-1)
    if lambda0.shape[0] != gram_limit.p:
        raise InputValidationError("λ_0 的维度与 C 不一致")
    if abs(float(lambda0.max()) - 1.0) > 1e-12:
        raise InputValidationError(f"λ_0 的最大分量必须为 1: {lambda0.tolist()}")
    if not d_scale > 0 or not lambda_star_n > 0 or int(n) < 1:
        raise InputValidationError("d_scale、λ*_n 与 n 必须为正")
    if d_scale == 1.0:
        logger.warning("d_scale = 1 为边界情形，极限覆盖概率没有结论")
    rate = float(lambda_star_n) / int(n)
    unscaled = Parallelogram(gram_limit.C, lambda0, 1.0)
    return ConsistentSet(
        parallelogram=unscaled.with_scale(d_scale * rate),
        unscaled=unscaled,
        rate=rate,
        d_scale=float(d_scale),
        n=int(n),
    )


# ---------------------------------------------------------------------------
# 最小二乘与 Lasso 置信椭圆的比较
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LsComparison:
    """参数空间中的两个置信椭圆 {β : n (β̂ − β)' C (β̂ − β) ≤ k}"""

    k_ls: float
    k_lasso: float
    beta_ls: np.ndarray
    lasso: LassoSolution
    ls_ellipse: Ellipse
    lasso_ellipse: Ellipse
    containment: EllipseContainment
    lasso_calibration: CalibrationResult

    @property
    def ls_contained(self) -> bool:
        return self.containment.contained

    def to_dict(self) -> dict:
        return {
            "k_ls": self.k_ls,
            "k_lasso": self.k_lasso,
            "beta_ls": self.beta_ls.tolist(),
            "beta_lasso": self.lasso.beta_hat.tolist(),
            "volume_ls": self.ls_ellipse.volume(),
            "volume_lasso": self.lasso_ellipse.volume(),
            "ls_contained_in_lasso": self.ls_contained,
            "worst_boundary_point": self.containment.worst_point.tolist(),
            "worst_ratio": self.containment.worst_ratio,
        }


def compare_with_ls(model: LinearModel, tuning: TuningVector, alpha: float) -> LsComparison:
    gram = gram_from_design(model)
    calibration = calibrate_ellipse(gram, tuning, model.sigma, alpha)
    k_ls = calibrate_ls_ellipse(model.p, model.sigma, alpha)
    beta_ls = solve_ls(model)
    lasso = solve_lasso(model, tuning)
    ls_ellipse = Ellipse(model.n * gram.C, k_ls, beta_ls)
    lasso_ellipse = Ellipse(model.n * gram.C, calibration.k_star, lasso.beta_hat)
    containment = ellipse_in_ellipse(ls_ellipse, lasso_ellipse)
    logger.info(
        f"k*_LS = {k_ls:.6g}, k*_Lasso = {calibration.k_star:.6g}, "
        f"LS 椭圆{'被' if containment.contained else '不被'} Lasso 椭圆包含"
    )
    return LsComparison(
        k_ls=k_ls,
        k_lasso=calibration.k_star,
        beta_ls=beta_ls,
        lasso=lasso,
        ls_ellipse=ls_ellipse,
        lasso_ellipse=lasso_ellipse,
        containment=containment,
        lasso_calibration=calibration,
    )
