"""
经验覆盖概率的模拟验证

每块重复抽取一次噪声 ε，计算 X'ε 后在所有网格点上复用（公共随机数）：
X'y = X'X β + X'ε。Lasso 用批量坐标下降在同一 Gram 矩阵上求解。
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from scipy.stats import norm

from src.modules.calibrate import consistent_set
from src.modules.lasso import solve_lasso_batch
from src.modules.model import (
    FiniteSample,
    GramData,
    LinearModel,
    TuningVector,
    design_with_gram,
    sign_matrix,
)
from src.modules.shapes import ConfidenceShape
from src.utils.config import global_config
from src.utils.errors import InputValidationError, SolverConvergenceError, WrongRegimeError
from src.utils.logger import get_module_logger
from src.utils.parallel import map_chunks
from src.utils.rng import PURPOSE_DESIGN, PURPOSE_NOISE, chunk_sizes, require_seed, substream

logger = get_module_logger("模拟")

NoiseKind = Literal["gaussian", "two_point"]
DEFAULT_MAGNITUDES = (0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0)

# tally(beta_hat (reps×p), beta (p)) -> 计数向量
Tally = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DesignFamily:
    """极限 Gram 矩阵 C 固定的一族设计：X'X/n = C 对每个 n 精确成立"""

    C: np.ndarray
    sigma: float = 1.0
    design_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "C", GramData.from_matrix(self.C).C)
        if not self.sigma > 0:
            raise InputValidationError("sigma 必须为正数")
        require_seed(self.design_seed)

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def gram(self) -> GramData:
        return GramData.from_matrix(self.C)

    def design(self, n: int) -> np.ndarray:
        return design_with_gram(n, self.C, substream(self.design_seed, PURPOSE_DESIGN, int(n)))

    def template(self, n: int) -> LinearModel:
        """响应为零的模型模板，只用到 X 与 σ"""
        return LinearModel(self.design(n), np.zeros(int(n)), self.sigma)


def _chunk_reps(n: int) -> int:
    return max(1, min(global_config.mc_chunk_size, global_config.max_chunk_elements // max(1, n)))


def _simulate(
    model: LinearModel,
    lam: np.ndarray,
    betas: np.ndarray,
    tally: Tally,
    width: int,
    reps: int,
    seed: int,
    noise: NoiseKind = "gaussian",
    threads: Optional[int] = None,
) -> tuple[np.ndarray, int]:
    """对每个网格点累计 tally，返回 (计数 G×width, 未收敛次数)"""
    seed = require_seed(seed)
    if reps < 1:
        raise InputValidationError("reps 必须为正整数")
    X = model.X
    G = X.T @ X
    signal = betas @ G

    def run(index: int, size: int) -> tuple[np.ndarray, int]:
        rng = substream(seed, PURPOSE_NOISE, index)
        if noise == "gaussian":
            eps = rng.standard_normal((size, model.n))
        else:
            eps = rng.choice(np.array([-1.0, 1.0]), size=(size, model.n))
        Xte = model.sigma * (eps @ X)
        counts = np.zeros((betas.shape[0], width), dtype=np.int64)
        failures = 0
        for g, beta in enumerate(betas):
            result = solve_lasso_batch(G, signal[g] + Xte, lam)
            failures += int(np.count_nonzero(~result.converged))
            counts[g] = tally(result.U, beta)
        return counts, failures

    outputs = map_chunks(run, chunk_sizes(reps, _chunk_reps(model.n)), threads)
    counts = np.sum([c for c, _ in outputs], axis=0)
    failures = sum(f for _, f in outputs)
    if failures:
        raise SolverConvergenceError(f"模拟中有 {failures} 次 Lasso 求解未收敛", iterations=0, max_violation=float("nan"))
    return counts, failures


def _shape_tally(shape: ConfidenceShape, factor: float) -> Tally:
    def tally(beta_hat: np.ndarray, beta: np.ndarray) -> np.ndarray:
        return np.array([np.count_nonzero(shape.contains_many(factor * (beta_hat - beta)))])

    return tally


def _finite_sample_lam(model: LinearModel, tuning: TuningVector) -> np.ndarray:
    if not isinstance(tuning.regime, FiniteSample):
        raise WrongRegimeError("模拟只接受有限样本调参（λ 即 λ_n）")
    if tuning.regime.n != model.n:
        raise InputValidationError(f"调参的 n={tuning.regime.n} 与设计的 n={model.n} 不一致")
    if tuning.p != model.p:
        raise InputValidationError("λ 的维度与 p 不一致")
    return tuning.lam


@dataclass(frozen=True)
class CoverageEstimate:
    fraction: float
    std_error: float
    reps: int

    def to_dict(self) -> dict:
        return {"coverage": self.fraction, "std_error": self.std_error, "reps": self.reps}


def _estimate(hits: int, reps: int) -> CoverageEstimate:
    fraction = hits / reps
    return CoverageEstimate(fraction, math.sqrt(fraction * (1 - fraction) / reps), reps)


def empirical_coverage(
    model: LinearModel,
    beta: np.ndarray,
    tuning: TuningVector,
    shape: ConfidenceShape,
    reps: int,
    seed: int,
    threads: Optional[int] = None,
) -> CoverageEstimate:
    """事件 √n (β̂_L − β) ∈ shape 的频率"""
    lam = _finite_sample_lam(model, tuning)
    beta = np.asarray(beta, dtype=float).reshape(1, -1)
    counts, _ = _simulate(model, lam, beta, _shape_tally(shape, math.sqrt(model.n)), 1, reps, seed, threads=threads)
    return _estimate(int(counts[0, 0]), reps)


# ---------------------------------------------------------------------------
# 覆盖概率剖面
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """
    β 网格：显式点，或按幅度 m/√n 生成。

    mode="product" 时每个坐标独立取 {0} ∪ {±m/√n}；
    mode="diagonal" 时取 (m/√n)·d，d 遍历全部符号向量。
    """

    magnitudes: tuple = DEFAULT_MAGNITUDES
    mode: Literal["product", "diagonal"] = "product"
    points: Optional[tuple] = None

    def build(self, p: int, n: int) -> np.ndarray:
        if self.points is not None:
            grid = np.atleast_2d(np.asarray(self.points, dtype=float))
            if grid.shape[1] != p:
                raise InputValidationError("显式网格点的维度与 p 不一致")
            return grid
        scaled = np.asarray(self.magnitudes, dtype=float) / math.sqrt(n)
        if self.mode == "diagonal":
            grid = (scaled[:, None, None] * sign_matrix(p)[None, :, :]).reshape(-1, p)
        else:
            values = np.unique(np.concatenate([scaled, -scaled]))
            grid = np.array(list(itertools.product(values, repeat=p)))
        grid = grid + 0.0  # 统一 -0.0
        _, first = np.unique(grid, axis=0, return_index=True)
        return grid[np.sort(first)]


@dataclass(frozen=True)
class CoverageProfile:
    beta_grid: np.ndarray
    coverage: np.ndarray
    std_error: np.ndarray
    reps: int
    seed: int
    min_index: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "min_index", int(np.argmin(self.coverage)))

    @property
    def min_value(self) -> float:
        return float(self.coverage[self.min_index])

    @property
    def min_point(self) -> np.ndarray:
        return self.beta_grid[self.min_index]

    def rows(self) -> list[list[float]]:
        return [
            [*beta.tolist(), float(c), float(s)]
            for beta, c, s in zip(self.beta_grid, self.coverage, self.std_error)
        ]

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "n_points": int(self.beta_grid.shape[0]),
            "grid_max_abs": float(np.max(np.abs(self.beta_grid))),
            "min_point": self.min_point.tolist(),
            "min_value": self.min_value,
            "min_std_error": float(self.std_error[self.min_index]),
        }


def coverage_profile(
    model: LinearModel,
    tuning: TuningVector,
    shape: ConfidenceShape,
    grid_spec: Optional[GridSpec],
    reps: int,
    seed: int,
    threads: Optional[int] = None,
) -> CoverageProfile:
    """在 β 网格上估计覆盖概率，所有网格点共用同一批噪声"""
    lam = _finite_sample_lam(model, tuning)
    grid = (grid_spec or GridSpec()).build(model.p, model.n)
    logger.info(f"覆盖概率剖面: {grid.shape[0]} 个网格点 × {reps} 次重复")
    counts, _ = _simulate(model, lam, grid, _shape_tally(shape, math.sqrt(model.n)), 1, reps, seed, threads=threads)
    coverage = counts[:, 0] / reps
    std_error = np.sqrt(coverage * (1 - coverage) / reps)
    profile = CoverageProfile(grid, coverage, std_error, int(reps), int(seed))
    logger.info(f"剖面最小值 {profile.min_value:.4f}，位于 β = {profile.min_point.tolist()}")
    return profile


def one_dimensional_min_coverage(a: float, lam: float, n: int, C: float = 1.0, sigma: float = 1.0) -> float:
    """
    p=1、区间 [−a, a] 的最小覆盖概率闭式解：
    min_d Φ((a − μ_d)/ξ) − Φ((−a − μ_d)/ξ)，μ_d = d λ / (C √n)，ξ = σ / √C。
    """
    if not (a > 0 and lam >= 0 and n >= 1 and C > 0 and sigma > 0):
        raise InputValidationError("一维闭式解的参数越界")
    xi = sigma / math.sqrt(C)
    values = []
    for d in (1.0, -1.0):
        mu = d * lam / (C * math.sqrt(n))
        values.append(float(norm.cdf((a - mu) / xi) - norm.cdf((-a - mu) / xi)))
    return min(values)


# ---------------------------------------------------------------------------
# 一致调参实验
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsistentRow:
    n: int
    lambda_star: float
    rate: float
    worst_coverage: float
    worst_std_error: float
    worst_beta: list
    boundary_coverage: float
    boundary_std_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ConsistentExperiment:
    lambda_exponent: float
    d_scale: float
    noise: str
    rows: list[ConsistentRow]

    def worst_trend(self) -> list[float]:
        return [row.worst_coverage for row in self.rows]

    def boundary_trend(self) -> list[float]:
        return [row.boundary_coverage for row in self.rows]

    def to_dict(self) -> dict:
        return {
            "lambda_exponent": self.lambda_exponent,
            "d_scale": self.d_scale,
            "noise": self.noise,
            "rows": [row.to_dict() for row in self.rows],
        }


def consistent_regime_experiment(
    design_family: DesignFamily,
    lambda_exponent: float,
    d_scale: float,
    n_list: Sequence[int],
    reps: int,
    seed: int,
    lambda_coefficients: Optional[Sequence[float]] = None,
    scales: Sequence[float] = (0.0, 1.0, 10.0, 100.0),
    noise: NoiseKind = "gaussian",
    threads: Optional[int] = None,
) -> ConsistentExperiment:
    """
    λ_{n,j} = c_j n^e，e ∈ (1/2, 1)。对每个 n 估计 β̂_L − d_scale (λ*_n/n) 𝓜 的覆盖概率。

    网格包含边界靶点 β_n = −(λ*_n/n) C⁻¹ Λ_0 d（全部 d）以及 s (λ*_n/n) d。
    """
    if not 0.5 < lambda_exponent < 1.0:
        raise InputValidationError(f"一致调参的指数必须位于 (0.5, 1)，实际 {lambda_exponent}")
    coefficients = np.ones(design_family.p) if lambda_coefficients is None else np.asarray(lambda_coefficients, dtype=float)
    if coefficients.shape[0] != design_family.p or np.any(coefficients < 0) or coefficients.max() <= 0:
        raise InputValidationError("λ 系数必须非负、至少一个为正且维度为 p")
    gram = design_family.gram
    signs = sign_matrix(design_family.p)
    rows = []
    for n in n_list:
        lam = coefficients * float(n) ** lambda_exponent
        lambda_star = float(lam.max())
        lambda0 = lam / lambda_star
        confidence = consistent_set(gram, lambda0, lambda_star, int(n), d_scale)
        rate = confidence.rate
        boundary = -rate * (signs * lambda0) @ gram.C_inv
        diagonal = (np.asarray(scales, dtype=float)[:, None, None] * rate * signs[None, :, :]).reshape(-1, design_family.p)
        grid = np.vstack([boundary, diagonal])
        model = design_family.template(int(n))
        counts, _ = _simulate(
            model, lam, grid, _shape_tally(confidence.parallelogram, 1.0), 1, reps, seed, noise=noise, threads=threads
        )
        coverage = counts[:, 0] / reps
        std_error = np.sqrt(coverage * (1 - coverage) / reps)
        worst = int(np.argmin(coverage))
        boundary_worst = int(np.argmin(coverage[: boundary.shape[0]]))
        rows.append(
            ConsistentRow(
                n=int(n),
                lambda_star=lambda_star,
                rate=rate,
                worst_coverage=float(coverage[worst]),
                worst_std_error=float(std_error[worst]),
                worst_beta=grid[worst].tolist(),
                boundary_coverage=float(coverage[boundary_worst]),
                boundary_std_error=float(std_error[boundary_worst]),
            )
        )
        logger.info(f"n={n}: 最差覆盖 {coverage[worst]:.4f}，边界靶点覆盖 {coverage[boundary_worst]:.4f}")
    return ConsistentExperiment(float(lambda_exponent), float(d_scale), noise, rows)


# ---------------------------------------------------------------------------
# 变量选择频率
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionFrequency:
    beta_grid: np.ndarray
    frequency: np.ndarray
    reps: int

    @property
    def sup_frequency(self) -> np.ndarray:
        return self.frequency.max(axis=0)

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "beta_grid": self.beta_grid.tolist(),
            "frequency": self.frequency.tolist(),
            "sup_frequency": self.sup_frequency.tolist(),
        }


def _zero_tally(beta_hat: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return np.count_nonzero(beta_hat == 0.0, axis=0)


def selection_frequency(
    model: LinearModel,
    tuning: TuningVector,
    beta_grid: np.ndarray,
    reps: int,
    seed: int,
    threads: Optional[int] = None,
) -> SelectionFrequency:
    """每个 (β, j) 上事件 {β̂_{L,j} = 0} 的频率"""
    lam = _finite_sample_lam(model, tuning)
    grid = np.atleast_2d(np.asarray(beta_grid, dtype=float))
    counts, _ = _simulate(model, lam, grid, _zero_tally, model.p, reps, seed, threads=threads)
    return SelectionFrequency(grid, counts / reps, int(reps))


@dataclass(frozen=True)
class SelectionTrendRow:
    n: int
    sup_frequency: list
    frequency_at_zero: list


def conservative_selection_experiment(
    design_family: DesignFamily,
    lam_limit: Sequence[float],
    n_list: Sequence[int],
    local_grid: np.ndarray,
    reps: int,
    seed: int,
    threads: Optional[int] = None,
) -> list[SelectionTrendRow]:
    """
    保守调参 λ_n = λ √n 下随 n 变化的零选择频率。

    local_grid 的点以 √n 缩放：β = b / √n。
    """
    lam_limit = np.asarray(lam_limit, dtype=float)
    local_grid = np.atleast_2d(np.asarray(local_grid, dtype=float))
    zero_rows = np.flatnonzero(np.all(local_grid == 0.0, axis=1))
    rows = []
    for n in n_list:
        model = design_family.template(int(n))
        tuning = TuningVector.finite_sample(lam_limit * math.sqrt(n), int(n))
        result = selection_frequency(model, tuning, local_grid / math.sqrt(n), reps, seed, threads)
        at_zero = result.frequency[zero_rows[0]].tolist() if zero_rows.size else []
        rows.append(SelectionTrendRow(int(n), result.sup_frequency.tolist(), at_zero))
        logger.info(f"n={n}: sup_β P(β̂_j = 0) = {result.sup_frequency.tolist()}")
    return rows
