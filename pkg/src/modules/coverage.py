"""
最小覆盖概率

inf_β P_β(β ∈ β̂_L − n^{-1/2} M) = min_d P(û^d ∈ M)，
其中 û^d ~ N(μ_d, σ² C⁻¹)。椭圆形状走非中心 χ² 精确公式，其余形状走蒙特卡洛。
"""

import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import special, stats

from src.modules.model import (
    GramData,
    SignVector,
    TuningVector,
    mean_convention,
    shifted_means,
    sign_matrix,
)
from src.modules.shapes import ConfidenceShape, Ellipse
from src.utils.config import global_config
from src.utils.errors import DomainError, InputValidationError
from src.utils.logger import get_module_logger
from src.utils.parallel import map_chunks
from src.utils.rng import PURPOSE_COVERAGE, chunk_sizes, require_seed, substream

logger = get_module_logger("覆盖概率")

POISSON_TAIL = 1e-12
# 非中心参数（或覆盖概率）在该相对差以内视为并列
TIE_RTOL = 1e-12
EXACT_SHAPE_RTOL = 1e-12


class MonteCarloConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_samples: int = Field(default_factory=lambda: global_config.mc_samples, ge=1000)
    seed: Optional[int] = None
    chunk_size: int = Field(default_factory=lambda: global_config.mc_chunk_size, ge=1)
    threads: Optional[int] = None
    # 复核标定结果时换用独立子流
    purpose: str = PURPOSE_COVERAGE

    def required_seed(self) -> int:
        return require_seed(self.seed)

    def scaled(self, factor: int) -> "MonteCarloConfig":
        return self.model_copy(update={"n_samples": self.n_samples * factor})


class SignCoverage(BaseModel):
    d: list[int]
    probability: float
    std_error: float
    method: Literal["exact", "mc"]


class CoverageReport(BaseModel):
    per_d: list[SignCoverage]
    min_coverage: float
    argmin_d: list[list[int]]
    convention: str
    seed: Optional[int] = None
    n_samples: Optional[int] = None

    @field_validator("per_d")
    @classmethod
    def _probabilities_in_range(cls, value: list[SignCoverage]) -> list[SignCoverage]:
        for entry in value:
            if not 0.0 <= entry.probability <= 1.0:
                raise ValueError(f"概率越界: {entry.probability}")
        return value

    def probability_of(self, d: SignVector) -> float:
        for entry in self.per_d:
            if tuple(entry.d) == d.d:
                return entry.probability
        raise KeyError(str(d))

    def argmin_signs(self) -> list[SignVector]:
        return [SignVector(tuple(d)) for d in self.argmin_d]


def ellipse_mass_exact(k: float, noncentrality: float, p: int, sigma: float = 1.0) -> float:
    """
    P(‖Z + μ‖² ≤ k)，Z ~ N(0, σ² I_p)，δ = ‖μ‖²/σ²。

    非中心 χ² 分布函数按 Poisson 混合展开：
    Σ_i e^{-δ/2} (δ/2)^i / i! · P(p/2 + i, x/2)，x = k/σ²，
    在 Poisson 尾概率 < 1e-12 处截断。
    """
    if k < 0 or noncentrality < 0 or sigma <= 0:
        raise DomainError(f"参数越界: k={k}, δ={noncentrality}, σ={sigma}")
    if p < 1:
        raise DomainError(f"维度必须为正: p={p}")
    if k == 0:
        return 0.0
    x = k / sigma**2
    if noncentrality == 0:
        return float(special.gammainc(p / 2, x / 2))
    half = noncentrality / 2
    upper = int(stats.poisson.isf(POISSON_TAIL, half)) + 1
    lower = max(0, int(stats.poisson.ppf(POISSON_TAIL, half)) - 1)
    terms = np.arange(lower, upper + 1)
    weights = stats.poisson.pmf(terms, half)
    value = float(np.sum(weights * special.gammainc(p / 2 + terms, x / 2)))
    return min(1.0, max(0.0, value))


def noncentralities(gram: GramData, tuning: TuningVector, sigma: float, signs: Optional[np.ndarray] = None) -> np.ndarray:
    """
    每个符号向量的 δ_d = μ_d' C μ_d / σ² = (Λd)' C⁻¹ (Λd) / σ²。

    d 与 −d 的结果逐位相同。
    """
    if not sigma > 0:
        raise InputValidationError(f"sigma 必须为正数，实际 {sigma}")
    signs = sign_matrix(gram.p) if signs is None else signs
    scaled = signs * tuning.penalty_scale()
    return np.einsum("ij,jk,ik->i", scaled, gram.C_inv, scaled) / sigma**2


def _tied_maxima(values: np.ndarray) -> np.ndarray:
    top = float(np.max(values))
    return np.flatnonzero(values >= top - TIE_RTOL * abs(top))


def _tied_minima(values: np.ndarray) -> np.ndarray:
    low = float(np.min(values))
    return np.flatnonzero(values <= low + TIE_RTOL * abs(low))


def worst_case_d(gram: GramData, tuning: TuningVector) -> list[SignVector]:
    """‖C^{-1/2} Λ d‖ 的全部最大点（保留并列，字典序）"""
    signs = sign_matrix(gram.p)
    delta = noncentralities(gram, tuning, 1.0, signs)
    return [SignVector(tuple(signs[i])) for i in _tied_maxima(delta)]


def gaussian_mass_mc(
    shape: ConfidenceShape,
    mean: np.ndarray,
    gram: GramData,
    sigma: float,
    n_samples: int,
    seed: int,
    chunk_size: Optional[int] = None,
    threads: Optional[int] = None,
) -> tuple[float, float]:
    """N(mean, σ² C⁻¹) 落入形状的概率与二项标准误"""
    probabilities, std_errors = _mc_masses(
        shape,
        np.atleast_2d(np.asarray(mean, dtype=float)),
        gram,
        sigma,
        MonteCarloConfig(n_samples=n_samples, seed=seed, chunk_size=chunk_size or global_config.mc_chunk_size, threads=threads),
    )
    return float(probabilities[0]), float(std_errors[0])


def _mc_masses(
    shape: ConfidenceShape, means: np.ndarray, gram: GramData, sigma: float, mc: MonteCarloConfig
) -> tuple[np.ndarray, np.ndarray]:
    """
    所有均值共用同一批 ξ（公共随机数）：Z = μ + σ ξ C^{-1/2}。
    每块使用独立的 Philox 子流，结果与线程数无关。
    """
    seed = mc.required_seed()
    factor = sigma * gram.C_sqrt_inv

    def count(index: int, size: int) -> np.ndarray:
        xi = substream(seed, mc.purpose, index).standard_normal((size, gram.p))
        W = xi @ factor
        return np.array([np.count_nonzero(shape.contains_many(W + mean)) for mean in means], dtype=np.int64)

    counts = np.sum(map_chunks(count, chunk_sizes(mc.n_samples, mc.chunk_size), mc.threads), axis=0)
    probabilities = counts / mc.n_samples
    std_errors = np.sqrt(probabilities * (1 - probabilities) / mc.n_samples)
    return probabilities, std_errors


def exact_ellipse_parameter(shape: ConfidenceShape, gram: GramData) -> Optional[float]:
    """
    形状是以原点为中心、矩阵与 C 成比例的椭圆时，返回等价的 E_C(k) 的 k；否则 None。
    """
    if not isinstance(shape, Ellipse) or not shape.is_centered or shape.p != gram.p:
        return None
    ratio = float(np.trace(shape.C_shape) / np.trace(gram.C))
    if np.max(np.abs(shape.C_shape - ratio * gram.C)) > EXACT_SHAPE_RTOL * np.max(np.abs(shape.C_shape)):
        return None
    return shape.k / ratio


def _representatives(count: int, symmetric: bool) -> np.ndarray:
    # sign_matrix 中第 i 行与第 count−1−i 行互为相反数
    return np.arange(count // 2) if symmetric else np.arange(count)


def min_coverage(
    shape: ConfidenceShape,
    gram: GramData,
    tuning: TuningVector,
    sigma: float,
    mc_config: Optional[MonteCarloConfig] = None,
) -> CoverageReport:
    """遍历全部 2^p 个符号向量，计算 P(û^d ∈ M) 与其最小值"""
    if shape.p != gram.p or tuning.p != gram.p:
        raise InputValidationError("形状、Gram 矩阵与 λ 的维度不一致")
    convention = mean_convention(tuning)
    signs = sign_matrix(gram.p)
    count = signs.shape[0]
    k_equivalent = exact_ellipse_parameter(shape, gram)

    if k_equivalent is not None:
        delta = noncentralities(gram, tuning, sigma, signs)
        probabilities = np.array([ellipse_mass_exact(k_equivalent, float(v), gram.p, sigma) for v in delta])
        std_errors = np.zeros(count)
        method = "exact"
        seed = n_samples = None
    else:
        mc_config = mc_config or MonteCarloConfig()
        means = shifted_means(gram, tuning, signs)
        symmetric = shape.is_centrally_symmetric
        chosen = _representatives(count, symmetric)
        logger.info(f"蒙特卡洛覆盖概率: {len(chosen)} 个均值, {mc_config.n_samples} 次抽样")
        values, errors = _mc_masses(shape, means[chosen], gram, sigma, mc_config)
        probabilities = np.empty(count)
        std_errors = np.empty(count)
        probabilities[chosen] = values
        std_errors[chosen] = errors
        if symmetric:
            probabilities[count - 1 - chosen] = values
            std_errors[count - 1 - chosen] = errors
        method = "mc"
        seed, n_samples = mc_config.seed, mc_config.n_samples

    argmin = _tied_minima(probabilities)
    per_d = [
        SignCoverage(d=[int(v) for v in signs[i]], probability=float(probabilities[i]), std_error=float(std_errors[i]), method=method)
        for i in range(count)
    ]
    report = CoverageReport(
        per_d=per_d,
        min_coverage=float(probabilities.min()),
        argmin_d=[[int(v) for v in signs[i]] for i in argmin],
        convention=convention,
        seed=seed,
        n_samples=n_samples,
    )
    logger.debug(f"最小覆盖概率 {report.min_coverage:.6f}，最小点 {report.argmin_d}")
    return report


def std_error_of(probability: float, n_samples: int) -> float:
    return math.sqrt(max(probability * (1 - probability), 0.0) / n_samples)
