"""
回归实例、调参配置与共享的线性代数原语

模型 y = Xβ + ε，ε ~ N(0, σ² I_n)，σ 已知。
所有类型构造后不可变，可在线程间共享。
"""

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
from scipy import linalg

from src.utils.config import global_config
from src.utils.errors import (
    DataFormatError,
    DimensionError,
    InputValidationError,
    SingularDesignError,
    WrongRegimeError,
)
from src.utils.logger import get_module_logger

logger = get_module_logger("模型")

SINGULAR_RATIO = 1e-12
SYMMETRY_TOL = 1e-10
IDENTITY_TOL = 1e-8


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LinearModel:
    """回归实例：设计矩阵 X (n×p)、响应 y (n)、噪声标准差 sigma"""

    X: np.ndarray
    y: np.ndarray
    sigma: float
    condition_number: float = field(init=False)
    sigma_is_estimate: bool = False

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise InputValidationError(f"X 必须是二维矩阵，实际维度 {X.ndim}")
        n, p = X.shape
        if p < 1 or n < p:
            raise InputValidationError(f"需要 n >= p >= 1，实际 n={n}, p={p}")
        if y.shape[0] != n:
            raise InputValidationError(f"y 的长度 {y.shape[0]} 与 X 的行数 {n} 不一致")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputValidationError("X 与 y 只能包含有限实数")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InputValidationError(f"sigma 必须为正数，实际 {self.sigma}")

        # 列主元 QR 判断秩
        _, R, _ = linalg.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag.size == 0 or diag[-1] <= SINGULAR_RATIO * diag[0]:
            raise SingularDesignError("设计矩阵列不满秩")
        condition = float(np.linalg.cond(X))

        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "condition_number", condition)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_response(self, y: np.ndarray) -> "LinearModel":
        return LinearModel(self.X, y, self.sigma, sigma_is_estimate=self.sigma_is_estimate)


def _inverse_root(vectors: np.ndarray, eigenvalues: np.ndarray) -> np.ndarray:
    return (vectors / np.sqrt(eigenvalues)) @ vectors.T


@dataclass(frozen=True)
class GramData:
    """C (对称正定)、C⁻¹ 以及对称逆平方根 C^{-1/2}"""

    C: np.ndarray
    C_inv: np.ndarray
    C_sqrt_inv: np.ndarray
    C_sqrt: np.ndarray
    eigenvalues: np.ndarray

    @classmethod
    def from_matrix(cls, C: np.ndarray) -> "GramData":
        """由给定矩阵构造（渐近模式下用户提供的极限矩阵 C 也走这里）"""
        C = np.atleast_2d(np.array(C, dtype=float))
        if C.shape[0] != C.shape[1]:
            raise InputValidationError(f"C 必须是方阵，实际形状 {C.shape}")
        if not np.all(np.isfinite(C)):
            raise InputValidationError("C 只能包含有限实数")
        scale = max(1.0, float(np.max(np.abs(C))))
        if np.max(np.abs(C - C.T)) > SYMMETRY_TOL * scale:
            raise InputValidationError("C 必须对称")
        C = 0.5 * (C + C.T)

        eigenvalues, vectors = linalg.eigh(C)
        if eigenvalues[0] <= 0 or eigenvalues[0] < SINGULAR_RATIO * eigenvalues[-1]:
            raise SingularDesignError(
                f"C 奇异或接近奇异: 最小特征值 {eigenvalues[0]:.3e}, 最大特征值 {eigenvalues[-1]:.3e}"
            )
        C_inv = (vectors / eigenvalues) @ vectors.T
        C_sqrt_inv = _inverse_root(vectors, eigenvalues)
        C_sqrt = (vectors * np.sqrt(eigenvalues)) @ vectors.T
        C_inv = 0.5 * (C_inv + C_inv.T)
        C_sqrt_inv = 0.5 * (C_sqrt_inv + C_sqrt_inv.T)

        identity = np.eye(C.shape[0])
        tolerance = IDENTITY_TOL * max(1.0, float(eigenvalues[-1] / eigenvalues[0]))
        if np.max(np.abs(C @ C_inv - identity)) > tolerance:
            raise SingularDesignError("C 的逆矩阵数值不稳定")
        if np.max(np.abs(C_sqrt_inv @ C @ C_sqrt_inv - identity)) > tolerance:
            raise SingularDesignError("C 的逆平方根数值不稳定")
        return cls(
            C=_frozen(C),
            C_inv=_frozen(C_inv),
            C_sqrt_inv=_frozen(C_sqrt_inv),
            C_sqrt=_frozen(C_sqrt),
            eigenvalues=_frozen(eigenvalues),
        )

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def condition_number(self) -> float:
        return float(self.eigenvalues[-1] / self.eigenvalues[0])

    def to_dict(self) -> dict:
        # json 对 float 使用 repr，保留完整双精度
        return {
            "C": self.C.tolist(),
            "C_inv": self.C_inv.tolist(),
            "C_sqrt_inv": self.C_sqrt_inv.tolist(),
            "condition_number": self.condition_number,
        }


# ---------------------------------------------------------------------------
# 调参机制
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteSample:
    """有限样本：λ 即 λ_n，均值为 -n^{-1/2} C⁻¹ Λ_n d"""

    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise InputValidationError(f"样本量 n 必须为正整数，实际 {self.n}")

    label = "finite_sample"


@dataclass(frozen=True)
class ConservativeLimit:
    """保守调参极限：λ 即 lim λ_n / √n，均值为 +C⁻¹ Λ d"""

    label = "conservative"


@dataclass(frozen=True)
class ConsistentLimit:
    """一致调参极限：λ*_n = max_j λ_{n,j}，λ_0 = λ_n / λ*_n"""

    lambda_star: float
    lambda0: tuple
    exponent: Optional[float] = None

    label = "consistent"


Regime = Union[FiniteSample, ConservativeLimit, ConsistentLimit]


@dataclass(frozen=True)
class TuningVector:
    lam: np.ndarray
    regime: Regime

    def __post_init__(self):
        lam = np.atleast_1d(np.array(self.lam, dtype=float))
        if lam.ndim != 1:
            raise InputValidationError("λ 必须是一维向量")
        if np.any(np.isnan(lam)) or np.any(lam < 0):
            raise InputValidationError(f"所有 λ_j 必须非负: {lam.tolist()}")
        if isinstance(self.regime, ConsistentLimit):
            lambda0 = np.array(self.regime.lambda0, dtype=float)
            if lambda0.shape != lam.shape:
                raise InputValidationError("λ_0 与 λ 的维度不一致")
            if np.any(lambda0 < 0) or np.any(lambda0 > 1) or abs(lambda0.max() - 1.0) > 1e-12:
                raise InputValidationError(f"λ_0 必须位于 [0,1]^p 且最大分量为 1: {lambda0.tolist()}")
            if not self.regime.lambda_star > 0:
                raise InputValidationError("λ* 必须为正")
        object.__setattr__(self, "lam", _frozen(lam))

    @property
    def p(self) -> int:
        return self.lam.shape[0]

    @classmethod
    def finite_sample(cls, lam, n: int) -> "TuningVector":
        return cls(np.asarray(lam, dtype=float), FiniteSample(int(n)))

    @classmethod
    def conservative(cls, lam) -> "TuningVector":
        return cls(np.asarray(lam, dtype=float), ConservativeLimit())

    @classmethod
    def consistent(cls, lam_n, exponent: Optional[float] = None) -> "TuningVector":
        """由某个 n 下的 λ_n 构造一致调参描述，λ_0 = λ_n / max λ_n"""
        lam_n = np.asarray(lam_n, dtype=float)
        lambda_star = float(np.max(lam_n)) if lam_n.size else 0.0
        if lambda_star <= 0:
            raise InputValidationError("一致调参需要至少一个正的 λ_j")
        lambda0 = tuple(float(v) for v in lam_n / lambda_star)
        return cls(lam_n, ConsistentLimit(lambda_star, lambda0, exponent))

    def penalty_scale(self) -> np.ndarray:
        """均值公式里的 Λ 对角元：有限样本为 n^{-1/2} λ_n，保守极限为 λ"""
        if isinstance(self.regime, FiniteSample):
            return self.lam / math.sqrt(self.regime.n)
        if isinstance(self.regime, ConservativeLimit):
            return self.lam
        raise WrongRegimeError("一致调参机制下没有高斯极限分布")


@dataclass(frozen=True)
class SignVector:
    d: tuple

    def __post_init__(self):
        values = tuple(int(v) for v in np.atleast_1d(self.d))
        if not values or any(v not in (1, -1) for v in values) or any(
            float(raw) not in (1.0, -1.0) for raw in np.atleast_1d(self.d)
        ):
            raise InputValidationError(f"符号向量的每个分量必须恰好为 +1 或 -1: {self.d}")
        object.__setattr__(self, "d", values)

    @property
    def p(self) -> int:
        return len(self.d)

    def as_array(self) -> np.ndarray:
        return np.array(self.d, dtype=float)

    def __neg__(self) -> "SignVector":
        return SignVector(tuple(-v for v in self.d))

    def __str__(self) -> str:
        return "(" + ",".join("+1" if v > 0 else "-1" for v in self.d) + ")"


def check_enumerable(p: int, limit: Optional[int] = None) -> None:
    limit = limit or global_config.max_dim
    if p > limit:
        raise DimensionError(f"p={p} 超过可枚举上限 {limit}（需要遍历全部 2^p 个符号向量）")


def all_sign_vectors(p: int) -> list[SignVector]:
    """按字典序（+1 < -1）枚举 {-1,1}^p"""
    check_enumerable(p)
    return [SignVector(combo) for combo in itertools.product((1, -1), repeat=p)]


def sign_matrix(p: int) -> np.ndarray:
    """全部符号向量按行堆叠，顺序同 all_sign_vectors"""
    check_enumerable(p)
    return np.array(list(itertools.product((1.0, -1.0), repeat=p)))


@dataclass(frozen=True)
class ExtendedVector:
    """扩展实数向量：有限分量或只携带符号的 ±∞"""

    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_1d(np.array(self.values, dtype=float))
        if np.any(np.isnan(values)):
            raise InputValidationError("扩展实数向量不允许 NaN")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @classmethod
    def parse(cls, items) -> "ExtendedVector":
        """接受数字或 "+inf"/"-inf"/"inf" 字符串"""
        parsed = []
        for item in items:
            if isinstance(item, str):
                text = item.strip().lower()
                if text in ("inf", "+inf", "infinity", "+infinity"):
                    parsed.append(math.inf)
                elif text in ("-inf", "-infinity"):
                    parsed.append(-math.inf)
                else:
                    parsed.append(float(text))
            else:
                parsed.append(float(item))
        return cls(np.array(parsed))

    def to_list(self) -> list:
        return [v if math.isfinite(v) else ("+inf" if v > 0 else "-inf") for v in self.values.tolist()]


# ---------------------------------------------------------------------------
# 操作
# ---------------------------------------------------------------------------


def gram_from_design(model: LinearModel) -> GramData:
    """C_n = X'X / n"""
    gram = GramData.from_matrix(model.X.T @ model.X / model.n)
    logger.debug(f"Gram 矩阵条件数 {gram.condition_number:.3e} (n={model.n}, p={model.p})")
    return gram


def shifted_mean(gram: GramData, tuning: TuningVector, d: SignVector) -> np.ndarray:
    """
    û^d 的均值。

    有限样本为 -n^{-1/2} C⁻¹ Λ_n d，保守极限为 +C⁻¹ Λ d。
    两种符号约定下均值集合相同（d 与 -d 互换），取最小值时无区别。
    """
    if d.p != gram.p or tuning.p != gram.p:
        raise InputValidationError("维度不一致")
    scaled = tuning.penalty_scale() * d.as_array()
    mean = gram.C_inv @ scaled
    if isinstance(tuning.regime, FiniteSample):
        return -mean
    return mean


def shifted_means(gram: GramData, tuning: TuningVector, signs: Optional[np.ndarray] = None) -> np.ndarray:
    """全部符号向量对应的均值，按行排列"""
    signs = sign_matrix(gram.p) if signs is None else signs
    means = (signs * tuning.penalty_scale()) @ gram.C_inv
    return -means if isinstance(tuning.regime, FiniteSample) else means


def mean_convention(tuning: TuningVector) -> str:
    if isinstance(tuning.regime, FiniteSample):
        return "finite_sample: mean = -n^(-1/2) C^-1 Lambda d"
    if isinstance(tuning.regime, ConservativeLimit):
        return "conservative: mean = +C^-1 Lambda d"
    raise WrongRegimeError("一致调参机制下没有高斯极限分布")


def estimate_sigma(model: LinearModel) -> LinearModel:
    """用最小二乘残差估计 σ̂² = RSS / (n - p)，返回标记为近似的模型"""
    if model.n <= model.p:
        raise InputValidationError("估计 σ 需要 n > p")
    beta, *_ = linalg.lstsq(model.X, model.y)
    residual = model.y - model.X @ beta
    sigma_hat = math.sqrt(float(residual @ residual) / (model.n - model.p))
    logger.warning(f"使用估计的 σ̂ = {sigma_hat:.6g}，结果仅为近似")
    return LinearModel(model.X, model.y, sigma_hat, sigma_is_estimate=True)


def design_with_gram(n: int, C: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """生成 n×p 设计矩阵，使 X'X/n 恰好等于 C（高斯行经白化后再着色）"""
    gram = GramData.from_matrix(C)
    if n < gram.p:
        raise InputValidationError("n 必须不小于 p")
    Z = rng.standard_normal((int(n), gram.p))
    empirical = GramData.from_matrix(Z.T @ Z / n)
    return Z @ empirical.C_sqrt_inv @ gram.C_sqrt


# ---------------------------------------------------------------------------
# CSV 读取
# ---------------------------------------------------------------------------


def _iter_csv_rows(path: Path) -> Iterator[tuple[int, list[float]]]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for line_number, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                yield line_number, [float(cell) for cell in row]
            except ValueError as e:
                raise DataFormatError(f"无法解析为实数: {e}", line=line_number, path=str(path)) from e


def load_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    """读取无表头 CSV 矩阵（逗号分隔，'.' 小数点）"""
    path = Path(path)
    if not path.exists():
        raise DataFormatError("文件不存在", path=str(path))
    rows = []
    width = None
    for line_number, values in _iter_csv_rows(path):
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DataFormatError(
                f"列数 {len(values)} 与首行列数 {width} 不一致", line=line_number, path=str(path)
            )
        rows.append(values)
    if not rows:
        raise DataFormatError("文件为空", path=str(path))
    return np.array(rows, dtype=float)


def load_vector_csv(path: Union[str, Path]) -> np.ndarray:
    """读取向量：单列或单行均可"""
    matrix = load_matrix_csv(path)
    if matrix.shape[1] == 1 or matrix.shape[0] == 1:
        return matrix.reshape(-1)
    raise DataFormatError(f"期望向量，实际得到 {matrix.shape[0]}×{matrix.shape[1]} 矩阵", path=str(path))
