"""
置信集形状、象限锥 A^d_C̄(m)、形状条件检验与闭包算子

所有形状不可变，成员判定是纯函数；抽样函数按调用显式接收种子。
成员判定使用弱不等式，边界点属于集合（为浮点舍入保留 1e-12 的相对余量）。
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm, qmc

from src.modules.model import (
    GramData,
    SignVector,
    TuningVector,
    all_sign_vectors,
    check_enumerable,
    sign_matrix,
    shifted_means,
)
from src.utils.config import global_config
from src.utils.errors import DimensionError, EmptyShapeError, InputValidationError
from src.utils.logger import get_module_logger
from src.utils.parallel import map_chunks
from src.utils.rng import PURPOSE_CONE, PURPOSE_SHAPE, PURPOSE_VOLUME, chunk_sizes, substream

logger = get_module_logger("形状")

MEMBERSHIP_RTOL = 1e-12
# 单次向量化判定的元素上限，控制内存
_BLOCK_ELEMENTS = 2_000_000


def _as_points(Z: np.ndarray, p: int) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1) if p > 1 or Z.shape[0] == 1 else Z.reshape(-1, 1)
    if Z.shape[1] != p:
        raise InputValidationError(f"点的维度 {Z.shape[1]} 与形状维度 {p} 不一致")
    return Z


def _blocks(n_rows: int, width: int):
    step = max(1, _BLOCK_ELEMENTS // max(1, width))
    for start in range(0, n_rows, step):
        yield slice(start, min(n_rows, start + step))


class ConfidenceShape(ABC):
    """置信集形状 M 的公共接口：置信集为 β̂_L − n^{-1/2} M"""

    tag: str = "shape"

    @property
    @abstractmethod
    def p(self) -> int: ...

    @abstractmethod
    def contains_many(self, Z: np.ndarray) -> np.ndarray:
        """逐行判定成员关系，返回布尔数组"""

    @abstractmethod
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]: ...

    @abstractmethod
    def to_dict(self) -> dict: ...

    @property
    def is_centrally_symmetric(self) -> bool:
        return False

    def contains(self, z: np.ndarray) -> bool:
        return bool(self.contains_many(np.asarray(z, dtype=float).reshape(1, -1))[0])

    def clip_box(self, factor: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
        """以包围盒中心为中心、放大 factor 倍的盒子"""
        lower, upper = self.bounding_box()
        center = 0.5 * (lower + upper)
        half = 0.5 * (upper - lower)
        return center - factor * half, center + factor * half


@dataclass(frozen=True)
class Ellipse(ConfidenceShape):
    """(z − center)' C_shape (z − center) ≤ k"""

    C_shape: np.ndarray
    k: float
    center: Optional[np.ndarray] = None

    tag = "ellipse"

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C_shape, dtype=float))
        if C.shape[0] != C.shape[1] or np.linalg.eigvalsh(0.5 * (C + C.T))[0] <= 0:
            raise InputValidationError("椭圆形状矩阵必须对称正定")
        if not self.k > 0:
            raise InputValidationError(f"椭圆参数 k 必须为正，实际 {self.k}")
        center = np.zeros(C.shape[0]) if self.center is None else np.asarray(self.center, dtype=float).reshape(-1)
        object.__setattr__(self, "C_shape", 0.5 * (C + C.T))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "k", float(self.k))

    @property
    def p(self) -> int:
        return self.C_shape.shape[0]

    @property
    def is_centered(self) -> bool:
        return bool(np.all(self.center == 0.0))

    @property
    def is_centrally_symmetric(self) -> bool:
        return self.is_centered

    def quadratic_form(self, Z: np.ndarray) -> np.ndarray:
        diff = _as_points(Z, self.p) - self.center
        return np.einsum("ij,jk,ik->i", diff, self.C_shape, diff)

    def contains_many(self, Z: np.ndarray) -> np.ndarray:
        return self.quadratic_form(Z) <= self.k * (1.0 + MEMBERSHIP_RTOL)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        half = np.sqrt(self.k * np.diag(np.linalg.inv(self.C_shape)))
        return self.center - half, self.center + half

    def with_k(self, k: float) -> "Ellipse":
        return Ellipse(self.C_shape, k, self.center)

    def volume(self) -> float:
        """解析体积 π^{p/2} k^{p/2} / (Γ(p/2+1) √det C)"""
        p = self.p
        return float(
            math.pi ** (p / 2) * self.k ** (p / 2) / math.gamma(p / 2 + 1) / math.sqrt(np.linalg.det(self.C_shape))
        )

    def to_dict(self) -> dict:
        return {"tag": self.tag, "C_shape": self.C_shape.tolist(), "k": self.k, "center": self.center.tolist()}


@dataclass(frozen=True)
class Box(ConfidenceShape):
    """轴对齐盒子 lower ≤ z ≤ upper（p=1 时即区间）"""

    lower: np.ndarray
    upper: np.ndarray

    tag = "box"

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or np.any(lower > upper):
            raise InputValidationError("盒子的下界必须不大于上界且维度一致")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def p(self) -> int:
        return self.lower.shape[0]

    @property
    def is_centrally_symmetric(self) -> bool:
        return bool(np.all(self.lower == -self.upper))

    def contains_many(self, Z: np.ndarray) -> np.ndarray:
        Z = _as_points(Z, self.p)
        return np.all((Z >= self.lower) & (Z <= self.upper), axis=1)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower.copy(), self.upper.copy()

    def to_dict(self) -> dict:
        return {"tag": self.tag, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class Parallelogram(ConfidenceShape):
    """|(C_shape z)_j| ≤ scale · λ_{0,j}，即集合 𝓜 的缩放"""

    C_shape: np.ndarray
    bounds: np.ndarray
    scale: float = 1.0

    tag = "parallelogram"

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C_shape, dtype=float))
        bounds = np.atleast_1d(np.asarray(self.bounds, dtype=float))
        if bounds.shape[0] != C.shape[0]:
            raise InputValidationError("λ_0 的维度与 C 不一致")
        if np.any(bounds < 0) or np.any(bounds > 1):
            raise InputValidationError(f"λ_0 必须位于 [0,1]^p: {bounds.tolist()}")
        if not self.scale > 0:
            raise InputValidationError("scale 必须为正")
        object.__setattr__(self, "C_shape", C)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def p(self) -> int:
        return self.C_shape.shape[0]

    @property
    def is_centrally_symmetric(self) -> bool:
        return True

    def contains_many(self, Z: np.ndarray) -> np.ndarray:
        Z = _as_points(Z, self.p)
        limit = self.scale * self.bounds
        return np.all(np.abs(Z @ self.C_shape.T) <= limit * (1.0 + MEMBERSHIP_RTOL) + 1e-300, axis=1)

    def vertices(self) -> np.ndarray:
        return parallelogram_vertices(self)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        vertices = self.vertices()
        return vertices.min(axis=0), vertices.max(axis=0)

    def with_scale(self, scale: float) -> "Parallelogram":
        return Parallelogram(self.C_shape, self.bounds, scale)

    def to_dict(self) -> dict:
        return {"tag": self.tag, "C_shape": self.C_shape.tolist(), "bounds": self.bounds.tolist(), "scale": self.scale}


def direction_grid(p: int, n_2d: Optional[int] = None, n_nd: Optional[int] = None) -> np.ndarray:
    """
    支撑函数检验用的单位方向。

    p=2 为均匀角度网格（默认 720 个），p≥3 为加扰 Halton 点经正态变换后归一化（默认 10⁴ 个）；
    坐标轴 ±e_j 总是包含在内，使包围盒精确。
    """
    axes = np.vstack([np.eye(p), -np.eye(p)])
    if p == 1:
        return axes
    if p == 2:
        count = n_2d or global_config.hull_directions_2d
        angles = 2.0 * math.pi * np.arange(count) / count
        grid = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        count = n_nd or global_config.hull_directions_nd
        sampler = qmc.Halton(d=p, scramble=True, seed=0)
        uniform = np.clip(sampler.random(count), 1e-12, 1 - 1e-12)
        gaussian = norm.ppf(uniform)
        grid = gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)
    return np.vstack([grid, axes])


@dataclass(frozen=True)
class HullOfShiftedEllipses(ConfidenceShape):
    """
    平移椭圆 base + s 的凸包。

    z 属于凸包当且仅当对每个网格方向 v：
    v'z ≤ max_s v's + √(k v'C⁻¹v) + tol。
    方向离散化使判定偏宽：距边界 tol 以内的外点可能被判为成员。
    """

    base: Ellipse
    shifts: np.ndarray
    directions: Optional[np.ndarray] = None
    tol: Optional[float] = None
    _shift_support: np.ndarray = field(init=False, repr=False, compare=False)
    _radius: np.ndarray = field(init=False, repr=False, compare=False)

    tag = "hull"

    def __post_init__(self):
        if not self.base.is_centered:
            raise InputValidationError("凸包的基础椭圆必须以原点为中心")
        shifts = np.atleast_2d(np.asarray(self.shifts, dtype=float))
        if shifts.shape[1] != self.base.p:
            raise InputValidationError("平移向量维度与椭圆不一致")
        directions = direction_grid(self.base.p) if self.directions is None else np.asarray(self.directions, dtype=float)
        C_inv = np.linalg.inv(self.base.C_shape)
        shift_support = np.max(directions @ shifts.T, axis=1)
        radius = np.sqrt(np.einsum("ij,jk,ik->i", directions, C_inv, directions))
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "_shift_support", shift_support)
        object.__setattr__(self, "_radius", radius)
        if self.tol is None:
            lower, upper = self._exact_box()
            object.__setattr__(self, "tol", 1e-6 * float(np.linalg.norm(upper - lower)))

    @property
    def p(self) -> int:
        return self.base.p

    @property
    def k(self) -> float:
        return self.base.k

    @property
    def is_centrally_symmetric(self) -> bool:
        # 平移向量成 ± 对出现
        keys = {tuple(np.round(s, 12)) for s in self.shifts}
        return all(tuple(np.round(-s, 12)) in keys for s in self.shifts)

    def support(self, V: np.ndarray) -> np.ndarray:
        """支撑函数 h(v) = max_s v's + √(k v'C⁻¹v)"""
        V = np.atleast_2d(V)
        C_inv = np.linalg.inv(self.base.C_shape)
        return np.max(V @ self.shifts.T, axis=1) + np.sqrt(self.k * np.einsum("ij,jk,ik->i", V, C_inv, V))

    def _exact_box(self) -> tuple[np.ndarray, np.ndarray]:
        eye = np.eye(self.p)
        return -self.support(-eye), self.support(eye)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self._exact_box()

    def contains_many(self, Z: np.ndarray) -> np.ndarray:
        Z = _as_points(Z, self.p)
        limit = self._shift_support + math.sqrt(self.k) * self._radius + self.tol
        inside = np.empty(Z.shape[0], dtype=bool)
        for block in _blocks(Z.shape[0], self.directions.shape[0]):
            inside[block] = np.all(Z[block] @ self.directions.T <= limit, axis=1)
        return inside

    def critical_scale(self, Z: np.ndarray) -> np.ndarray:
        """
        每个点成为成员所需的最小 √k。

        z ∈ hull(k) ⇔ critical_scale(z) ≤ √k（与 contains_many 使用同一容差）。
        """
        Z = _as_points(Z, self.p)
        result = np.empty(Z.shape[0])
        for block in _blocks(Z.shape[0], self.directions.shape[0]):
            excess = (Z[block] @ self.directions.T - self._shift_support - self.tol) / self._radius
            result[block] = np.maximum(np.max(excess, axis=1), 0.0)
        return result

    def with_k(self, k: float) -> "HullOfShiftedEllipses":
        return HullOfShiftedEllipses(self.base.with_k(k), self.shifts, self.directions, self.tol)

    def centers(self) -> np.ndarray:
        return self.shifts.copy()

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "C_shape": self.base.C_shape.tolist(),
            "k": self.k,
            "shifts": self.shifts.tolist(),
            "n_directions": int(self.directions.shape[0]),
            "tol": self.tol,
        }


def hull_membership(shape: HullOfShiftedEllipses, z: np.ndarray) -> bool:
    return shape.contains(z)


def build_hull(
    gram: GramData,
    tuning: TuningVector,
    k: float,
    directions: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
) -> HullOfShiftedEllipses:
    """U_n(k) = ∪_d E_C(k) + μ_d 的闭包，即平移椭圆的凸包"""
    if gram.p > global_config.hull_max_dim:
        raise DimensionError(f"凸包形状只支持 p ≤ {global_config.hull_max_dim}，实际 p={gram.p}")
    shifts = shifted_means(gram, tuning)
    return HullOfShiftedEllipses(Ellipse(gram.C, k), shifts, directions, tol)


def parallelogram_vertices(par: Parallelogram) -> np.ndarray:
    """scale · C⁻¹ Λ_0 d，d 遍历全部符号向量（按字典序）"""
    check_enumerable(par.p)
    signs = sign_matrix(par.p)
    C_inv = np.linalg.inv(par.C_shape)
    return par.scale * (signs * par.bounds) @ C_inv.T


# ---------------------------------------------------------------------------
# 象限锥与形状条件
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrthantCone:
    """A^d_C̄(m) = ∩_j {z : d_j (C̄m)_j ≤ d_j (C̄z)_j, d_j z_j ≤ 0}"""

    C_bar: np.ndarray
    d: SignVector
    m: np.ndarray

    def __post_init__(self):
        C_bar = np.atleast_2d(np.asarray(self.C_bar, dtype=float))
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        if C_bar.shape != (m.shape[0], m.shape[0]) or self.d.p != m.shape[0]:
            raise InputValidationError("锥的维度不一致")
        object.__setattr__(self, "C_bar", C_bar)
        object.__setattr__(self, "m", m)

    @property
    def p(self) -> int:
        return self.m.shape[0]

    def contains_many(self, Z: np.ndarray) -> np.ndarray:
        Z = _as_points(Z, self.p)
        d = self.d.as_array()
        orthant = np.all(d * Z <= 0.0, axis=1)
        apex_level = d * (self.C_bar @ self.m)
        shifted = np.all(d * (Z @ self.C_bar.T) >= apex_level, axis=1)
        return orthant & shifted

    def contains(self, z: np.ndarray) -> bool:
        return bool(self.contains_many(np.asarray(z, dtype=float).reshape(1, -1))[0])

    def edge_directions(self) -> np.ndarray:
        """锥 {D C̄ (z − m) ≥ 0} 的棱方向 C̄⁻¹ D e_i，按列排列"""
        return np.linalg.solve(self.C_bar, np.diag(self.d.as_array()))


def cone_contains(cone: OrthantCone, z: np.ndarray) -> bool:
    return cone.contains(z)


def natural_sign(m: np.ndarray) -> SignVector:
    """d = −sgn(m)，零分量取 +1；此时 m ∈ A^d(m)"""
    m = np.asarray(m, dtype=float)
    return SignVector(tuple(np.where(m > 0, -1, 1)))


def sample_cone(
    cone: OrthantCone,
    rng: np.random.Generator,
    n: int,
    clip_lower: np.ndarray,
    clip_upper: np.ndarray,
) -> np.ndarray:
    """
    在 A^d(m) ∩ 裁剪盒 中取点：顶点 m、原点、沿棱方向的射线、
    随机锥组合以及象限内的拒绝抽样点。
    """
    p = cone.p
    span = float(np.linalg.norm(clip_upper - clip_lower)) or 1.0
    edges = cone.edge_directions()
    edges = edges / np.linalg.norm(edges, axis=0, keepdims=True)

    steps = span * np.geomspace(1e-3, 1.0, 8)
    rays = (cone.m[None, None, :] + steps[:, None, None] * edges.T[None, :, :]).reshape(-1, p)
    weights = rng.exponential(size=(n, p)) * rng.uniform(0.0, span, size=(n, 1)) / p
    combos = cone.m + weights @ edges.T
    magnitude = rng.uniform(0.0, 1.0, size=(n, p)) * np.maximum(np.abs(clip_lower), np.abs(clip_upper))
    orthant = -cone.d.as_array() * magnitude

    candidates = np.vstack([cone.m[None, :], np.zeros((1, p)), rays, combos, orthant])
    in_box = np.all((candidates >= clip_lower) & (candidates <= clip_upper), axis=1)
    candidates = candidates[in_box]
    return candidates[cone.contains_many(candidates)]


@dataclass(frozen=True)
class Counterexample:
    m: np.ndarray
    d: SignVector
    z: np.ndarray

    def to_dict(self) -> dict:
        return {"m": self.m.tolist(), "d": list(self.d.d), "z": self.z.tolist()}


@dataclass(frozen=True)
class ConditionVerdict:
    """抽样证据：holds_on_sample 只是必要性证据，不是证明"""

    holds_on_sample: bool
    counterexample: Optional[Counterexample]
    n_apexes: int
    n_points: int
    clip_lower: np.ndarray
    clip_upper: np.ndarray

    def to_dict(self) -> dict:
        return {
            "holds_on_sample": self.holds_on_sample,
            "counterexample": self.counterexample.to_dict() if self.counterexample else None,
            "n_apexes": self.n_apexes,
            "n_points": self.n_points,
            "clip_box": [self.clip_lower.tolist(), self.clip_upper.tolist()],
        }


def sample_interior(shape: ConfidenceShape, n: int, rng: np.random.Generator, max_draws: Optional[int] = None) -> np.ndarray:
    """包围盒内拒绝抽样，返回至多 n 个形状内的点"""
    max_draws = max_draws or global_config.condition_max_draws
    lower, upper = shape.bounding_box()
    found = []
    drawn = 0
    have = 0
    batch = max(1024, 4 * n)
    while have < n and drawn < max_draws:
        size = min(batch, max_draws - drawn)
        Z = rng.uniform(lower, upper, size=(size, shape.p))
        drawn += size
        hits = Z[shape.contains_many(Z)]
        found.append(hits)
        have += hits.shape[0]
    if have == 0:
        raise EmptyShapeError(f"在 {drawn} 次拒绝抽样中未找到形状内的点")
    return np.vstack(found)[:n]


def check_condition_a(
    shape: ConfidenceShape,
    C_bar: np.ndarray,
    n_samples: int,
    seed: int,
    points_per_cone: int = 32,
) -> ConditionVerdict:
    """
    抽样检验形状条件：对每个 m ∈ M 与每个 d，A^d_C̄(m) ⊆ M。

    返回首个反例 (m, d, z)，否则 holds_on_sample。
    """
    C_bar = np.atleast_2d(np.asarray(C_bar, dtype=float))
    apexes = sample_interior(shape, n_samples, substream(seed, PURPOSE_SHAPE, 0))
    clip_lower, clip_upper = shape.clip_box(2.0)
    signs = all_sign_vectors(shape.p)
    n_points = 0
    for index, m in enumerate(apexes):
        rng = substream(seed, PURPOSE_CONE, index)
        for d in signs:
            points = sample_cone(OrthantCone(C_bar, d, m), rng, points_per_cone, clip_lower, clip_upper)
            n_points += points.shape[0]
            if points.shape[0] == 0:
                continue
            outside = ~shape.contains_many(points)
            if np.any(outside):
                z = points[np.argmax(outside)]
                logger.info(f"形状条件反例: m={m.tolist()}, d={d}, z={z.tolist()}")
                return ConditionVerdict(
                    False, Counterexample(m.copy(), d, z.copy()), index + 1, n_points, clip_lower, clip_upper
                )
    logger.debug(f"形状条件在 {apexes.shape[0]} 个顶点、{n_points} 个锥点上成立")
    return ConditionVerdict(True, None, apexes.shape[0], n_points, clip_lower, clip_upper)


@dataclass(frozen=True)
class PointCloudClosure(ConfidenceShape):
    """
    有限点集 M 关于形状条件的闭包 ∪_{m∈M} ∪_d A^d_C̄(m)。

    对给定 z 只有与 z 相容的 d 有意义：z_j ≠ 0 时 d_j = −sgn(z_j)；
    z_j = 0 时两种符号中必有一种满足第 j 个不等式，该约束自动成立。
    """

    points: np.ndarray
    C_bar: np.ndarray

    tag = "point_cloud"

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if points.shape[0] == 0:
            raise InputValidationError("点集不能为空")
        C_bar = np.atleast_2d(np.asarray(self.C_bar, dtype=float))
        if C_bar.shape != (points.shape[1], points.shape[1]):
            raise InputValidationError("C̄ 与点的维度不一致")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "C_bar", C_bar)

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def contains_many(self, Z: np.ndarray) -> np.ndarray:
        Z = _as_points(Z, self.p)
        levels = self.points @ self.C_bar.T
        inside = np.empty(Z.shape[0], dtype=bool)
        width = levels.shape[0] * self.p
        for block in _blocks(Z.shape[0], width):
            Zb = Z[block]
            d = -np.sign(Zb)
            W = Zb @ self.C_bar.T
            # satisfied[n, m, j]: d_j (C̄z)_j ≥ d_j (C̄m)_j，d_j = 0 的分量恒成立
            satisfied = (d * W)[:, None, :] >= d[:, None, :] * levels[None, :, :]
            inside[block] = np.any(np.all(satisfied, axis=2), axis=1)
        return inside

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lower = self.points.min(axis=0)
        upper = self.points.max(axis=0)
        sym = 0.5 * (self.C_bar + self.C_bar.T)
        smallest = float(np.linalg.eigvalsh(sym)[0])
        if smallest > 0:
            # z ∈ A^d(m) 蕴含 z'C̄z ≤ z'C̄m，从而 ‖z‖ ≤ ‖C̄m‖ / λ_min
            radius = float(np.max(np.linalg.norm(self.points @ self.C_bar.T, axis=1))) / smallest
            return np.minimum(lower, -radius), np.maximum(upper, radius)
        center = 0.5 * (lower + upper)
        half = np.maximum(0.5 * (upper - lower), 1e-12)
        return center - 2 * half, center + 2 * half

    def to_dict(self) -> dict:
        return {"tag": self.tag, "points": self.points.tolist(), "C_bar": self.C_bar.tolist()}


def closure_condition_a(points: np.ndarray, C_bar: np.ndarray) -> PointCloudClosure:
    """包含点集的最小满足形状条件的集合"""
    return PointCloudClosure(points, C_bar)


# ---------------------------------------------------------------------------
# 体积、边界与包含关系
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolumeEstimate:
    volume: float
    std_error: float
    n_draws: int


def volume_mc(
    shape: ConfidenceShape, n_draws: int, seed: int, threads: Optional[int] = None
) -> VolumeEstimate:
    """包围盒内均匀命中计数估计体积"""
    lower, upper = shape.bounding_box()
    box_volume = float(np.prod(upper - lower))
    sizes = chunk_sizes(n_draws, global_config.mc_chunk_size)

    def count(index: int, size: int) -> int:
        rng = substream(seed, PURPOSE_VOLUME, index)
        Z = rng.uniform(lower, upper, size=(size, shape.p))
        return int(np.count_nonzero(shape.contains_many(Z)))

    hits = sum(map_chunks(count, sizes, threads))
    fraction = hits / n_draws
    return VolumeEstimate(
        volume=box_volume * fraction,
        std_error=box_volume * math.sqrt(fraction * (1 - fraction) / n_draws),
        n_draws=int(n_draws),
    )


def _unit_circle(n_points: int) -> np.ndarray:
    angles = np.linspace(0.0, 2.0 * math.pi, n_points)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def ellipse_boundary(ellipse: Ellipse, n_points: Optional[int] = None) -> np.ndarray:
    """p=2 椭圆边界折线（首尾重合）"""
    if ellipse.p != 2:
        raise DimensionError("边界折线只支持 p=2")
    n_points = n_points or global_config.boundary_points
    gram = GramData.from_matrix(ellipse.C_shape)
    return ellipse.center + math.sqrt(ellipse.k) * _unit_circle(n_points) @ gram.C_sqrt_inv


def hull_boundary(hull: HullOfShiftedEllipses, n_points: Optional[int] = None) -> np.ndarray:
    """凸包边界：每个方向上支撑点 s* + √k C⁻¹v / √(v'C⁻¹v)"""
    if hull.p != 2:
        raise DimensionError("边界折线只支持 p=2")
    n_points = n_points or global_config.boundary_points
    V = _unit_circle(n_points)
    C_inv = np.linalg.inv(hull.base.C_shape)
    best = hull.shifts[np.argmax(V @ hull.shifts.T, axis=1)]
    direction = V @ C_inv
    scale = np.sqrt(hull.k / np.einsum("ij,ij->i", direction, V))
    return best + scale[:, None] * direction


def polygon_boundary(vertices: np.ndarray) -> np.ndarray:
    """按极角排序顶点并闭合"""
    center = vertices.mean(axis=0)
    angles = np.arctan2(vertices[:, 1] - center[1], vertices[:, 0] - center[0])
    ordered = vertices[np.argsort(angles)]
    return np.vstack([ordered, ordered[:1]])


def shape_boundary(shape: ConfidenceShape, n_points: Optional[int] = None) -> np.ndarray:
    if shape.p != 2:
        raise DimensionError("边界折线只支持 p=2")
    if isinstance(shape, Ellipse):
        return ellipse_boundary(shape, n_points)
    if isinstance(shape, HullOfShiftedEllipses):
        return hull_boundary(shape, n_points)
    if isinstance(shape, Parallelogram):
        return polygon_boundary(shape.vertices())
    if isinstance(shape, Box):
        corners = np.array(
            [[shape.lower[0], shape.lower[1]], [shape.upper[0], shape.lower[1]],
             [shape.upper[0], shape.upper[1]], [shape.lower[0], shape.upper[1]]]
        )
        return np.vstack([corners, corners[:1]])
    raise InputValidationError(f"形状 {shape.tag} 不支持边界折线")


@dataclass(frozen=True)
class EllipseContainment:
    contained: bool
    worst_point: np.ndarray
    worst_ratio: float


def ellipse_in_ellipse(inner: Ellipse, outer: Ellipse, n_points: int = 4096) -> EllipseContainment:
    """
    在内椭圆边界上搜索外椭圆之外的点。

    两者均为凸集，边界被包含即整体被包含；worst_ratio = max q_outer / k_outer。
    """
    if inner.p != outer.p:
        raise InputValidationError("椭圆维度不一致")
    p = inner.p
    if p == 1:
        U = np.array([[1.0], [-1.0]])
    elif p == 2:
        U = _unit_circle(n_points)
    else:
        U = direction_grid(p, n_nd=n_points)
    boundary = inner.center + math.sqrt(inner.k) * U @ GramData.from_matrix(inner.C_shape).C_sqrt_inv
    ratio = outer.quadratic_form(boundary) / outer.k
    worst = int(np.argmax(ratio))
    return EllipseContainment(
        contained=bool(ratio[worst] <= 1.0 + MEMBERSHIP_RTOL),
        worst_point=boundary[worst],
        worst_ratio=float(ratio[worst]),
    )


def shape_from_dict(data: dict) -> ConfidenceShape:
    """由 to_dict 的输出（或配置文件）重建形状"""
    tag = data.get("tag")
    if tag == Ellipse.tag:
        return Ellipse(np.array(data["C_shape"]), float(data["k"]), np.array(data.get("center") or [0.0] * len(data["C_shape"])))
    if tag == Box.tag:
        return Box(np.array(data["lower"]), np.array(data["upper"]))
    if tag == Parallelogram.tag:
        return Parallelogram(np.array(data["C_shape"]), np.array(data["bounds"]), float(data.get("scale", 1.0)))
    if tag == HullOfShiftedEllipses.tag:
        return HullOfShiftedEllipses(
            Ellipse(np.array(data["C_shape"]), float(data["k"])), np.array(data["shifts"]), tol=data.get("tol")
        )
    if tag == PointCloudClosure.tag:
        return PointCloudClosure(np.array(data["points"]), np.array(data["C_bar"]))
    raise InputValidationError(f"未知形状标签: {tag}")
