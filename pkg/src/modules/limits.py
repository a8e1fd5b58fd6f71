"""
极限目标函数 Q 与 V^ζ 的最小化

两者都是带平移惩罚的二次型，复用 Lasso 的坐标下降内核：
  Q(u)   = u'Cu − 2W'u + 2 Σ λ_j pen_{t_j}(u_j)
  V^ζ(u) = u'Cu        + 2 Σ λ_{0,j} pen_{ζ_j}(u_j)
"""

import numpy as np

from src.modules.lasso import coordinate_descent
from src.modules.model import ExtendedVector, GramData
from src.utils.config import global_config
from src.utils.errors import InputValidationError, SolverConvergenceError
from src.utils.logger import get_module_logger

logger = get_module_logger("极限目标")


def _check_dims(p: int, **vectors) -> None:
    for name, vector in vectors.items():
        if np.shape(vector)[0] != p:
            raise InputValidationError(f"{name} 的维度 {np.shape(vector)[0]} 与 p={p} 不一致")


def _minimize(C: np.ndarray, W: np.ndarray, lam: np.ndarray, t: np.ndarray, label: str) -> np.ndarray:
    result = coordinate_descent(C, W[None, :], lam, t=t, tol=global_config.limit_tol, abs_cap=global_config.limit_tol)
    if not result.converged[0]:
        raise SolverConvergenceError(
            f"{label} 最小化未收敛：{int(result.sweeps[0])} 轮后 KKT 违背 {result.violation[0]:.3e}",
            iterations=int(result.sweeps[0]),
            max_violation=float(result.violation[0]),
        )
    logger.debug(f"{label} 最小化收敛: {int(result.sweeps[0])} 轮")
    return result.U[0]


def minimize_limit_objective_Q(t: ExtendedVector, W: np.ndarray, gram: GramData, lam: np.ndarray) -> np.ndarray:
    """
    Q 的唯一最小点。

    t_j 有限时惩罚为 |t_j + u_j| − |t_j|，t_j = ±∞ 时为线性项 ±λ_j u_j。
    """
    W = np.asarray(W, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    _check_dims(gram.p, t=t.values, W=W, lam=lam)
    if np.any(lam < 0):
        raise InputValidationError("λ 必须非负")
    return _minimize(gram.C, W, lam, t.values, "Q")


def minimize_V_zeta(zeta: ExtendedVector, gram_limit: GramData, lambda0: np.ndarray) -> np.ndarray:
    """V^ζ 的唯一最小点，结果总落在 {m : |(Cm)_j| ≤ λ_{0,j}} 内"""
    lambda0 = np.asarray(lambda0, dtype=float).reshape(-1)
    _check_dims(gram_limit.p, zeta=zeta.values, lambda0=lambda0)
    if np.any(lambda0 < 0) or np.any(lambda0 > 1):
        raise InputValidationError("λ_0 必须位于 [0,1]^p")
    return _minimize(gram_limit.C, np.zeros(gram_limit.p), lambda0, zeta.values, "V^ζ")
