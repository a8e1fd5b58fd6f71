"""
分量调参 Lasso 与最小二乘估计

目标函数 ‖y − Xβ‖² + 2 Σ λ_j |β_j|（注意惩罚项系数 2）。
求解器为循环坐标下降，逐坐标精确软阈值更新；
被截断的坐标写入字面量 0，使选择事件 {β̂_j = 0} 精确成立。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from src.modules.model import FiniteSample, LinearModel, TuningVector
from src.utils.config import global_config
from src.utils.errors import (
    InputValidationError,
    SingularDesignError,
    SolverConvergenceError,
    WrongRegimeError,
)
from src.utils.logger import get_module_logger

logger = get_module_logger("Lasso求解器")

LASSO_TOL = 1e-8
# 绝对上限：保证 LS 与 Lasso 的距离界在 1e-6 内成立
LASSO_ABS_CAP = 1e-7
LS_RESIDUAL_TOL = 1e-8
GAP_SLACK = 1e-6


@dataclass(frozen=True)
class LassoSolution:
    beta_hat: np.ndarray
    active_set: np.ndarray
    kkt_gap: np.ndarray
    iterations: int
    objective_value: float

    def to_dict(self) -> dict:
        return {
            "beta": self.beta_hat.tolist(),
            "active_set": [bool(v) for v in self.active_set],
            "kkt_gap": self.kkt_gap.tolist(),
            "iterations": int(self.iterations),
            "objective_value": float(self.objective_value),
        }


@dataclass(frozen=True)
class BatchResult:
    """批量坐标下降结果，每行对应一个右端项"""

    U: np.ndarray
    converged: np.ndarray
    sweeps: np.ndarray
    violation: np.ndarray


def kkt_violation(
    G: np.ndarray, B: np.ndarray, U: np.ndarray, lam: np.ndarray, t: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    次梯度最优性条件的逐坐标违背量。

    c = B − U G 为残差相关；有限 t_j 时 s = t_j + u_j ≠ 0 要求 c_j = λ_j sgn(s)，
    s = 0 要求 |c_j| ≤ λ_j；t_j = ±∞ 时要求 c_j = ±λ_j。
    """
    t = np.zeros(G.shape[0]) if t is None else t
    c = B - U @ G
    finite = np.isfinite(t)
    shifted = np.where(finite, U + np.where(finite, t, 0.0), 0.0)
    at_kink = finite & (shifted == 0.0)
    tilt = np.where(finite, np.sign(shifted), np.sign(t))
    smooth_gap = np.abs(c - lam * tilt)
    kink_gap = np.maximum(np.abs(c) - lam, 0.0)
    return np.where(at_kink, kink_gap, smooth_gap)


def coordinate_descent(
    G: np.ndarray,
    B: np.ndarray,
    lam: np.ndarray,
    t: Optional[np.ndarray] = None,
    U0: Optional[np.ndarray] = None,
    tol: float = LASSO_TOL,
    max_sweeps: Optional[int] = None,
    abs_cap: float = np.inf,
) -> BatchResult:
    """
    批量最小化 u'Gu − 2B'u + 2 Σ λ_j pen_j(u_j)。

    pen_j(u) = |t_j + u| − |t_j|（t_j 有限），= sgn(t_j) u（t_j = ±∞）。
    B 的每一行是一个独立问题，各行共享 G；已收敛的行不再更新。
    收敛判据：逐行最大 KKT 违背 ≤ min(tol · max(1, ‖B_row‖_∞), abs_cap)。
    """
    G = np.asarray(G, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    lam = np.asarray(lam, dtype=float)
    p = G.shape[0]
    t = np.zeros(p) if t is None else np.asarray(t, dtype=float)
    max_sweeps = int(max_sweeps or global_config.solver_max_iter)
    diag = np.diag(G).copy()
    if np.any(diag <= 0):
        raise InputValidationError("Gram 矩阵对角元必须为正")

    U = np.zeros_like(B) if U0 is None else np.array(np.atleast_2d(U0), dtype=float)
    threshold = np.minimum(tol * np.maximum(1.0, np.max(np.abs(B), axis=1)), abs_cap)
    sweeps = np.zeros(B.shape[0], dtype=np.int64)
    violation = np.max(kkt_violation(G, B, U, lam, t), axis=1)
    active = np.flatnonzero(violation > threshold)

    finite = np.isfinite(t)
    t_finite = np.where(finite, t, 0.0)
    tilt = np.where(finite, 0.0, np.sign(t))

    sweep = 0
    while active.size and sweep < max_sweeps:
        sweep += 1
        U_act = U[active]
        B_act = B[active]
        for j in range(p):
            r = B_act[:, j] - U_act @ G[:, j] + diag[j] * U_act[:, j]
            if finite[j]:
                # 对 s = t_j + u_j 做软阈值；截断时 u_j = −t_j 使 s 精确为 0，
                # 否则直接写 u_j = (r − λ_j sgn s) / G_jj，避免大 |t_j| 下的相消
                x = diag[j] * t_finite[j] + r
                U_act[:, j] = np.where(
                    np.abs(x) > lam[j], (r - lam[j] * np.sign(x)) / diag[j], 0.0 - t_finite[j]
                )
            else:
                U_act[:, j] = (r - lam[j] * tilt[j]) / diag[j]
        U[active] = U_act
        sweeps[active] = sweep
        current = np.max(kkt_violation(G, B_act, U_act, lam, t), axis=1)
        violation[active] = current
        active = active[current > threshold[active]]

    converged = violation <= threshold
    return BatchResult(U=U, converged=converged, sweeps=sweeps, violation=violation)


def solve_ls(model: LinearModel) -> np.ndarray:
    """最小二乘估计；正规方程残差 X'(y − Xβ̂) 在 1e-8·‖X'y‖ 内为 0"""
    beta, _, rank, _ = linalg.lstsq(model.X, model.y)
    if rank < model.p:
        raise SingularDesignError("最小二乘问题秩亏")
    Xty = model.X.T @ model.y
    residual = model.X.T @ (model.y - model.X @ beta)
    bound = LS_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(Xty)))
    if np.linalg.norm(residual) > bound:
        # 病态问题时用 Cholesky 解正规方程再精化一次
        G = model.X.T @ model.X
        beta = linalg.cho_solve(linalg.cho_factor(G), Xty)
    return beta


def lasso_objective(model: LinearModel, lam: np.ndarray, beta: np.ndarray) -> float:
    residual = model.y - model.X @ beta
    return float(residual @ residual + 2.0 * np.sum(lam * np.abs(beta)))


def _require_finite_sample(tuning: TuningVector, p: int) -> None:
    if not isinstance(tuning.regime, FiniteSample):
        raise WrongRegimeError("Lasso 求解只适用于有限样本调参")
    if tuning.p != p:
        raise InputValidationError(f"λ 的维度 {tuning.p} 与 p={p} 不一致")
    if not np.all(np.isfinite(tuning.lam)):
        raise InputValidationError("λ 必须有限")


def solve_lasso(
    model: LinearModel, tuning: TuningVector, max_iter: Optional[int] = None
) -> LassoSolution:
    """循环坐标下降求 Lasso，以 β̂_LS 热启动"""
    _require_finite_sample(tuning, model.p)
    G = model.X.T @ model.X
    b = model.X.T @ model.y
    beta_ls = solve_ls(model)
    result = coordinate_descent(
        G, b[None, :], tuning.lam, U0=beta_ls[None, :], max_sweeps=max_iter, abs_cap=LASSO_ABS_CAP
    )
    if not result.converged[0]:
        raise SolverConvergenceError(
            f"坐标下降在 {int(result.sweeps[0])} 轮后未收敛，最大 KKT 违背 {result.violation[0]:.3e}（设计可能病态）",
            iterations=int(result.sweeps[0]),
            max_violation=float(result.violation[0]),
        )
    beta = result.U[0]
    gap = kkt_violation(G, b[None, :], beta[None, :], tuning.lam)[0]
    logger.debug(f"Lasso 收敛：{int(result.sweeps[0])} 轮，最大 KKT 违背 {gap.max():.3e}")
    return LassoSolution(
        beta_hat=beta,
        active_set=beta != 0.0,
        kkt_gap=gap,
        iterations=int(result.sweeps[0]),
        objective_value=lasso_objective(model, tuning.lam, beta),
    )


def solve_lasso_batch(
    G: np.ndarray, B: np.ndarray, lam: np.ndarray, max_iter: Optional[int] = None
) -> BatchResult:
    """共享 Gram 矩阵 G = X'X 的批量 Lasso，B 的每行为一次重复的 X'y"""
    G = np.asarray(G, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    warm = linalg.cho_solve(linalg.cho_factor(G), B.T).T
    return coordinate_descent(G, B, lam, U0=warm, max_sweeps=max_iter, abs_cap=LASSO_ABS_CAP)


def ls_lasso_gap(model: LinearModel, tuning: TuningVector, sol: LassoSolution) -> np.ndarray:
    """g_j = |(X'X(β̂_L − β̂_LS))_j|，对收敛解有 g_j ≤ λ_j"""
    # X'X β̂_LS = X'y，直接用正规方程右端项避免 LS 的舍入误差
    G = model.X.T @ model.X
    gap = np.abs(G @ sol.beta_hat - model.X.T @ model.y)
    excess = gap - tuning.lam
    if np.any(excess > GAP_SLACK):
        logger.warning(f"LS 与 Lasso 距离界被突破，最大超出 {excess.max():.3e}")
    return gap
