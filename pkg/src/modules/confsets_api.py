"""
置信集计算的 HTTP 接口

请求体与命令行配置文件使用同一组 pydantic 模型，返回的报告与命令行 JSON 输出一致；
每次计算都会写入运行记录表。
"""

import json
from typing import Any, Optional

import numpy as np
from fastapi import APIRouter, Query
from pydantic import BaseModel, Field

from src.modules.commands import CommandOutput, cmd_consistent, cmd_coverage, cmd_ellipse
from src.modules.coverage import noncentralities, worst_case_d
from src.modules.lasso import ls_lasso_gap, solve_lasso, solve_ls
from src.modules.model import GramData, LinearModel, TuningVector, mean_convention
from src.modules.reports import (
    ConsistentConfig,
    CoverageConfig,
    EllipseConfig,
    RunConfig,
    RunReport,
    TuningSpec,
    make_report,
    render_json,
)
from src.utils.database import get_db_instance
from src.utils.errors import InputValidationError, RunNotFoundError
from src.utils.logger import get_module_logger

logger = get_module_logger("置信集API")
router = APIRouter()


class SolveRequest(RunConfig):
    X: list[list[float]] = Field(..., description="设计矩阵，n 行 p 列")
    y: list[float] = Field(..., description="响应向量，长度 n")
    lam: Optional[list[float]] = Field(None, description="有限样本 λ_n，标量或长度 p")
    sigma: float = Field(1.0, gt=0)
    ls: bool = Field(False, description="只求最小二乘解")


class GramRequest(RunConfig):
    C: list[list[float]] = Field(..., description="对称正定矩阵")


class WorstCaseRequest(RunConfig):
    C: list[list[float]]
    tuning: TuningSpec
    n: int = Field(1, ge=1, description="有限样本调参时的样本量")
    sigma: float = Field(1.0, gt=0)


class ReportResponse(BaseModel):
    status: str
    run_id: str
    headline: Optional[float] = None
    report: RunReport


class RunSummary(BaseModel):
    run_id: str
    subcommand: str
    seed: Optional[str]
    headline: Optional[float]
    created_at: str


class RunListResponse(BaseModel):
    status: str
    runs: list[RunSummary]


def _respond(subcommand: str, output: CommandOutput) -> ReportResponse:
    report = json.loads(render_json(output.report))
    run_id = get_db_instance().record_run(subcommand, report, output.headline)
    return ReportResponse(status="success", run_id=run_id, headline=output.headline, report=output.report)


@router.post("/solve", response_model=ReportResponse)
def solve_endpoint(request: SolveRequest):
    """Lasso 或最小二乘解，附 KKT 间隙与 LS-Lasso 差的界"""
    logger.info(f"收到求解请求: n={len(request.y)}, ls={request.ls}")
    if request.lam is None and not request.ls:
        raise InputValidationError("需要给出 lam，或设置 ls=true")
    model = LinearModel(np.array(request.X, dtype=float), np.array(request.y, dtype=float), request.sigma)
    result: dict[str, Any] = {"n": model.n, "p": model.p, "beta_ls": solve_ls(model)}
    headline = None
    if not request.ls:
        tuning = TuningVector.finite_sample(request.lam, model.n)
        solution = solve_lasso(model, tuning)
        result.update(solution.to_dict())
        result["ls_lasso_gap"] = ls_lasso_gap(model, tuning, solution)
        headline = solution.objective_value
    return _respond("solve", CommandOutput(report=make_report("solve", request, result), headline=headline))


@router.post("/gram", response_model=ReportResponse)
def gram_endpoint(request: GramRequest):
    """C 的逆、平方根与特征值"""
    gram = GramData.from_matrix(np.array(request.C, dtype=float))
    output = CommandOutput(report=make_report("gram", request, gram.to_dict()), headline=gram.condition_number)
    return _respond("gram", output)


@router.post("/worst-case", response_model=ReportResponse)
def worst_case_endpoint(request: WorstCaseRequest):
    """所有符号向量的非中心参数及其最大值所在的 d"""
    gram = GramData.from_matrix(np.array(request.C, dtype=float))
    tuning = request.tuning.build(request.n)
    deltas = noncentralities(gram, tuning, request.sigma)
    worst = worst_case_d(gram, tuning)
    result = {
        "convention": mean_convention(tuning),
        "noncentralities": deltas,
        "max_noncentrality": float(deltas.max()),
        "worst_case_d": [list(d.d) for d in worst],
    }
    output = CommandOutput(report=make_report("worst-case", request, result), headline=float(deltas.max()))
    return _respond("worst-case", output)


@router.post("/ellipse", response_model=ReportResponse)
def ellipse_endpoint(config: EllipseConfig):
    logger.info(f"收到椭圆标定请求: alpha={config.alpha}")
    return _respond("ellipse", cmd_ellipse(config))


@router.post("/coverage", response_model=ReportResponse)
def coverage_endpoint(config: CoverageConfig):
    logger.info(f"收到最小覆盖概率请求: shape={config.shape.get('tag')}")
    return _respond("coverage", cmd_coverage(config))


@router.post("/consistent", response_model=ReportResponse)
def consistent_endpoint(config: ConsistentConfig):
    return _respond("consistent", cmd_consistent(config))


@router.get("/runs", response_model=RunListResponse)
def list_runs_endpoint(
    subcommand: Optional[str] = Query(None, description="只列出该子命令的记录"),
    limit: int = Query(100, ge=1, le=1000),
):
    runs = get_db_instance().list_runs(subcommand, limit)
    return RunListResponse(
        status="success",
        runs=[
            RunSummary(
                run_id=run.run_id,
                subcommand=run.subcommand,
                seed=run.seed,
                headline=run.headline,
                created_at=run.created_at.isoformat(),
            )
            for run in runs
        ],
    )


@router.get("/runs/{run_id}")
def get_run_endpoint(run_id: str) -> dict[str, Any]:
    run = get_db_instance().get_run(run_id)
    if run is None:
        raise RunNotFoundError(f"运行记录不存在: {run_id}")
    return {"status": "success", "run_id": run.run_id, "report": json.loads(run.report_json)}
