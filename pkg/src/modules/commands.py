"""
命令行子命令

每个 cmd_* 接收已校验的配置，返回 CommandOutput（报告、可选 CSV 表与边界折线），
不修改输入，也不做任何输出；写文件与记录运行由 run_command 统一完成。
"""

import argparse
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from pydantic import ValidationError

from src.modules.calibrate import (
    REFINE_FACTOR,
    calibrate_ellipse,
    calibrate_hull,
    calibrate_ls_ellipse,
    compare_with_ls,
    consistent_set,
)
from src.modules.coverage import MonteCarloConfig, min_coverage
from src.modules.lasso import ls_lasso_gap, solve_lasso, solve_ls
from src.modules.model import GramData, LinearModel, TuningVector, gram_from_design, load_matrix_csv, load_vector_csv, mean_convention
from src.modules.reports import (
    BoundaryConfig,
    ConsistentConfig,
    CoverageConfig,
    EllipseConfig,
    RunConfig,
    RunReport,
    ShapeConfig,
    SimulateConfig,
    SolveConfig,
    build_shape,
    load_config,
    make_report,
    render_csv,
    render_json,
    write_output,
)
from src.modules.shapes import Ellipse, shape_from_dict, volume_mc
from src.modules.simulate import (
    DesignFamily,
    consistent_regime_experiment,
    conservative_selection_experiment,
    coverage_profile,
    empirical_coverage,
    selection_frequency,
)
from src.tools.boundary import BOUNDARY_HEADER, boundary_rows
from src.utils.config import global_config
from src.utils.errors import ConfsetsError, InputValidationError
from src.utils.logger import get_module_logger
from src.utils.rng import PURPOSE_VERIFY, require_seed

logger = get_module_logger("命令行")


@dataclass
class CommandOutput:
    report: RunReport
    table_header: Optional[list[str]] = None
    table_rows: Optional[list[list[Any]]] = None
    boundary: Optional[list[list[Any]]] = None
    headline: Optional[float] = None


def _sign_header(p: int) -> list[str]:
    return [f"d_{j + 1}" for j in range(p)]


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------


def cmd_solve(config: SolveConfig) -> CommandOutput:
    X = load_matrix_csv(config.X_csv)
    y = load_vector_csv(config.y_csv)
    model = LinearModel(X, y, config.sigma)
    beta_ls = solve_ls(model)
    result: dict[str, Any] = {
        "n": model.n,
        "p": model.p,
        "condition_number": model.condition_number,
        "beta_ls": beta_ls,
    }
    if config.ls:
        beta = beta_ls
        rows = [[j + 1, float(beta[j]), True, 0.0] for j in range(model.p)]
    else:
        tuning = TuningVector.finite_sample(config.lam, model.n)
        solution = solve_lasso(model, tuning)
        beta = solution.beta_hat
        result.update(solution.to_dict())
        result["ls_lasso_gap"] = ls_lasso_gap(model, tuning, solution)
        rows = [
            [j + 1, float(beta[j]), bool(solution.active_set[j]), float(solution.kkt_gap[j])]
            for j in range(model.p)
        ]
    result.setdefault("beta", beta)
    return CommandOutput(
        report=make_report("solve", config, result),
        table_header=["j", "beta", "active", "kkt_gap"],
        table_rows=rows,
    )


def cmd_ellipse(config: EllipseConfig) -> CommandOutput:
    """Lasso 与最小二乘置信椭圆的 k*"""
    gram = config.design.gram()
    n = config.design.sample_size()
    tuning = config.tuning.build(n)
    calibration = calibrate_ellipse(gram, tuning, config.sigma, config.alpha)
    k_ls = calibrate_ls_ellipse(gram.p, config.sigma, config.alpha)
    ls_shape = Ellipse(gram.C, k_ls)
    result: dict[str, Any] = {
        "convention": mean_convention(tuning),
        "k_ls": k_ls,
        "k_lasso": calibration.k_star,
        "calibration": calibration.to_dict(),
        "gram": gram.to_dict(),
        "shapes": {"ls": ls_shape.to_dict(), "lasso": calibration.shape.to_dict()},
    }
    if config.design.X_csv is not None and config.design.y_csv is not None and tuning.regime.label == "finite_sample":
        comparison = compare_with_ls(config.design.model(config.sigma), tuning, config.alpha)
        result["parameter_space"] = comparison.to_dict()
    boundary = None
    if gram.p == 2:
        boundary = boundary_rows([("ls", ls_shape), ("lasso", calibration.shape)])
    return CommandOutput(
        report=make_report("ellipse", config, result),
        table_header=["quantity", "value"],
        table_rows=[["k_ls", k_ls], ["k_lasso", calibration.k_star], ["noncentrality", calibration.noncentrality]],
        boundary=boundary,
        headline=calibration.k_star,
    )


def verification_config(mc: MonteCarloConfig, verify_samples: Optional[int] = None) -> MonteCarloConfig:
    """复核用的抽样配置：独立子流，默认样本量是标定第二轮的两倍"""
    n_samples = verify_samples or 2 * REFINE_FACTOR * mc.n_samples
    return mc.model_copy(update={"n_samples": n_samples, "purpose": PURPOSE_VERIFY})


def cmd_shape(config: ShapeConfig) -> CommandOutput:
    """平移椭圆凸包的标定、复核与体积比较"""
    seed = require_seed(config.seed)
    gram = config.design.gram()
    tuning = config.tuning.build(config.design.sample_size())
    mc = config.mc.build(seed, config.threads, default_samples=global_config.hull_mc_samples)
    hull = calibrate_hull(gram, tuning, config.sigma, config.alpha, mc, config.tol)
    ellipse = calibrate_ellipse(gram, tuning, config.sigma, config.alpha)
    k_ls = calibrate_ls_ellipse(gram.p, config.sigma, config.alpha)

    verify = verification_config(mc, config.verify_samples)
    verification = min_coverage(hull.shape, gram, tuning, config.sigma, verify)
    hull_volume = volume_mc(hull.shape, config.volume_draws, seed, config.threads)
    ellipse_volume = volume_mc(ellipse.shape, config.volume_draws, seed, config.threads)
    result = {
        "convention": mean_convention(tuning),
        "k_ls": k_ls,
        "k_lasso": ellipse.k_star,
        "k_hull": hull.k_star,
        "calibration": hull.to_dict(),
        "verification": verification.model_dump(),
        "volumes": {
            "hull": {"volume": hull_volume.volume, "std_error": hull_volume.std_error, "n_draws": hull_volume.n_draws},
            "lasso_ellipse": {
                "volume": ellipse_volume.volume,
                "std_error": ellipse_volume.std_error,
                "n_draws": ellipse_volume.n_draws,
                "exact": ellipse.shape.volume(),
            },
        },
        "centers": hull.shape.centers(),
        "shapes": {"ls": Ellipse(gram.C, k_ls).to_dict(), "lasso": ellipse.shape.to_dict(), "hull": hull.shape.to_dict()},
    }
    boundary = None
    if gram.p == 2:
        boundary = boundary_rows([("lasso", ellipse.shape), ("hull", hull.shape)])
    return CommandOutput(
        report=make_report("shape", config, result),
        table_header=["k", "min_coverage"],
        table_rows=[[k, c] for k, c in sorted(hull.history)],
        boundary=boundary,
        headline=hull.k_star,
    )


def cmd_coverage(config: CoverageConfig) -> CommandOutput:
    gram = config.design.gram()
    tuning = config.tuning.build(config.design.sample_size())
    shape = config.build_shape(gram)
    mc = config.mc.build(config.seed, config.threads)
    report = min_coverage(shape, gram, tuning, config.sigma, mc)
    rows = [[*entry.d, entry.probability, entry.std_error, entry.method] for entry in report.per_d]
    return CommandOutput(
        report=make_report("coverage", config, {"shape": shape.to_dict(), "coverage": report.model_dump()}),
        table_header=[*_sign_header(gram.p), "prob", "stderr", "method"],
        table_rows=rows,
        headline=report.min_coverage,
    )


def _simulation_shape(config: SimulateConfig, model: LinearModel, tuning: TuningVector):
    gram = gram_from_design(model)
    if config.shape is None:
        return calibrate_ellipse(gram, tuning, config.sigma, config.alpha).shape
    return build_shape(config.shape, gram)


def cmd_simulate(config: SimulateConfig) -> CommandOutput:
    """经验覆盖概率实验，实验类型由 experiment 字段决定"""
    seed = require_seed(config.seed)
    experiment = config.experiment
    if experiment in ("consistent", "conservative_selection"):
        if config.design.C is None or not config.n_list:
            raise InputValidationError("渐近实验需要 design.C 与 n_list")
        family = DesignFamily(np.array(config.design.C), config.sigma, config.design.design_seed)
        if experiment == "consistent":
            if config.lambda_exponent is None:
                raise InputValidationError("一致调参实验需要 lambda_exponent")
            outcome = consistent_regime_experiment(
                family, config.lambda_exponent, config.d_scale, config.n_list, config.reps, seed,
                lambda_coefficients=config.lambda_coefficients, noise=config.noise, threads=config.threads,
            )
            rows = [[r.n, r.lambda_star, r.rate, r.worst_coverage, r.worst_std_error, r.boundary_coverage, r.boundary_std_error] for r in outcome.rows]
            return CommandOutput(
                report=make_report("simulate", config, outcome.to_dict()),
                table_header=["n", "lambda_star", "rate", "worst_coverage", "worst_stderr", "boundary_coverage", "boundary_stderr"],
                table_rows=rows,
                headline=outcome.rows[-1].worst_coverage,
            )
        if config.tuning is None or config.local_grid is None:
            raise InputValidationError("保守调参选择实验需要 tuning.lam（λ 极限）与 local_grid")
        trend = conservative_selection_experiment(
            family, config.tuning.lam, config.n_list, np.array(config.local_grid), config.reps, seed, config.threads
        )
        rows = [[t.n, *t.sup_frequency] for t in trend]
        return CommandOutput(
            report=make_report("simulate", config, {"rows": [t.__dict__ for t in trend]}),
            table_header=["n", *[f"sup_freq_{j + 1}" for j in range(family.p)]],
            table_rows=rows,
        )

    if config.tuning is None:
        raise InputValidationError("有限样本实验需要 tuning")
    model = config.design.model(config.sigma)
    tuning = config.tuning.build(model.n)
    if experiment == "selection":
        grid = config.grid.build().build(model.p, model.n)
        frequency = selection_frequency(model, tuning, grid, config.reps, seed, config.threads)
        rows = [[*beta.tolist(), *freq.tolist()] for beta, freq in zip(frequency.beta_grid, frequency.frequency)]
        return CommandOutput(
            report=make_report("simulate", config, frequency.to_dict()),
            table_header=[*[f"beta_{j + 1}" for j in range(model.p)], *[f"zero_freq_{j + 1}" for j in range(model.p)]],
            table_rows=rows,
        )

    shape = _simulation_shape(config, model, tuning)
    gram = gram_from_design(model)
    if experiment == "coverage":
        if config.beta is None:
            raise InputValidationError("coverage 实验需要 beta")
        estimate = empirical_coverage(model, np.array(config.beta), tuning, shape, config.reps, seed, config.threads)
        result = {"shape": shape.to_dict(), **estimate.to_dict()}
        return CommandOutput(
            report=make_report("simulate", config, result),
            table_header=[*[f"beta_{j + 1}" for j in range(model.p)], "coverage", "stderr"],
            table_rows=[[*config.beta, estimate.fraction, estimate.std_error]],
            headline=estimate.fraction,
        )

    profile = coverage_profile(model, tuning, shape, config.grid.build(), config.reps, seed, config.threads)
    formula = min_coverage(shape, gram, tuning, config.sigma, MonteCarloConfig(seed=seed, threads=config.threads))
    result = {
        "shape": shape.to_dict(),
        "profile": profile.to_dict(),
        "formula_min_coverage": formula.min_coverage,
        "formula_argmin_d": formula.argmin_d,
        "convention": formula.convention,
    }
    return CommandOutput(
        report=make_report("simulate", config, result),
        table_header=[*[f"beta_{j + 1}" for j in range(model.p)], "coverage", "stderr"],
        table_rows=profile.rows(),
        headline=profile.min_value,
    )


def cmd_consistent(config: ConsistentConfig) -> CommandOutput:
    gram = GramData.from_matrix(np.array(config.C))
    lam = np.array(config.lam, dtype=float)
    lambda_star = float(lam.max()) if lam.size else 0.0
    if lambda_star <= 0:
        raise InputValidationError("λ 至少需要一个正分量")
    confidence = consistent_set(gram, lam / lambda_star, lambda_star, config.n, config.d_scale)
    vertices = confidence.vertices()
    unscaled = confidence.unscaled.vertices()
    rows = [["scaled", *v.tolist()] for v in vertices] + [["unscaled", *v.tolist()] for v in unscaled]
    boundary = None
    if gram.p == 2:
        boundary = boundary_rows([("scaled", confidence.parallelogram), ("unscaled", confidence.unscaled)])
    return CommandOutput(
        report=make_report("consistent", config, {"lambda_star": lambda_star, **confidence.to_dict()}),
        table_header=["set", *[f"m_{j + 1}" for j in range(gram.p)]],
        table_rows=rows,
        boundary=boundary,
    )


def cmd_boundary(config: BoundaryConfig) -> CommandOutput:
    shapes = [(named.id, shape_from_dict(named.shape)) for named in config.shapes]
    rows = boundary_rows(shapes, config.n_points)
    return CommandOutput(
        report=make_report("boundary", config, {"shape_ids": [named.id for named in config.shapes], "n_rows": len(rows)}),
        table_header=BOUNDARY_HEADER,
        table_rows=rows,
    )


def boundary_config_from_report(path: Path) -> BoundaryConfig:
    """从 ellipse/shape 报告中取出 shapes 字段"""
    report = RunReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
    shapes = report.result.get("shapes")
    if not shapes:
        raise InputValidationError(f"报告 {path} 中没有 shapes 字段")
    return BoundaryConfig(shapes=[{"id": key, "shape": value} for key, value in shapes.items()])


# ---------------------------------------------------------------------------
# 调度
# ---------------------------------------------------------------------------

COMMANDS: dict[str, tuple[type[RunConfig], Callable[[Any], CommandOutput]]] = {
    "ellipse": (EllipseConfig, cmd_ellipse),
    "shape": (ShapeConfig, cmd_shape),
    "coverage": (CoverageConfig, cmd_coverage),
    "simulate": (SimulateConfig, cmd_simulate),
    "consistent": (ConsistentConfig, cmd_consistent),
    "boundary": (BoundaryConfig, cmd_boundary),
}


def _apply_globals(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    update = {}
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        update["threads"] = args.threads
    if not update:
        return config
    return type(config).model_validate({**config.model_dump(), **update})


def build_config(args: argparse.Namespace) -> RunConfig:
    try:
        return _build_config(args)
    except ValidationError as e:
        raise InputValidationError(f"{args.command} 配置无效: {e}") from e


def _build_config(args: argparse.Namespace) -> RunConfig:
    if args.command == "solve":
        lam = None
        if args.lam is not None:
            try:
                lam = [float(v) for v in args.lam.split(",") if v.strip()]
            except ValueError as e:
                raise InputValidationError(f"无法解析 lambda: {args.lam}") from e
        config: RunConfig = SolveConfig(X_csv=args.X, y_csv=args.y, lam=lam, sigma=args.sigma, ls=args.ls)
    elif args.command == "boundary" and getattr(args, "from_report", None):
        config = boundary_config_from_report(args.from_report)
    else:
        if args.config is None:
            raise InputValidationError(f"{args.command} 需要配置文件")
        config = load_config(args.config, COMMANDS[args.command][0])
    return _apply_globals(config, args)


def execute(config: RunConfig, command: str) -> CommandOutput:
    if command == "solve":
        return cmd_solve(config)
    return COMMANDS[command][1](config)


def _boundary_path(output: Path) -> Path:
    return output.with_name(f"{output.stem}_boundary.csv")


def write_command_output(output: CommandOutput, path: Optional[Path], fmt: str) -> None:
    if fmt == "csv":
        if output.table_header is None:
            raise InputValidationError("该子命令没有 CSV 输出")
        write_output(render_csv(output.table_header, output.table_rows or []), path)
    else:
        write_output(render_json(output.report), path)
    if output.boundary is not None and path is not None:
        write_output(render_csv(BOUNDARY_HEADER, output.boundary), _boundary_path(path))


def run_command(args: argparse.Namespace) -> int:
    """执行一个子命令并返回退出码"""
    try:
        config = build_config(args)
        output = execute(config, args.command)
        output_path = Path(args.output) if args.output else None
        write_command_output(output, output_path, args.format)
        if args.record:
            from src.utils.database import get_db_instance, initialize_database

            initialize_database()
            run_id = get_db_instance().record_run(
                args.command, json.loads(render_json(output.report)), output.headline
            )
            logger.info(f"运行已记录: {run_id}")
        return 0
    except ConfsetsError as e:
        logger.error(f"{args.command} 失败 ({type(e).__name__}): {e.message}")
        return e.exit_code
