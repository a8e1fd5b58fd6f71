"""
二维示例：n=20，C = [[1, −0.5], [−0.5, 1]]，λ_{n,1} = λ_{n,2} = √n/2，σ = 1，α = 0.05

生成 X'X/n = C 的设计和一组响应，比较最小二乘与 Lasso 置信椭圆，
标定平移椭圆的凸包，并写出可直接作图的边界 CSV。

用法: python -m src.tools.worked_example --seed 7 --output-dir results/
"""

import argparse
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from src.modules.calibrate import CalibrationResult, LsComparison, calibrate_hull, compare_with_ls
from src.modules.coverage import MonteCarloConfig
from src.modules.model import LinearModel, TuningVector, gram_from_design
from src.modules.reports import render_csv, write_output
from src.modules.shapes import Ellipse
from src.modules.simulate import DesignFamily
from src.tools.boundary import BOUNDARY_HEADER, boundary_rows
from src.utils.logger import get_module_logger
from src.utils.rng import PURPOSE_NOISE, require_seed, substream

logger = get_module_logger("二维示例")

EXAMPLE_N = 20
EXAMPLE_C = np.array([[1.0, -0.5], [-0.5, 1.0]])
EXAMPLE_SIGMA = 1.0
EXAMPLE_ALPHA = 0.05
EXAMPLE_BETA = np.array([1.0, 0.0])


def example_tuning(n: int = EXAMPLE_N) -> TuningVector:
    return TuningVector.finite_sample(np.full(2, math.sqrt(n) / 2), n)


def example_model(seed: int, beta: np.ndarray = EXAMPLE_BETA) -> LinearModel:
    """设计按 seed 生成，响应 y = Xβ + ε 使用独立的噪声子流"""
    seed = require_seed(seed)
    X = DesignFamily(EXAMPLE_C, EXAMPLE_SIGMA, seed).design(EXAMPLE_N)
    eps = substream(seed, PURPOSE_NOISE, 0).standard_normal(EXAMPLE_N)
    return LinearModel(X, X @ beta + EXAMPLE_SIGMA * eps, EXAMPLE_SIGMA)


@dataclass
class WorkedExample:
    model: LinearModel
    comparison: LsComparison
    hull: Optional[CalibrationResult]

    def boundary_csv(self, n_points: Optional[int] = None) -> str:
        gram = gram_from_design(self.model)
        shapes = [
            ("ls", Ellipse(gram.C, self.comparison.k_ls)),
            ("lasso", Ellipse(gram.C, self.comparison.k_lasso)),
        ]
        if self.hull is not None:
            shapes.append(("hull", self.hull.shape))
        return render_csv(BOUNDARY_HEADER, boundary_rows(shapes, n_points))

    def parameter_space_csv(self, n_points: Optional[int] = None) -> str:
        """以各自估计量为中心的参数空间置信椭圆"""
        shapes = [("ls", self.comparison.ls_ellipse), ("lasso", self.comparison.lasso_ellipse)]
        return render_csv(BOUNDARY_HEADER, boundary_rows(shapes, n_points))


def run_worked_example(seed: int, mc_config: Optional[MonteCarloConfig] = None, with_hull: bool = True) -> WorkedExample:
    model = example_model(seed)
    tuning = example_tuning()
    comparison = compare_with_ls(model, tuning, EXAMPLE_ALPHA)
    hull = None
    if with_hull:
        mc_config = mc_config or MonteCarloConfig(n_samples=200_000, seed=seed)
        hull = calibrate_hull(gram_from_design(model), tuning, EXAMPLE_SIGMA, EXAMPLE_ALPHA, mc_config)
    return WorkedExample(model, comparison, hull)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="二维示例：最小二乘、Lasso 椭圆与凸包形状")
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--output-dir", type=Path, default=Path("results"))
    parser.add_argument("--no-hull", action="store_true", help="跳过凸包标定")
    args = parser.parse_args(argv)

    example = run_worked_example(args.seed, with_hull=not args.no_hull)
    comparison = example.comparison
    logger.info(f"k*_LS = {comparison.k_ls:.6f}, k*_Lasso = {comparison.k_lasso:.6f}")
    if example.hull is not None:
        logger.info(f"k†_hull = {example.hull.k_star:.6f}")
    write_output(example.boundary_csv(), args.output_dir / "shapes_boundary.csv")
    write_output(example.parameter_space_csv(), args.output_dir / "parameter_space_boundary.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
