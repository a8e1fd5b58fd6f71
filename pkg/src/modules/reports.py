"""
运行配置与报告的 pydantic 模型，以及 JSON / CSV 输出
"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.modules.coverage import MonteCarloConfig
from src.modules.model import (
    GramData,
    LinearModel,
    TuningVector,
    gram_from_design,
    load_matrix_csv,
    load_vector_csv,
)
from src.modules.shapes import ConfidenceShape, shape_from_dict
from src.modules.simulate import DEFAULT_MAGNITUDES, DesignFamily, GridSpec
from src.utils.config import global_config
from src.utils.errors import InputValidationError
from src.utils.logger import get_module_logger

logger = get_module_logger("报告")


# ---------------------------------------------------------------------------
# 配置
# ---------------------------------------------------------------------------


def build_shape(data: dict[str, Any], gram: GramData) -> ConfidenceShape:
    """由字典构造形状；椭圆、凸包与平行四边形未给出 C_shape 时使用设计的 C"""
    data = dict(data)
    if data.get("tag") in ("ellipse", "parallelogram", "hull") and "C_shape" not in data:
        data["C_shape"] = gram.C.tolist()
    return shape_from_dict(data)


class DesignSpec(BaseModel):
    """设计矩阵来源：X.csv（可附 y.csv），或极限矩阵 C 加样本量 n（按 design_seed 生成 X'X/n = C 的设计）"""

    C: Optional[list[list[float]]] = None
    n: Optional[int] = Field(default=None, ge=1)
    X_csv: Optional[str] = None
    y_csv: Optional[str] = None
    design_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.C is None) == (self.X_csv is None):
            raise ValueError("design 需要且只能给出 C 或 X_csv 之一")
        if self.C is not None and self.n is None:
            raise ValueError("给出 C 时必须同时给出 n")
        return self

    def model(self, sigma: float) -> LinearModel:
        if self.X_csv is not None:
            X = load_matrix_csv(self.X_csv)
            y = load_vector_csv(self.y_csv) if self.y_csv else np.zeros(X.shape[0])
            return LinearModel(X, y, sigma)
        return DesignFamily(np.array(self.C), sigma, self.design_seed).template(self.n)

    def gram(self) -> GramData:
        if self.C is not None:
            return GramData.from_matrix(np.array(self.C))
        return gram_from_design(self.model(1.0))

    def sample_size(self) -> int:
        if self.n is not None:
            return self.n
        return load_matrix_csv(self.X_csv).shape[0]


class TuningSpec(BaseModel):
    """lam 为有限样本的 λ_n，或保守极限下的 λ = lim λ_n/√n"""

    regime: Literal["finite_sample", "conservative"] = "finite_sample"
    lam: list[float]

    def build(self, n: int) -> TuningVector:
        if self.regime == "conservative":
            return TuningVector.conservative(self.lam)
        return TuningVector.finite_sample(self.lam, n)


class MonteCarloSpec(BaseModel):
    n_samples: Optional[int] = Field(default=None, ge=1000)
    chunk_size: Optional[int] = Field(default=None, ge=1)

    def build(self, seed: Optional[int], threads: Optional[int], default_samples: Optional[int] = None) -> MonteCarloConfig:
        return MonteCarloConfig(
            n_samples=self.n_samples or default_samples or global_config.mc_samples,
            seed=seed,
            chunk_size=self.chunk_size or global_config.mc_chunk_size,
            threads=threads,
        )


class RunConfig(BaseModel):
    """所有子命令配置的公共部分"""

    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    threads: Optional[int] = Field(default=None, ge=1)


class SolveConfig(RunConfig):
    X_csv: str
    y_csv: str
    lam: Optional[list[float]] = None
    sigma: float = Field(default=1.0, gt=0)
    ls: bool = False

    @model_validator(mode="after")
    def _lambda_or_ls(self):
        if self.lam is None and not self.ls:
            raise ValueError("需要给出 lambda，或使用最小二乘模式")
        return self


class EllipseConfig(RunConfig):
    design: DesignSpec
    tuning: TuningSpec
    sigma: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=0.05, gt=0, lt=1)


class ShapeConfig(EllipseConfig):
    mc: MonteCarloSpec = Field(default_factory=MonteCarloSpec)
    tol: Optional[float] = Field(default=None, gt=0)
    volume_draws: int = Field(default=1_000_000, ge=1000)
    verify_samples: Optional[int] = Field(default=None, ge=1000)


class CoverageConfig(RunConfig):
    design: DesignSpec
    tuning: TuningSpec
    sigma: float = Field(default=1.0, gt=0)
    shape: dict[str, Any]
    mc: MonteCarloSpec = Field(default_factory=MonteCarloSpec)

    def build_shape(self, gram: GramData) -> ConfidenceShape:
        return build_shape(self.shape, gram)


class GridConfig(BaseModel):
    magnitudes: list[float] = Field(default_factory=lambda: list(DEFAULT_MAGNITUDES))
    mode: Literal["product", "diagonal"] = "product"
    points: Optional[list[list[float]]] = None

    def build(self) -> GridSpec:
        points = tuple(tuple(p) for p in self.points) if self.points is not None else None
        return GridSpec(tuple(self.magnitudes), self.mode, points)


class SimulateConfig(RunConfig):
    experiment: Literal["profile", "coverage", "selection", "consistent", "conservative_selection"] = "profile"
    design: DesignSpec
    tuning: Optional[TuningSpec] = None
    sigma: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    shape: Optional[dict[str, Any]] = None
    grid: GridConfig = Field(default_factory=GridConfig)
    beta: Optional[list[float]] = None
    reps: int = Field(default=10_000, ge=1)
    # 渐近实验
    lambda_exponent: Optional[float] = None
    lambda_coefficients: Optional[list[float]] = None
    d_scale: float = Field(default=1.5, gt=0)
    n_list: list[int] = Field(default_factory=list)
    noise: Literal["gaussian", "two_point"] = "gaussian"
    local_grid: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _noise_only_asymptotic(self):
        if self.noise != "gaussian" and self.experiment != "consistent":
            raise ValueError("两点噪声只用于一致调参实验，有限样本实验必须使用高斯噪声")
        return self


class ConsistentConfig(RunConfig):
    C: list[list[float]]
    lam: list[float]
    n: int = Field(ge=1)
    d_scale: float = Field(default=1.5, gt=0)


class NamedShape(BaseModel):
    id: str
    shape: dict[str, Any]


class BoundaryConfig(RunConfig):
    shapes: list[NamedShape]
    n_points: Optional[int] = Field(default=None, ge=8)


# ---------------------------------------------------------------------------
# 报告
# ---------------------------------------------------------------------------


class RunReport(BaseModel):
    """每份报告都带有 schema 标识与完整配置（含种子）"""

    model_config = ConfigDict(populate_by_name=True)

    schema_id: Literal["confsets/v1"] = Field(default="confsets/v1", alias="schema")
    version: str = Field(default_factory=lambda: global_config.version)
    subcommand: str
    seed: Optional[int] = None
    config: dict[str, Any]
    result: dict[str, Any]


def to_builtin(value: Any) -> Any:
    """递归转换 numpy 标量与数组为 Python 内置类型"""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, BaseModel):
        return to_builtin(value.model_dump(by_alias=True))
    return value


def make_report(subcommand: str, config: RunConfig, result: dict[str, Any]) -> RunReport:
    return RunReport(
        subcommand=subcommand,
        seed=config.seed,
        config=to_builtin(config.model_dump(mode="json")),
        result=to_builtin(result),
    )


def render_json(report: RunReport) -> str:
    """序列化并重新校验；不含时间戳，同一输入逐字节相同"""
    text = json.dumps(report.model_dump(by_alias=True), ensure_ascii=False, indent=2, allow_nan=False) + "\n"
    RunReport.model_validate_json(text)
    return text


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(_format_cell(v) for v in value)
    return str(value)


def render_csv(header: list[str], rows: list[list[Any]]) -> str:
    """逗号分隔、'.' 小数点、LF 换行、带表头"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue()


def write_output(text: str, path: Optional[Union[str, Path]]) -> None:
    if path is None:
        print(text, end="")
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    logger.info(f"已写入 {path}")


def load_config(path: Union[str, Path], model: type[RunConfig]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise InputValidationError(f"配置文件不存在: {path}")
    try:
        return model.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise InputValidationError(f"配置文件 {path} 无效: {e}") from e
