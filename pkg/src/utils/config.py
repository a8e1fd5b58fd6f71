import os
from pathlib import Path
from typing import Any, Optional

import psutil
import tomlkit
from dotenv import load_dotenv

# 项目根目录（src/utils 的上两级）
_ROOT_DIR = Path(__file__).resolve().parent.parent.parent
_CONFIG_FILE = _ROOT_DIR / "config.toml"
_ENV_PREFIX = "CONFSETS_"

# toml 分节 -> Config 字段
_SECTION_FIELDS = {
    "server": {"host": "server_host", "port": "server_port", "api_prefix": "api_prefix"},
    "debug": {"level": "debug_level"},
    "monte_carlo": {
        "n_samples": "mc_samples",
        "hull_samples": "hull_mc_samples",
        "chunk_size": "mc_chunk_size",
        "max_chunk_elements": "max_chunk_elements",
        "threads": "threads",
    },
    "solver": {"max_iter": "solver_max_iter", "limit_tol": "limit_tol"},
    "shapes": {
        "directions_2d": "hull_directions_2d",
        "directions_nd": "hull_directions_nd",
        "boundary_points": "boundary_points",
        "condition_draws": "condition_max_draws",
    },
    "calibrate": {"coverage_tol": "coverage_tol", "max_bisections": "max_bisections"},
}


class Config:
    # 默认值，可被 config.toml 与 CONFSETS_* 环境变量覆盖
    version: str = "0.1.0"
    schema: str = "confsets/v1"
    server_host: str = "localhost"
    server_port: int = 23456
    debug_level: str = "INFO"
    api_prefix: str = "/api/v1"

    # 符号向量枚举上限（2^p）与凸包形状上限
    max_dim: int = 20
    hull_max_dim: int = 8

    mc_samples: int = 1_000_000
    hull_mc_samples: int = 200_000
    mc_chunk_size: int = 65_536
    max_chunk_elements: int = 4_194_304
    threads: int = 0  # 0 表示使用全部逻辑核

    solver_max_iter: int = 100_000
    limit_tol: float = 1e-9

    hull_directions_2d: int = 720
    hull_directions_nd: int = 10_000
    boundary_points: int = 512
    condition_max_draws: int = 1_000_000

    coverage_tol: float = 0.002
    max_bisections: int = 60

    def __init__(self, overrides: Optional[dict[str, Any]] = None):
        for key, value in (overrides or {}).items():
            if not hasattr(type(self), key):
                raise KeyError(f"未知配置项: {key}")
            setattr(self, key, type(getattr(type(self), key))(value))

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "Config":
        """读取 config.toml 与环境变量，返回配置对象"""
        load_dotenv(_ROOT_DIR / ".env")
        overrides: dict[str, Any] = {}
        config_path = path or _CONFIG_FILE
        if config_path.exists():
            document = tomlkit.parse(config_path.read_text(encoding="utf-8"))
            for section, fields in _SECTION_FIELDS.items():
                table = document.get(section, {})
                for toml_key, field in fields.items():
                    if toml_key in table:
                        overrides[field] = table[toml_key].unwrap() if hasattr(table[toml_key], "unwrap") else table[toml_key]
        for field in cls.__annotations__:
            env_value = os.environ.get(f"{_ENV_PREFIX}{field.upper()}")
            if env_value is not None:
                overrides[field] = env_value
        return cls(overrides)

    def resolved_threads(self, threads: Optional[int] = None) -> int:
        """线程数：显式参数优先，其次配置，最后为逻辑核数"""
        chosen = threads if threads else self.threads
        if not chosen:
            chosen = psutil.cpu_count(logical=True) or 1
        return max(1, int(chosen))

    def as_dict(self) -> dict[str, Any]:
        return {field: getattr(self, field) for field in type(self).__annotations__}


global_config = Config.load()
