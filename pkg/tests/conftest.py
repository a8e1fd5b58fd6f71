"""
测试环境：关闭文件日志，运行记录库放到临时目录。
环境变量必须在导入 src 之前设置，日志与数据库引擎在导入时读取。
"""

import os
import tempfile
from pathlib import Path

_TMP = Path(tempfile.mkdtemp(prefix="confsets-tests-"))
os.environ.setdefault("CONFSETS_FILE_LOGS", "0")
os.environ.setdefault("CONFSETS_DB_URL", f"sqlite:///{_TMP / 'runs.db'}")
os.environ.setdefault("LOGS_DIR", str(_TMP / "logs"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import settings  # noqa: E402

settings.register_profile("confsets", max_examples=50, deadline=None)
settings.load_profile("confsets")

EXAMPLE_C = np.array([[1.0, -0.5], [-0.5, 1.0]])


@pytest.fixture
def example_gram():
    from src.modules.model import GramData

    return GramData.from_matrix(EXAMPLE_C)


@pytest.fixture
def example_tuning():
    from src.modules.model import TuningVector

    n = 20
    return TuningVector.finite_sample(np.full(2, np.sqrt(n) / 2), n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
