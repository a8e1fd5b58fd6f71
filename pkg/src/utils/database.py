import json
import os
import sys
from rich.traceback import install
from sqlmodel import create_engine, SQLModel, Session, select
from typing import Optional

from src.utils.database_model import DB_Run
from src.utils.generate_run_id import generate_run_id
from src.utils.logger import get_module_logger

install(extra_lines=3)

logger_db = get_module_logger("数据库")


def get_resource_path(relative_path):
    """获取资源文件的绝对路径，支持PyInstaller打包环境"""
    if hasattr(sys, "_MEIPASS"):
        base_path = os.path.dirname(sys.executable)
    else:
        base_path = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
    return os.path.join(base_path, relative_path)


# 数据库文件路径，可用 CONFSETS_DB_URL 指向其他位置（测试中使用内存库）
_DB_DIR = get_resource_path("data")
_DB_FILE = os.path.join(_DB_DIR, "confsets.db")


def _make_engine(url: Optional[str] = None):
    url = url or os.environ.get("CONFSETS_DB_URL")
    if url is None:
        os.makedirs(_DB_DIR, exist_ok=True)
        url = f"sqlite:///{_DB_FILE}"
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, echo=False, connect_args=connect_args)


engine = _make_engine()


def create_db_and_tables(engine_to_use=None):
    """创建数据库和所有在 SQLModel 元数据中定义的表。"""
    SQLModel.metadata.create_all(engine_to_use or engine)


class Database:
    """运行记录表 DB_Run 的读写"""

    def __init__(self, engine_to_use):
        self.engine = engine_to_use

    def record_run(self, subcommand: str, report: dict, headline: Optional[float] = None) -> str:
        config_json = json.dumps(report.get("config", {}), sort_keys=True, ensure_ascii=False)
        run_id = generate_run_id(subcommand, config_json)
        seed = report.get("seed")
        row = DB_Run(
            run_id=run_id,
            subcommand=subcommand,
            seed=None if seed is None else str(seed),
            config_json=config_json,
            report_json=json.dumps(report, ensure_ascii=False),
            headline=headline,
        )
        with Session(self.engine) as session:
            session.add(row)
            session.commit()
        logger_db.info(f"已记录运行 {run_id}")
        return run_id

    def list_runs(self, subcommand: Optional[str] = None, limit: int = 100) -> list[DB_Run]:
        with Session(self.engine) as session:
            statement = select(DB_Run)
            if subcommand:
                statement = statement.where(DB_Run.subcommand == subcommand)
            statement = statement.order_by(DB_Run.id.desc()).limit(limit)
            return list(session.exec(statement).all())

    def get_run(self, run_id: str) -> Optional[DB_Run]:
        with Session(self.engine) as session:
            statement = select(DB_Run).where(DB_Run.run_id == run_id)
            return session.exec(statement).first()


_db_instance: Optional[Database] = None


def get_db_instance() -> Database:
    """获取全局数据库实例。如果不存在则创建。"""
    global _db_instance
    if _db_instance is None:
        _db_instance = Database(engine)
    return _db_instance


def initialize_database():
    """初始化数据库并创建表（如果它们尚不存在）。"""
    create_db_and_tables()
    logger_db.info("数据库初始化完成，表已创建（如果不存在）。")
