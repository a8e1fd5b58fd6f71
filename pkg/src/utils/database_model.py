from sqlmodel import Field, SQLModel
from typing import Optional
import datetime
from src.utils.logger import get_module_logger

logger = get_module_logger("数据库模型")


class DB_Run(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)  # 数据库内部ID，主键
    run_id: str = Field(unique=True, index=True)  # 运行的唯一标识符
    subcommand: str = Field(index=True)  # 产生该记录的子命令或 API 路由
    seed: Optional[str] = Field(default=None)  # 64 位种子以字符串保存，避免 SQLite 有符号整数溢出
    config_json: str  # 完整配置（JSON）
    report_json: str  # 完整报告（JSON）
    headline: Optional[float] = Field(default=None)  # 主要数值，例如 k* 或最小覆盖概率
    created_at: datetime.datetime = Field(default_factory=datetime.datetime.now)  # 记录创建时间
