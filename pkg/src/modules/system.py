from fastapi import APIRouter
from pydantic import BaseModel
import datetime
import platform
import sys

import numpy as np
import psutil
import scipy

from src.utils.config import global_config
from src.utils.logger import get_module_logger

router = APIRouter()
logger = get_module_logger("系统API")


class HealthCheckResponse(BaseModel):
    status: str
    time: str


class VersionInfo(BaseModel):
    version: str
    schema_id: str
    python_version: str
    numpy_version: str
    scipy_version: str


class CurrentVersionResponse(BaseModel):
    status: str
    data: VersionInfo


class ResourceUsage(BaseModel):
    cpu_count: int
    cpu_usage_percent: float
    memory_total_mb: float
    memory_available_mb: float
    memory_percent: float
    default_threads: int


class ResourceUsageResponse(BaseModel):
    status: str
    data: ResourceUsage


@router.get("/system/health", response_model=HealthCheckResponse)
async def health_check():
    """
    检查后端服务的健康状态。
    """
    logger.info("收到健康检查请求")
    current_time = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return HealthCheckResponse(status="success", time=current_time)


@router.get("/system/version", response_model=CurrentVersionResponse)
async def get_current_version_info():
    """
    当前版本与报告格式标识，以及数值库版本（影响结果的逐位复现）
    """
    logger.info("收到获取当前版本信息请求")
    return CurrentVersionResponse(
        status="success",
        data=VersionInfo(
            version=global_config.version,
            schema_id=global_config.schema,
            python_version=platform.python_version(),
            numpy_version=np.__version__,
            scipy_version=scipy.__version__,
        ),
    )


@router.get("/system/resources", response_model=ResourceUsageResponse)
async def get_resource_usage():
    """
    蒙特卡洛任务可用的 CPU 与内存
    """
    mem = psutil.virtual_memory()
    usage = ResourceUsage(
        cpu_count=psutil.cpu_count(logical=True) or 1,
        cpu_usage_percent=psutil.cpu_percent(interval=None),
        memory_total_mb=round(mem.total / (1024 * 1024), 2),
        memory_available_mb=round(mem.available / (1024 * 1024), 2),
        memory_percent=mem.percent,
        default_threads=global_config.resolved_threads(),
    )
    logger.debug(f"资源: cpu={usage.cpu_usage_percent}%, mem={usage.memory_percent}%, platform={sys.platform}")
    return ResourceUsageResponse(status="success", data=usage)
