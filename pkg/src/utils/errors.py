"""
统一异常体系

每个异常类携带命令行退出码；HTTP 层据此映射为对应的状态码。
"""

from typing import Optional


class ConfsetsError(Exception):
    """所有置信集计算错误的基类"""

    exit_code: int = 1
    http_status: int = 500

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class InputValidationError(ConfsetsError):
    """输入参数不合法"""

    exit_code = 2
    http_status = 422


class DataFormatError(InputValidationError):
    """CSV 等输入文件格式错误，记录出错行号（从 1 开始）"""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        location = ""
        if path is not None:
            location += f"{path}"
        if line is not None:
            location += f" 第 {line} 行"
        super().__init__(f"{location.strip()}: {message}" if location else message)
        self.line = line
        self.path = path


class SingularDesignError(InputValidationError):
    """设计矩阵秩亏或接近奇异"""


class DimensionError(InputValidationError):
    """维度超出可枚举范围"""


class WrongRegimeError(InputValidationError):
    """调参机制与操作不匹配"""


class DomainError(InputValidationError, ValueError):
    """数学函数的定义域错误"""


class SolverConvergenceError(ConfsetsError):
    """坐标下降在迭代上限内未收敛"""

    exit_code = 3
    http_status = 500

    def __init__(self, message: str, iterations: int = 0, max_violation: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.max_violation = max_violation


class EmptyShapeError(ConfsetsError):
    """拒绝采样未能在形状内找到点"""

    exit_code = 4
    http_status = 422


class CalibrationBudgetError(ConfsetsError):
    """二分校准无法在蒙特卡洛噪声之上区分覆盖率"""

    exit_code = 5
    http_status = 500


class RunNotFoundError(InputValidationError):
    """运行记录不存在"""

    http_status = 404
