"""
p=2 形状的边界折线，输出为 CSV 行 (x, y, shape_id)
"""

from typing import Optional, Sequence

from src.modules.shapes import ConfidenceShape, HullOfShiftedEllipses, shape_boundary
from src.utils.errors import DimensionError
from src.utils.logger import get_module_logger

logger = get_module_logger("边界工具")

BOUNDARY_HEADER = ["x", "y", "shape_id"]
CENTER_ID = "center"


def boundary_rows(named_shapes: Sequence[tuple[str, ConfidenceShape]], n_points: Optional[int] = None) -> list[list]:
    """
    每个形状一条闭合折线；凸包额外输出其平移椭圆的中心（shape_id 为 "center"）。
    """
    rows: list[list] = []
    centers: list[tuple[float, float]] = []
    for shape_id, shape in named_shapes:
        if shape.p != 2:
            raise DimensionError(f"形状 {shape_id} 的维度为 {shape.p}，边界折线只支持 p=2")
        for x, y in shape_boundary(shape, n_points):
            rows.append([float(x), float(y), shape_id])
        if isinstance(shape, HullOfShiftedEllipses):
            for x, y in shape.centers():
                if (float(x), float(y)) not in centers:
                    centers.append((float(x), float(y)))
    rows.extend([x, y, CENTER_ID] for x, y in centers)
    logger.debug(f"生成 {len(named_shapes)} 条边界折线、{len(centers)} 个中心点")
    return rows
