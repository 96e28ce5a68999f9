import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import sympy
from scipy.interpolate import RectBivariateSpline

from ..errors import ConfigError
from .expressions import X, Y, Expression
from .grid import Grid, ScalarField

# 配置日志
logger = logging.getLogger(__name__)

KINDS = ("constant", "gaussian_well", "multi_well", "sampled", "expression")


@dataclass(frozen=True)
class Well:
    center: Tuple[float, float]
    depth: float  # c ∈ (0, 1)
    width: float

    def factor(self) -> sympy.Expr:
        x0, y0 = self.center
        r2 = (X - x0) ** 2 + (Y - y0) ** 2
        return 1 - sympy.Float(self.depth) * sympy.exp(-r2 / sympy.Float(self.width) ** 2)


@dataclass(frozen=True)
class PinningLandscape:
    """钉扎势 b(x)：闭式（sympy 表达式）或网格采样"""

    kind: str
    b_expr: Optional[Expression] = None
    sampled: Optional[ScalarField] = field(default=None, repr=False)
    wells: Tuple[Well, ...] = ()

    @property
    def closed_form(self) -> bool:
        return self.b_expr is not None

    @property
    def log_b(self) -> Expression:
        if self.b_expr is None:
            raise ConfigError("landscape.kind", "采样钉扎势没有闭式 log b")
        return Expression(f"log({self.b_expr.text})", sympy.log(self.b_expr.expr))

    def realize(self, grid: Grid) -> ScalarField:
        """在网格上取值并检查 0 < inf b ≤ sup b < ∞"""
        if self.b_expr is not None:
            values = self.b_expr(*grid.mesh())
        else:
            values = _resample(self.sampled, grid)
        if not np.all(np.isfinite(values)) or np.min(values) <= 0.0:
            raise ConfigError("landscape", f"b 必须处处为正且有限，最小值 {np.min(values):.4g}")
        return ScalarField(grid, values)


def constant_landscape(value: float = 1.0) -> PinningLandscape:
    return PinningLandscape("constant", Expression(repr(float(value)), sympy.Float(value)))


def gaussian_well(center: Sequence[float], depth: float, width: float) -> PinningLandscape:
    """b = 1 - c·exp(-|x - x₀|²/w²)"""
    well = Well((float(center[0]), float(center[1])), float(depth), float(width))
    return PinningLandscape("gaussian_well", Expression("gaussian_well", well.factor()), wells=(well,))


def multi_well(wells: Sequence[Well]) -> PinningLandscape:
    """若干高斯阱因子的乘积"""
    expr = sympy.Integer(1)
    for well in wells:
        expr = expr * well.factor()
    return PinningLandscape("multi_well", Expression("multi_well", expr), wells=tuple(wells))


def expression_landscape(b_expr: Expression) -> PinningLandscape:
    return PinningLandscape("expression", b_expr)


def sampled_landscape(b: ScalarField) -> PinningLandscape:
    return PinningLandscape("sampled", sampled=b)


def _resample(field_: ScalarField, grid: Grid) -> np.ndarray:
    if field_.grid == grid:
        return field_.data.copy()
    src = field_.grid
    if abs(src.lx - grid.lx) > 1e-12 or abs(src.ly - grid.ly) > 1e-12:
        raise ConfigError("landscape.path", "采样钉扎势的区域尺寸与运行网格不一致")
    logger.info(f"采样钉扎势从 {src.nx}x{src.ny} 双三次插值到 {grid.nx}x{grid.ny}")
    spline = RectBivariateSpline(src.x, src.y, field_.data, kx=3, ky=3)
    return spline(grid.x, grid.y)
