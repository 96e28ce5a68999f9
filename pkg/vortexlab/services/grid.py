import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

# 配置日志
logger = logging.getLogger(__name__)

# 边的顺序固定：左、右、下、上（外法向见 NORMALS）
EDGES = ("left", "right", "bottom", "top")
NORMALS: Dict[str, Tuple[float, float]] = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}

SCALAR, VECTOR, COMPLEX = 0, 1, 2


@dataclass(frozen=True)
class Grid:
    """节点中心的均匀矩形网格，数组形状 (nx, ny)，第 0 轴为 x"""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise ValueError(f"网格每个方向至少 16 个节点，收到 {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"区域长度必须为正，收到 lx={self.lx}, ly={self.ly}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.lx, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.ly, self.ny)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    # ===== 求积权重 =====
    @property
    def wx(self) -> np.ndarray:
        return _trapezoid_weights(self.nx, self.hx)

    @property
    def wy(self) -> np.ndarray:
        return _trapezoid_weights(self.ny, self.hy)

    @property
    def weights(self) -> np.ndarray:
        """梯形法则的节点权重（即集中质量矩阵的对角线）"""
        return np.outer(self.wx, self.wy)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(self.weights * f))

    def edge_weights(self, edge: str) -> np.ndarray:
        return self.wy if edge in ("left", "right") else self.wx

    @property
    def boundary_weights(self) -> np.ndarray:
        """每个边界节点所占的边界长度（角点取两条半边之和）"""
        return self.edge_load({edge: np.ones(self._edge_length(edge)) for edge in EDGES})

    def _edge_length(self, edge: str) -> int:
        return self.ny if edge in ("left", "right") else self.nx

    # ===== 边界 =====
    @staticmethod
    def edge_values(f: np.ndarray, edge: str) -> np.ndarray:
        if edge == "left":
            return f[0, :]
        if edge == "right":
            return f[-1, :]
        if edge == "bottom":
            return f[:, 0]
        if edge == "top":
            return f[:, -1]
        raise KeyError(edge)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def edge_load(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        """把逐边的边界数据按梯形权重装配到边界节点上"""
        load = np.zeros(self.shape)
        for edge, data in values.items():
            weighted = self.edge_weights(edge) * np.asarray(data, dtype=float)
            if edge == "left":
                load[0, :] += weighted
            elif edge == "right":
                load[-1, :] += weighted
            elif edge == "bottom":
                load[:, 0] += weighted
            else:
                load[:, -1] += weighted
        return load

    def normal_flux_load(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        """边界节点上 X·ν 的装配量，角点各取两条边的贡献"""
        values = {}
        for edge in EDGES:
            n1, n2 = NORMALS[edge]
            values[edge] = n1 * self.edge_values(v1, edge) + n2 * self.edge_values(v2, edge)
        return self.edge_load(values)

    def tangential_derivative(self, f: np.ndarray, edge: str) -> np.ndarray:
        """沿边界逆时针方向（τ = ν⊥）的导数，只用边界节点上的值"""
        if edge == "bottom":
            return np.gradient(f[:, 0], self.hx, edge_order=2)
        if edge == "top":
            return -np.gradient(f[:, -1], self.hx, edge_order=2)
        if edge == "right":
            return np.gradient(f[-1, :], self.hy, edge_order=2)
        if edge == "left":
            return -np.gradient(f[0, :], self.hy, edge_order=2)
        raise KeyError(edge)

    def integrate_boundary(self, f: np.ndarray) -> float:
        return float(np.sum(self.edge_load({edge: self.edge_values(f, edge) for edge in EDGES})))

    def interior(self, band: int) -> Tuple[slice, slice]:
        """距边界至少 band 个节点的内部区域"""
        return (slice(band, self.nx - band), slice(band, self.ny - band))

    # ===== 差分算子（作用在数组上） =====
    def ddx(self, f: np.ndarray) -> np.ndarray:
        return np.gradient(f, self.hx, axis=0, edge_order=2)

    def ddy(self, f: np.ndarray) -> np.ndarray:
        return np.gradient(f, self.hy, axis=1, edge_order=2)

    def grad(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.ddx(f), self.ddy(f)

    def neumann_grad(self, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """齐次 Neumann 场的梯度：边界行上的法向分量取零"""
        fx, fy = self.grad(f)
        fx[0, :] = 0.0
        fx[-1, :] = 0.0
        fy[:, 0] = 0.0
        fy[:, -1] = 0.0
        return fx, fy

    def lap(self, f: np.ndarray) -> np.ndarray:
        return _second_difference(f, self.hx, axis=0) + _second_difference(f, self.hy, axis=1)

    def neumann_lap(self, f: np.ndarray) -> np.ndarray:
        """镜像鬼点的 Neumann 拉普拉斯，边界行为 2(f1 - f0)/h²"""
        return _neumann_second_difference(f, self.hx, axis=0) + _neumann_second_difference(f, self.hy, axis=1)

    def div(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        return self.ddx(v1) + self.ddy(v2)

    def curl(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        return self.ddx(v2) - self.ddy(v1)


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _second_difference(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = np.moveaxis(np.asarray(f), axis, 0)
    out = np.empty_like(g)
    out[1:-1] = g[2:] - 2.0 * g[1:-1] + g[:-2]
    # 二阶单侧格式 (2, -5, 4, -1)
    out[0] = 2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]
    out[-1] = 2.0 * g[-1] - 5.0 * g[-2] + 4.0 * g[-3] - g[-4]
    return np.moveaxis(out, 0, axis) / (h * h)


def _neumann_second_difference(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = np.moveaxis(np.asarray(f), axis, 0)
    out = np.empty_like(g)
    out[1:-1] = g[2:] - 2.0 * g[1:-1] + g[:-2]
    out[0] = 2.0 * (g[1] - g[0])
    out[-1] = 2.0 * (g[-2] - g[-1])
    return np.moveaxis(out, 0, axis) / (h * h)


# ===== 场容器 =====
@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    data: np.ndarray = field(repr=False)

    kind = SCALAR

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != self.grid.shape:
            raise ValueError(f"标量场形状 {data.shape} 与网格 {self.grid.shape} 不符")
        if not np.all(np.isfinite(data)):
            raise ValueError("标量场含有非有限值")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    data: np.ndarray = field(repr=False)  # 形状 (2, nx, ny)

    kind = VECTOR

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (2,) + self.grid.shape:
            raise ValueError(f"向量场形状 {data.shape} 与网格 {self.grid.shape} 不符")
        if not np.all(np.isfinite(data)):
            raise ValueError("向量场含有非有限值")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_components(cls, grid: Grid, v1: np.ndarray, v2: np.ndarray) -> "VectorField":
        return cls(grid, np.stack([v1, v2]))

    @property
    def x(self) -> np.ndarray:
        return self.data[0]

    @property
    def y(self) -> np.ndarray:
        return self.data[1]


@dataclass(frozen=True)
class ComplexField:
    grid: Grid
    data: np.ndarray = field(repr=False)

    kind = COMPLEX

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.shape != self.grid.shape:
            raise ValueError(f"复场形状 {data.shape} 与网格 {self.grid.shape} 不符")
        if not np.all(np.isfinite(data)):
            raise ValueError("复场含有非有限值")
        object.__setattr__(self, "data", data)


# ===== 场上的离散微积分 =====
def gradient(f: ScalarField) -> VectorField:
    return VectorField.from_components(f.grid, *f.grid.grad(f.data))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.grid.lap(f.data))


def divergence(X: VectorField) -> ScalarField:
    return ScalarField(X.grid, X.grid.div(X.x, X.y))


def curl(X: VectorField) -> ScalarField:
    return ScalarField(X.grid, X.grid.curl(X.x, X.y))


def perp(X: VectorField) -> VectorField:
    return VectorField.from_components(X.grid, -X.y, X.x)


def covariant_gradient(u: ComplexField, A: VectorField) -> Tuple[ComplexField, ComplexField]:
    """∇_A u = ∇u - iAu，逐分量使用与 gradient 相同的模板"""
    grid = u.grid
    ux, uy = grid.grad(u.data)
    return (
        ComplexField(grid, ux - 1j * A.x * u.data),
        ComplexField(grid, uy - 1j * A.y * u.data),
    )


def inner(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """逐点实内积 (a, c) = Re a Re c + Im a Im c"""
    return a.real * c.real + a.imag * c.imag


def inner_product(a: ComplexField, c: ComplexField) -> ScalarField:
    return ScalarField(a.grid, inner(a.data, c.data))


def inner_product_vector(a: ComplexField, X: Tuple[ComplexField, ComplexField]) -> VectorField:
    """(a, X) 对复向量 X 逐分量取实内积"""
    return VectorField.from_components(a.grid, inner(a.data, X[0].data), inner(a.data, X[1].data))


def integrate(f: ScalarField) -> float:
    return f.grid.integrate(f.data)


def integrate_boundary(f: ScalarField) -> float:
    return f.grid.integrate_boundary(f.data)
