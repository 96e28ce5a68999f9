import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.fft import dctn, idctn

from ..config import settings
from ..errors import ConfigError, PlacementError, StepRejected
from .grid import ComplexField, Grid, ScalarField

# 配置日志
logger = logging.getLogger(__name__)

FLAVORS = ("forced_gl", "pinned_gl")
BLOWUP_MODULUS = 2.0
PLACEMENT_SEPARATION = 8.0  # 以 ε 为单位


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 1.0
    beta: float = 0.0
    sigma: float = 1.0
    eps: float = 0.05
    lam: float = 1.0
    flavor: str = "forced_gl"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("params.alpha", "必须大于 0")
        if not self.sigma > 0:
            raise ConfigError("params.sigma", "必须大于 0")
        if not 0 < self.eps < 0.5:
            raise ConfigError("params.eps", "必须位于 (0, 1/2)")
        if abs(math.log(self.eps)) < 1.0:
            raise ConfigError("params.eps", "要求 |log ε| ≥ 1")
        if self.lam < 0:
            raise ConfigError("params.lam", "必须非负")
        if self.flavor not in FLAVORS:
            raise ConfigError("flavor", f"未知的方程类型 {self.flavor}")

    @property
    def log_eps(self) -> float:
        return abs(math.log(self.eps))

    @property
    def gamma(self) -> complex:
        """时间导数前的复系数 α + iβ|log ε|"""
        return complex(self.alpha, self.beta * self.log_eps)


@dataclass(frozen=True)
class ForcingCoefficients:
    """带外力 GL 方程的系数：漂移 h、λZ、势 f 以及非线性项权重"""

    h: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)  # (2, nx, ny)，已乘 λ
    f: np.ndarray = field(repr=False)
    weight: Optional[np.ndarray] = field(default=None, repr=False)
    grad_h: Tuple[np.ndarray, np.ndarray] = field(default=None, repr=False)

    @classmethod
    def build(cls, grid: Grid, h, Z, f, weight=None) -> "ForcingCoefficients":
        h = np.broadcast_to(np.asarray(h, dtype=float), grid.shape).copy()
        Z = np.broadcast_to(np.asarray(Z, dtype=float), (2,) + grid.shape).copy()
        f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape).copy()
        return cls(h=h, Z=Z, f=f, weight=weight, grad_h=grid.neumann_grad(h))

    @classmethod
    def none(cls, grid: Grid) -> "ForcingCoefficients":
        return cls.build(grid, 0.0, 0.0, 0.0)

    @classmethod
    def substituted(cls, b: ScalarField) -> "ForcingCoefficients":
        """v = u/√b 的方程：h = log b，Z = 0，f = Δ√b/√b，非线性项乘 b"""
        grid = b.grid
        sqrt_b = np.sqrt(b.data)
        return cls.build(grid, np.log(b.data), 0.0, grid.neumann_lap(sqrt_b) / sqrt_b, weight=b.data.copy())


@dataclass(frozen=True)
class SimState:
    t: float
    u: ComplexField
    params: ModelParams
    coeffs: Optional[ForcingCoefficients] = None
    b: Optional[ScalarField] = None  # 直接形式的钉扎方程

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def monitored_modulus(self) -> float:
        """|u|（钉扎方程取 |u|/√b），用于超调监控"""
        modulus = np.abs(self.u.data)
        if self.b is not None:
            modulus = modulus / np.sqrt(self.b.data)
        return float(np.max(modulus))


# ===== 右端项 =====
def _explicit_forced(u: np.ndarray, grid: Grid, coeffs: ForcingCoefficients, params: ModelParams) -> np.ndarray:
    ux, uy = grid.neumann_grad(u)
    weight = 1.0 if coeffs.weight is None else coeffs.weight
    hx, hy = coeffs.grad_h
    out = weight * u * (1.0 - np.abs(u) ** 2) / params.eps ** 2
    out = out + hx * ux + hy * uy
    out = out + 2j * params.log_eps * (coeffs.Z[0] * ux + coeffs.Z[1] * uy)
    return out + coeffs.f * u


def _explicit_pinned(u: np.ndarray, b: np.ndarray, eps: float) -> np.ndarray:
    return u * (b - np.abs(u) ** 2) / eps ** 2


def rhs_forced_gl(u: ComplexField, coeffs: ForcingCoefficients, params: ModelParams) -> ComplexField:
    """∂ₜu = [Δu + u(1-|u|²)/ε² + ∇h·∇u + 2i|log ε|Z·∇u + fu]/(α + iβ|log ε|)"""
    grid = u.grid
    total = grid.neumann_lap(u.data) + _explicit_forced(u.data, grid, coeffs, params)
    return ComplexField(grid, total / params.gamma)


def rhs_pinned_gl(u: ComplexField, b: ScalarField, alpha: float, beta: float, eps: float) -> ComplexField:
    """∂ₜu = [Δu + u(b-|u|²)/ε²]/(α + iβ|log ε|)"""
    grid = u.grid
    gamma = complex(alpha, beta * abs(math.log(eps)))
    total = grid.neumann_lap(u.data) + _explicit_pinned(u.data, b.data, eps)
    return ComplexField(grid, total / gamma)


def rhs(state: SimState) -> ComplexField:
    if state.b is not None:
        p = state.params
        return rhs_pinned_gl(state.u, state.b, p.alpha, p.beta, p.eps)
    return rhs_forced_gl(state.u, state.coeffs, state.params)


# ===== 时间推进 =====
@lru_cache(maxsize=32)
def _implicit_symbol(grid: Grid, dt: float, gamma: complex) -> np.ndarray:
    """(I - (dt/γ)L)⁻¹ 在 DCT-I 基下的对角元，L 为 Neumann 拉普拉斯"""
    kx = np.arange(grid.nx)
    ky = np.arange(grid.ny)
    eig_x = -(4.0 / grid.hx ** 2) * np.sin(np.pi * kx / (2 * (grid.nx - 1))) ** 2
    eig_y = -(4.0 / grid.hy ** 2) * np.sin(np.pi * ky / (2 * (grid.ny - 1))) ** 2
    eig = eig_x[:, None] + eig_y[None, :]
    return 1.0 / (1.0 - dt * eig / gamma)


def _solve_implicit(rhs_: np.ndarray, grid: Grid, dt: float, gamma: complex) -> np.ndarray:
    symbol = _implicit_symbol(grid, dt, gamma)
    spectrum = (dctn(rhs_.real, type=1) + 1j * dctn(rhs_.imag, type=1)) * symbol
    return idctn(spectrum.real, type=1) + 1j * idctn(spectrum.imag, type=1)


def default_dt(grid: Grid, params: ModelParams) -> float:
    h = min(grid.hx, grid.hy)
    return min(0.2 * params.eps ** 2, 0.25 * h ** 2 * abs(params.gamma) / params.alpha)


def step(state: SimState, dt: float) -> SimState:
    """一阶 IMEX：扩散隐式（复移位 Helmholtz，DCT-I 对角化），其余项显式"""
    grid = state.grid
    params = state.params
    u = state.u.data
    if state.b is not None:
        explicit = _explicit_pinned(u, state.b.data, params.eps)
    else:
        explicit = _explicit_forced(u, grid, state.coeffs, params)

    gamma = params.gamma
    u_next = _solve_implicit(u + dt * explicit / gamma, grid, float(dt), gamma)
    t_next = state.t + dt

    max_modulus = float(np.max(np.abs(u_next)))
    if not np.isfinite(max_modulus) or max_modulus > BLOWUP_MODULUS:
        logger.error(f"t={t_next:.6g} 时 max|u|={max_modulus:.4g}，时间步被拒绝")
        raise StepRejected(t_next, max_modulus)
    return replace(state, t=t_next, u=ComplexField(grid, u_next))


def evolve(state: SimState, horizon: float, dt: float) -> Iterator[Tuple[SimState, SimState]]:
    """逐步推进到 horizon，依次产出 (前一状态, 新状态)"""
    steps = int(round(horizon / dt))
    warned = False
    for _ in range(steps):
        new = step(state, dt)
        modulus = new.monitored_modulus
        if modulus > 1.0 + settings.overshoot_warn and not warned:
            # 混合流不满足极大值原理，只监控不截断
            logger.warning(f"t={new.t:.6g} 时 |u| 超调到 {modulus:.4f}")
            warned = True
        yield state, new
        state = new


# ===== 初值 =====
def check_placement(positions: Sequence[Sequence[float]], eps: float, grid: Grid) -> None:
    min_gap = PLACEMENT_SEPARATION * eps
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    for i, (x, y) in enumerate(pts):
        wall = min(x, grid.lx - x, y, grid.ly - y)
        if wall < min_gap:
            raise PlacementError(
                f"第 {i} 个涡旋距边界 {wall:.4g} < 8ε = {min_gap:.4g}",
                {"index": i, "distance": float(wall)},
            )
        for j in range(i):
            gap = float(np.hypot(*(pts[i] - pts[j])))
            if gap < min_gap:
                raise PlacementError(
                    f"涡旋 {j} 与 {i} 相距 {gap:.4g} < 8ε = {min_gap:.4g}",
                    {"pair": [j, i], "distance": gap},
                )


def make_well_prepared(
    positions: Sequence[Sequence[float]],
    degrees: Sequence[int],
    params: ModelParams,
    b: Optional[ScalarField],
    grid: Grid,
) -> ComplexField:
    """u = √b·∏ tanh(|x - aᵢ|/ε)·e^{i dᵢ θᵢ}；forced_gl 不乘 √b"""
    if len(positions) != len(degrees):
        raise PlacementError("涡旋位置与度数的个数不一致", {"positions": len(positions), "degrees": len(degrees)})
    for d in degrees:
        if d not in (-1, 1):
            raise PlacementError(f"涡旋度数只能是 ±1，收到 {d}", {"degree": d})
    check_placement(positions, params.eps, grid)

    X, Y = grid.mesh()
    u = np.ones(grid.shape, dtype=complex)
    for (ax, ay), d in zip(positions, degrees):
        dx, dy = X - ax, Y - ay
        u = u * np.tanh(np.hypot(dx, dy) / params.eps) * np.exp(1j * d * np.arctan2(dy, dx))
    if params.flavor == "pinned_gl" and b is not None:
        u = u * np.sqrt(b.data)
    return ComplexField(grid, u)
