import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RectBivariateSpline

from ..errors import NonMonotoneVerdicts, OutOfDomain
from .expressions import Expression, constant
from .grid import Grid, ScalarField, VectorField

# 配置日志
logger = logging.getLogger(__name__)

LAW_FORMS = ("solved", "potential", "pinning_only")
STOP_REASONS = ("collision", "exit", "horizon")


# ===== 力场 =====
class ForceLandscape:
    """极限律所需的 Z、∇log b 在任意点上的取值，points 形状 (n, 2)"""

    def Z(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def Z_perp(self, points: np.ndarray) -> np.ndarray:
        z = self.Z(points)
        return np.stack([-z[:, 1], z[:, 0]], axis=1)

    def grad_log_b(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_b(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ClosedFormForces(ForceLandscape):
    """闭式 log b 与 Z，梯度由 sympy 符号求导"""

    def __init__(self, log_b: Expression, Z1: Optional[Expression] = None, Z2: Optional[Expression] = None):
        self._log_b = log_b
        self._dlog = (log_b.diff("x"), log_b.diff("y"))
        self._Z = (Z1 or constant(0.0), Z2 or constant(0.0))

    def Z(self, points):
        return np.stack([self._Z[0](points[:, 0], points[:, 1]), self._Z[1](points[:, 0], points[:, 1])], axis=1)

    def grad_log_b(self, points):
        return np.stack([self._dlog[0](points[:, 0], points[:, 1]), self._dlog[1](points[:, 0], points[:, 1])], axis=1)

    def log_b(self, points):
        return self._log_b(points[:, 0], points[:, 1])


class GriddedForces(ForceLandscape):
    """网格上的 log b 与 Z，用双三次样条插值"""

    def __init__(self, grid: Grid, log_b: np.ndarray, Z: np.ndarray):
        self.grid = grid
        self._log_b = RectBivariateSpline(grid.x, grid.y, log_b, kx=3, ky=3)
        self._Z = (
            RectBivariateSpline(grid.x, grid.y, Z[0], kx=3, ky=3),
            RectBivariateSpline(grid.x, grid.y, Z[1], kx=3, ky=3),
        )

    @classmethod
    def from_fields(cls, b: ScalarField, Z: VectorField) -> "GriddedForces":
        return cls(b.grid, np.log(b.data), Z.data)

    def Z(self, points):
        return np.stack([s.ev(points[:, 0], points[:, 1]) for s in self._Z], axis=1)

    def grad_log_b(self, points):
        px, py = points[:, 0], points[:, 1]
        return np.stack([self._log_b.ev(px, py, dx=1), self._log_b.ev(px, py, dy=1)], axis=1)

    def log_b(self, points):
        return self._log_b.ev(points[:, 0], points[:, 1])


class PotentialForces(GriddedForces):
    """由 φ₀、h₀ 给出 Z⊥ = (σ∇⊥φ₀ + ∇h₀)/b，不经过 ψ₀ 与 X₀"""

    def __init__(self, b: ScalarField, phi0: ScalarField, h0: ScalarField, sigma: float, lam: float = 1.0):
        grid = b.grid
        phi_x, phi_y = grid.grad(phi0.data)
        h_x, h_y = grid.grad(h0.data)
        z_perp = np.stack([
            lam * (-sigma * phi_y + h_x) / b.data,
            lam * (sigma * phi_x + h_y) / b.data,
        ])
        # Z = -(Z⊥)⊥
        Z = np.stack([z_perp[1], -z_perp[0]])
        super().__init__(grid, np.log(b.data), Z)


# ===== ODE 系统 =====
@dataclass(frozen=True)
class OdeSystem:
    degrees: Tuple[int, ...]
    forces: ForceLandscape
    alpha: float = 1.0
    beta: float = 0.0
    lam: float = 1.0
    lx: float = 1.0
    ly: float = 1.0
    form: str = "solved"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha 必须大于 0")
        if self.form not in LAW_FORMS:
            raise ValueError(f"未知的极限律形式 {self.form}")

    @property
    def n(self) -> int:
        return len(self.degrees)

    @property
    def stopping_radius(self) -> float:
        return 1e-3 * min(self.lx, self.ly)

    def inside(self, points: np.ndarray) -> bool:
        return bool(np.all((points[:, 0] >= 0) & (points[:, 0] <= self.lx) & (points[:, 1] >= 0) & (points[:, 1] <= self.ly)))


@dataclass
class OdeSolution:
    times: np.ndarray
    positions: np.ndarray  # (nt, n, 2)
    degrees: Tuple[int, ...]
    T_star: float
    stop_reason: str
    involved: Tuple[int, ...] = ()

    def sample(self, t: float) -> np.ndarray:
        """线性插值到时刻 t（只在已积分区间内）"""
        t = float(np.clip(t, self.times[0], self.times[-1]))
        return np.stack([
            np.stack([np.interp(t, self.times, self.positions[:, i, k]) for k in range(2)])
            for i in range(len(self.degrees))
        ])


def _perp(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[:, 1], v[:, 0]], axis=1)


def ode_rhs(positions: np.ndarray, system: OdeSystem) -> np.ndarray:
    """ȧᵢ = α/(α²+β²)(-2dᵢλZ⊥ - ∇log b) - β/(α²+β²)(2λZ - dᵢ∇⊥log b)"""
    points = np.asarray(positions, dtype=float).reshape(-1, 2)
    if not system.inside(points):
        raise OutOfDomain("涡旋位置离开区域", {"positions": points.tolist()})

    d = np.asarray(system.degrees, dtype=float)[:, None]
    alpha, beta = system.alpha, system.beta
    c = alpha ** 2 + beta ** 2
    g = system.forces.grad_log_b(points)
    if system.form == "pinning_only":
        return (alpha * (-g) - beta * (-d * _perp(g))) / c

    z_perp = system.lam * system.forces.Z_perp(points)
    z = -_perp(z_perp)
    return (alpha * (-2.0 * d * z_perp - g) - beta * (2.0 * z - d * _perp(g))) / c


def velocity_bound(alpha: float, beta: float, lam: float, z_sup: float, grad_log_b_sup: float) -> float:
    """ȧ 的上界，用于 PDE 侧跟踪门限"""
    return (alpha + abs(beta)) / (alpha ** 2 + beta ** 2) * (2.0 * lam * z_sup + grad_log_b_sup)


def _distances(points: np.ndarray, system: OdeSystem) -> Tuple[np.ndarray, np.ndarray]:
    n = len(points)
    walls = np.minimum.reduce([points[:, 0], system.lx - points[:, 0], points[:, 1], system.ly - points[:, 1]])
    pairs = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            pairs[i, j] = np.hypot(*(points[i] - points[j]))
    return walls, pairs


def _first_event(p0, p1, t0, dt, system) -> Optional[Tuple[float, str, Tuple[int, ...]]]:
    """在 [t0, t0 + dt] 上线性插值距离，找到最早的碰撞/出界"""
    r = system.stopping_radius
    w0, c0 = _distances(p0, system)
    w1, c1 = _distances(p1, system)
    best = None
    for i in range(len(p0)):
        if w1[i] < r:
            frac = (w0[i] - r) / (w0[i] - w1[i]) if w0[i] != w1[i] else 1.0
            cand = (t0 + np.clip(frac, 0.0, 1.0) * dt, "exit", (i,))
            best = cand if best is None or cand[0] < best[0] else best
        for j in range(i + 1, len(p0)):
            if c1[i, j] < r:
                frac = (c0[i, j] - r) / (c0[i, j] - c1[i, j]) if c0[i, j] != c1[i, j] else 1.0
                cand = (t0 + np.clip(frac, 0.0, 1.0) * dt, "collision", (i, j))
                best = cand if best is None or cand[0] < best[0] else best
    return best


def _rk4(p: np.ndarray, dt: float, system: OdeSystem) -> np.ndarray:
    k1 = ode_rhs(p, system)
    k2 = ode_rhs(p + 0.5 * dt * k1, system)
    k3 = ode_rhs(p + 0.5 * dt * k2, system)
    k4 = ode_rhs(p + dt * k3, system)
    return p + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def integrate_law(system: OdeSystem, initial: Sequence[Sequence[float]], horizon: float, dt: float) -> OdeSolution:
    """经典四阶 Runge-Kutta，步间线性插值检测碰撞与出界"""
    p = np.asarray(initial, dtype=float).reshape(-1, 2)
    if len(p) != system.n:
        raise ValueError(f"初始位置 {len(p)} 个，度数 {system.n} 个")
    if not system.inside(p):
        raise OutOfDomain("初始位置不在区域内", {"positions": p.tolist()})

    times = [0.0]
    path = [p.copy()]
    t = 0.0
    steps = int(np.ceil(horizon / dt - 1e-9))
    for n in range(steps):
        h = min(dt, horizon - t)
        try:
            p_next = _rk4(p, h, system)
        except OutOfDomain:
            # 按欧拉外推估计越界时刻，记为出界
            p_next = p + h * ode_rhs(p, system)
        event = _first_event(p, p_next, t, h, system)
        if event is not None:
            t_event, reason, involved = event
            frac = (t_event - t) / h if h > 0 else 1.0
            times.append(t_event)
            path.append(p + frac * (p_next - p))
            logger.debug(f"极限律在 t={t_event:.6g} 停止: {reason} {involved}")
            return OdeSolution(np.asarray(times), np.stack(path), tuple(system.degrees), t_event, reason, involved)
        if not system.inside(p_next):
            times.append(t + h)
            path.append(p_next)
            return OdeSolution(np.asarray(times), np.stack(path), tuple(system.degrees), t + h, "exit", ())
        p = p_next
        t = t + h if n < steps - 1 else horizon
        times.append(t)
        path.append(p.copy())
    return OdeSolution(np.asarray(times), np.stack(path), tuple(system.degrees), horizon, "horizon")


# ===== 临界电流 =====
@dataclass(frozen=True)
class ConfinementSpec:
    minima: Tuple[Tuple[float, float], ...]
    radius: float
    horizon: float
    dt: float = 1e-3


@dataclass
class CriticalCurrentResult:
    lambdas: List[float]
    verdicts: List[bool]
    status: str  # bracketed | above_grid | below_grid | non_monotone
    lambda0: Optional[float] = None
    bracket: Optional[Tuple[float, float]] = None
    tolerance: Optional[float] = None
    bisection: List[Tuple[float, bool]] = field(default_factory=list)


def confinement_verdict(system: OdeSystem, initial, target: ConfinementSpec) -> bool:
    """时限内没有碰撞/出界，且每个涡旋始终在其指定极小点的 R 邻域内"""
    solution = integrate_law(system, initial, target.horizon, target.dt)
    if solution.stop_reason != "horizon":
        return False
    minima = np.asarray(target.minima, dtype=float)
    distance = np.linalg.norm(solution.positions - minima[None, :, :], axis=2)
    return bool(np.max(distance) <= target.radius)


def critical_current(
    template: OdeSystem,
    initial: Sequence[Sequence[float]],
    lambdas: Sequence[float],
    target: ConfinementSpec,
    tolerance: Optional[float] = None,
    threads: int = 1,
) -> CriticalCurrentResult:
    """在 λ 网格上判定约束性，确定约束→脱钉的转变并二分细化"""
    grid = [float(v) for v in lambdas]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("λ 网格必须单调不减")

    def verdict(lam: float) -> bool:
        return confinement_verdict(replace(template, lam=lam), initial, target)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        verdicts = list(pool.map(verdict, grid))
    logger.info(f"λ 扫描完成: {sum(verdicts)}/{len(verdicts)} 个约束")

    flips = sum(1 for a, b in zip(verdicts, verdicts[1:]) if a != b)
    if all(verdicts):
        return CriticalCurrentResult(grid, verdicts, "above_grid")
    if not any(verdicts):
        return CriticalCurrentResult(grid, verdicts, "below_grid")
    if flips != 1 or not verdicts[0]:
        raise NonMonotoneVerdicts(grid, verdicts)

    k = verdicts.index(False)
    lo, hi = grid[k - 1], grid[k]
    span = grid[-1] - grid[0]
    tol = tolerance if tolerance is not None else 1e-3 * span
    history = []
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        confined = verdict(mid)
        history.append((mid, confined))
        if confined:
            lo = mid
        else:
            hi = mid
    lambda0 = 0.5 * (lo + hi)
    logger.info(f"临界电流估计 λ₀ = {lambda0:.6g}，区间 [{lo:.6g}, {hi:.6g}]")
    return CriticalCurrentResult(grid, verdicts, "bracketed", lambda0, (lo, hi), tol, history)
