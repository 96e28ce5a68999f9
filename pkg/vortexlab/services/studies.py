import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import CountMismatch
from .energetics import EnergyReport, dissipation_rate, energy_evolution_residual, total_energies
from .expressions import compile_expression
from .gl_sim import ForcingCoefficients, ModelParams, SimState, evolve
from .grid import ComplexField, Grid, ScalarField
from .limit_law import ClosedFormForces, OdeSolution, OdeSystem, integrate_law
from .pinning_fields import (
    BoundaryData,
    change_unknowns,
    compute_auxiliary_fields,
    solve_h0,
    solve_phi0,
    solve_psi0,
    solve_xi0_X0,
)
from .vortexometry import Trajectory, TrackingParams, TrackingResult, VortexState, detect, track

# 配置日志
logger = logging.getLogger(__name__)

ORDER_BANDS: Dict[str, Tuple[float, float]] = {
    "grid": (1.8, 2.2),
    "elliptic": (1.8, 2.2),
    "identity": (1.8, math.inf),
    "rk4": (3.7, 4.3),
    "imex": (0.6, 1.4),
}


# ===== 模拟运行 =====
@dataclass
class DiagnosticContext:
    """能量诊断所用的变量：b、f_ε、λZ；pinned 时诊断在 v = u/√b 上进行"""

    b: ScalarField
    f: ScalarField
    Z: np.ndarray
    alpha: float
    eps: float
    pinned: bool = False

    @classmethod
    def for_state(cls, state: SimState, b: ScalarField) -> "DiagnosticContext":
        params = state.params
        grid = state.grid
        if state.b is not None:
            coeffs = ForcingCoefficients.substituted(state.b)
            return cls(state.b, ScalarField(grid, coeffs.f), coeffs.Z, params.alpha, params.eps, pinned=True)
        coeffs = state.coeffs
        return cls(b, ScalarField(grid, coeffs.f), coeffs.Z, params.alpha, params.eps)

    def variable(self, u: ComplexField) -> ComplexField:
        return change_unknowns(u, self.b, self.eps) if self.pinned else u


@dataclass
class SimulationRecord:
    frames: List[VortexState]
    energies: List[EnergyReport]
    residuals: List[Tuple[float, float]]     # (t, 能量演化残差)
    dissipation: List[Tuple[float, float]]   # (t, ∫₀ᵗ∫αb|∂ₜu|²)
    max_modulus: List[Tuple[float, float]]
    tracking: TrackingResult
    final: SimState
    eps: float
    inf_b: float

    def diagnostics_rows(self) -> List[Dict[str, float]]:
        rows = []
        residual = dict(self.residuals)
        dissipated = dict(self.dissipation)
        modulus = dict(self.max_modulus)
        for frame, report in zip(self.frames, self.energies):
            row = report.as_row()
            row["vortex_count"] = len(frame.vortices)
            row["total_winding"] = frame.total_winding
            row["residual"] = residual.get(report.t, float("nan"))
            row["dissipation"] = dissipated.get(report.t, 0.0)
            row["max_modulus"] = modulus.get(report.t, float("nan"))
            rows.append(row)
        return rows


def run_simulation(
    state: SimState,
    b: ScalarField,
    horizon: float,
    dt: float,
    every: int,
    tracking: TrackingParams,
    on_snapshot: Optional[Callable[[SimState], None]] = None,
    snapshot_every: int = 0,
) -> SimulationRecord:
    """推进 GL 流，每 every 步检测涡旋并计算能量，结束后连接轨迹"""
    ctx = DiagnosticContext.for_state(state, b)
    frames: List[VortexState] = []
    energies: List[EnergyReport] = []
    residuals: List[Tuple[float, float]] = []
    dissipation: List[Tuple[float, float]] = []
    modulus: List[Tuple[float, float]] = []
    dissipated = 0.0

    def record(s: SimState) -> None:
        frame = detect(s.u, s.t)
        v = ctx.variable(s.u)
        frames.append(frame)
        energies.append(total_energies(v, ctx.b, ctx.eps, ctx.f, s.t, frame.vortices))
        dissipation.append((s.t, dissipated))
        modulus.append((s.t, s.monitored_modulus))

    record(state)
    if on_snapshot is not None and snapshot_every:
        on_snapshot(state)

    final = state
    for n, (prev, new) in enumerate(evolve(state, horizon, dt), start=1):
        v_prev, v_new = ctx.variable(prev.u), ctx.variable(new.u)
        dissipated += dt * dissipation_rate(v_prev, v_new, dt, ctx.b, ctx.alpha)
        final = new
        if n % every == 0:
            residual = energy_evolution_residual(v_prev, v_new, dt, ctx.b, ctx.eps, ctx.f, ctx.Z, ctx.alpha)
            residuals.append((new.t, residual))
            record(new)
            logger.debug(f"t={new.t:.4g} 涡旋 {len(frames[-1].vortices)} 个, F̃={energies[-1].F_tilde:.6g}")
        if on_snapshot is not None and snapshot_every and n % snapshot_every == 0:
            on_snapshot(new)

    if frames[-1].t != final.t:
        record(final)
    result = track(frames, tracking)
    logger.info(f"模拟完成: t={final.t:.4g}, 轨迹 {len(result.trajectories)} 条, T*={result.t_star:.4g}")
    return SimulationRecord(
        frames=frames,
        energies=energies,
        residuals=residuals,
        dissipation=dissipation,
        max_modulus=modulus,
        tracking=result,
        final=final,
        eps=state.params.eps,
        inf_b=float(np.min(b.data)),
    )


# ===== 轨迹比较 =====
@dataclass
class TrajectoryComparison:
    errors: List[float]        # 每个 ODE 涡旋的 sup 误差
    sup_error: float
    window: Tuple[float, float]
    t_star_pde: float
    t_star_ode: float
    reason_pde: str
    reason_ode: str

    @property
    def terminal_discrepancy(self) -> float:
        if math.isinf(self.t_star_pde) or self.reason_ode == "horizon":
            return float("nan")
        return abs(self.t_star_pde - self.t_star_ode)

    def as_metrics(self) -> Dict[str, object]:
        return {
            "errors": self.errors,
            "sup_error": self.sup_error,
            "window": list(self.window),
            "t_star_pde": self.t_star_pde,
            "t_star_ode": self.t_star_ode,
            "terminal_discrepancy": self.terminal_discrepancy,
            "reason_pde": self.reason_pde,
            "reason_ode": self.reason_ode,
        }


def trajectories_from_solution(solution: OdeSolution) -> List[Trajectory]:
    """ODE 解转换为与 PDE 侧同一模式的轨迹"""
    out = []
    for i, d in enumerate(solution.degrees):
        tr = Trajectory(id=i, degree=int(d))
        for t, p in zip(solution.times, solution.positions[:, i, :]):
            tr.append(t, p)
        reason = solution.stop_reason if i in solution.involved else "horizon"
        tr.close(reason, solution.T_star)
        out.append(tr)
    return out


def _pde_stop(trajectories: Sequence[Trajectory]) -> Tuple[float, str]:
    events = [(tr.t_end, tr.termination) for tr in trajectories if tr.termination in ("collision", "exit")]
    if not events:
        return float("inf"), "horizon"
    return min(events)


def _match(pde: Sequence[Trajectory], ode: Sequence[Trajectory], t0: float) -> List[Trajectory]:
    starters = [tr for tr in pde if tr.times and abs(tr.times[0] - t0) <= 1e-12]
    if len(starters) != len(ode):
        raise CountMismatch(
            f"t=0 时 PDE 涡旋 {len(starters)} 个，ODE 涡旋 {len(ode)} 个",
            {"pde": len(starters), "ode": len(ode)},
        )
    matched: List[Trajectory] = []
    free = list(starters)
    for target in ode:
        candidates = [tr for tr in free if tr.degree == target.degree]
        if not candidates:
            raise CountMismatch(f"没有度数为 {target.degree} 的 PDE 涡旋可与 ODE 涡旋 {target.id} 匹配", {"ode": target.id})
        start = np.asarray(target.positions[0])
        best = min(candidates, key=lambda tr: float(np.hypot(*(np.asarray(tr.positions[0]) - start))))
        free.remove(best)
        matched.append(best)
    return matched


def compare_trajectories(
    pde: Sequence[Trajectory],
    ode: Sequence[Trajectory],
    gate_time: float = 0.0,
) -> TrajectoryComparison:
    """在 [0, min(T*_pde, T*_ode) - gate_time] 上按初始位置配对并计算 sup 误差"""
    if not ode:
        raise CountMismatch("ODE 轨迹为空", {})
    t0 = min(tr.times[0] for tr in ode)
    t_pde, reason_pde = _pde_stop(pde)
    t_ode, reason_ode = _pde_stop(ode)
    ode_end = min(tr.times[-1] for tr in ode)
    pde_end = max(tr.times[-1] for tr in pde) if pde else t0
    end = min(t_pde, t_ode, ode_end, pde_end) - gate_time
    end = max(end, t0)

    gained = [tr for tr in pde if tr.times[0] > t0 + 1e-12 and tr.times[0] < end]
    if gained:
        raise CountMismatch(
            f"窗口内出现 {len(gained)} 个新涡旋",
            {"nucleated": [tr.id for tr in gained], "t": gained[0].times[0]},
        )
    matched = _match(pde, ode, t0)

    errors = []
    for target, candidate in zip(ode, matched):
        t_pde_arr, p_pde = candidate.as_arrays()
        t_ode_arr, p_ode = target.as_arrays()
        if candidate.t_end is not None and candidate.t_end < end and candidate.termination != "horizon":
            raise CountMismatch(f"PDE 轨迹 {candidate.id} 在窗口内提前终止", {"track": candidate.id})
        mask = (t_pde_arr >= t0) & (t_pde_arr <= end) & (t_pde_arr <= t_ode_arr[-1])
        if not np.any(mask):
            errors.append(0.0)
            continue
        ts = t_pde_arr[mask]
        ox = np.interp(ts, t_ode_arr, p_ode[:, 0])
        oy = np.interp(ts, t_ode_arr, p_ode[:, 1])
        errors.append(float(np.max(np.hypot(p_pde[mask, 0] - ox, p_pde[mask, 1] - oy))))

    sup = max(errors) if errors else 0.0
    logger.info(f"轨迹比较: 窗口 [{t0:.4g}, {end:.4g}], sup 误差 {sup:.4e}")
    return TrajectoryComparison(errors, sup, (t0, end), t_pde, t_ode, reason_pde, reason_ode)


# ===== 能量增长 =====
@dataclass
class EnergyGrowth:
    times: List[float]
    excess: List[float]
    max_excess: float
    growth: float          # max F̃(t) - F̃(0)，以 |log ε| 为单位
    dissipation: float
    threshold: float       # π inf b
    count_constant: bool

    @property
    def passed(self) -> bool:
        return self.max_excess < self.threshold and self.growth < self.threshold and self.count_constant

    def as_metrics(self) -> Dict[str, object]:
        return {
            "max_excess": self.max_excess,
            "growth": self.growth,
            "dissipation": self.dissipation,
            "threshold": self.threshold,
            "count_constant": self.count_constant,
        }


def energy_growth_study(record: SimulationRecord) -> EnergyGrowth:
    """excess(t) = (F̃(t) - πΣb(aᵢ(t))|log ε|)/|log ε|，并检查涡旋数在 T* 前不变"""
    log_eps = abs(math.log(record.eps))
    times, excess = [], []
    for report in record.energies:
        target = report.target or 0.0
        times.append(report.t)
        excess.append((report.F_tilde - target * log_eps) / log_eps)

    F0 = record.energies[0].F_tilde
    growth = max(r.F_tilde - F0 for r in record.energies) / log_eps
    t_star = record.tracking.t_star
    counts = [len(f.vortices) for f in record.frames if f.t < t_star]
    count_constant = len(set(counts)) <= 1
    dissipated = record.dissipation[-1][1] if record.dissipation else 0.0
    return EnergyGrowth(
        times=times,
        excess=excess,
        max_excess=max(excess),
        growth=growth,
        dissipation=dissipated / log_eps,
        threshold=math.pi * record.inf_b,
        count_constant=count_constant,
    )


def excess_trend(by_eps: Dict[float, EnergyGrowth]) -> bool:
    """ε 减小时最大超额能量不增加"""
    ordered = [by_eps[e].max_excess for e in sorted(by_eps, reverse=True)]
    return all(b <= a + 1e-12 for a, b in zip(ordered, ordered[1:]))


# ===== 收敛阶测试 =====
@dataclass
class ConvergenceRow:
    quantity: str
    selector: str
    steps: List[float]
    errors: List[float]
    order: float
    band: Tuple[float, float]

    @property
    def passed(self) -> bool:
        return self.band[0] <= self.order <= self.band[1]

    def as_metrics(self) -> Dict[str, object]:
        return {"steps": self.steps, "errors": self.errors, "order": self.order, "band": list(self.band)}


def observed_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """log(误差) 对 log(步长) 的最小二乘斜率"""
    steps = np.asarray(steps, dtype=float)
    errors = np.maximum(np.asarray(errors, dtype=float), np.finfo(float).tiny)
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)


def _row(quantity: str, selector: str, steps, errors) -> ConvergenceRow:
    row = ConvergenceRow(quantity, selector, [float(s) for s in steps], [float(e) for e in errors],
                         observed_order(steps, errors), ORDER_BANDS[selector])
    logger.info(f"{quantity}: 阶 {row.order:.3f}（区间 {row.band}）")
    return row


def _grid_rows(ladder: Sequence[int]) -> List[ConvergenceRow]:
    grad_err, lap_err, steps = [], [], []
    for n in ladder:
        grid = Grid(n, n)
        X, Y = grid.mesh()
        f = np.sin(np.pi * X) * np.sin(np.pi * Y)
        fx, fy = grid.grad(f)
        ex = np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)
        ey = np.pi * np.sin(np.pi * X) * np.cos(np.pi * Y)
        grad_err.append(np.max(np.hypot(fx - ex, fy - ey)))
        lap_err.append(np.max(np.abs(grid.lap(f) + 2 * np.pi ** 2 * f)))
        steps.append(grid.h)
    return [_row("gradient", "grid", steps, grad_err), _row("laplacian", "grid", steps, lap_err)]


def manufactured_errors(grid: Grid) -> Dict[str, float]:
    """四个线性边值问题对已知解的最大误差"""
    X, Y = grid.mesh()
    ones = ScalarField(grid, np.ones(grid.shape))

    # φ* = cos(πx)cosh(y)，b ≡ 1，I = 0，J = σ∇φ*/b
    phi_star = np.cos(np.pi * X) * np.cosh(Y)
    J = np.stack([-np.pi * np.sin(np.pi * X) * np.cosh(Y), np.cos(np.pi * X) * np.sinh(Y)])
    bd = BoundaryData(np.zeros(grid.shape), J, np.zeros((2,) + grid.shape))
    source = (np.pi ** 2 - 1.0) * phi_star + phi_star
    phi = solve_phi0(ones, bd, alpha=1.0, sigma=1.0, source=source)

    # h* = 1 + xy，b = eˣ，φ₀ = 0
    b = ScalarField(grid, np.exp(X))
    h_star = 1.0 + X * Y
    zero = ScalarField(grid, np.zeros(grid.shape))
    h_bd = BoundaryData(h_star, np.zeros((2,) + grid.shape))
    h = solve_h0(b, zero, h_bd, sigma=1.0, source=Y * np.exp(-X) + h_star)

    # ξ* = sin(πx)sin(πy)
    xi_star = np.sin(np.pi * X) * np.sin(np.pi * Y)
    xi, _ = solve_xi0_X0(ScalarField(grid, -2.0 * np.pi ** 2 * xi_star))

    # ψ* = cos(πx)，b ≡ 1，φ₀ = h₀ = 0，J = 0
    psi_star = np.cos(np.pi * X)
    psi_star = psi_star - grid.integrate(psi_star) / grid.area
    psi = solve_psi0(ones, zero, zero, BoundaryData.zero(grid), sigma=1.0, alpha=1.0,
                     source=-np.pi ** 2 * np.cos(np.pi * X))
    return {
        "phi0": float(np.max(np.abs(phi.data - phi_star))),
        "h0": float(np.max(np.abs(h.data - h_star))),
        "xi0": float(np.max(np.abs(xi.data - xi_star))),
        "psi0": float(np.max(np.abs(psi.data - psi_star))),
    }


def _elliptic_rows(ladder: Sequence[int]) -> List[ConvergenceRow]:
    results = [manufactured_errors(Grid(n, n)) for n in ladder]
    steps = [Grid(n, n).h for n in ladder]
    return [_row(name, "elliptic", steps, [r[name] for r in results]) for name in ("phi0", "h0", "xi0", "psi0")]


def smooth_identity_case(grid: Grid) -> Tuple[ScalarField, BoundaryData]:
    """非常数光滑 b 与非零 (H, J)，J 满足零通量相容条件"""
    X, Y = grid.mesh()
    b = ScalarField(grid, 1.0 - 0.3 * np.cos(np.pi * X) * np.cos(np.pi * Y))
    H = 0.5 + 0.2 * X * Y
    J = np.stack([0.5 * np.ones(grid.shape), np.zeros(grid.shape)])
    return b, BoundaryData(H, J)


def _identity_rows(ladder: Sequence[int]) -> List[ConvergenceRow]:
    residuals, steps = [], []
    for n in ladder:
        grid = Grid(n, n)
        b, bd = smooth_identity_case(grid)
        fields = compute_auxiliary_fields(b, bd, alpha=1.0, beta=0.0, sigma=1.0, eps=0.05, lam=1.0)
        residuals.append(fields.identity_residual)
        steps.append(grid.h)
    return [_row("identity_residual", "identity", steps, residuals)]


def _rk4_rows(dt_ladder: Sequence[float]) -> List[ConvergenceRow]:
    """log b = |x - x₀|² 的纯钉扎情形，精确解 a(t) = x₀ + (a(0) - x₀)e^{-2t}"""
    forces = ClosedFormForces(compile_expression("(x-0.5)^2 + (y-0.5)^2"))
    system = OdeSystem(degrees=(1,), forces=forces, form="pinning_only")
    a0 = np.array([0.8, 0.3])
    center = np.array([0.5, 0.5])
    errors = []
    for dt in dt_ladder:
        sol = integrate_law(system, [a0], horizon=1.0, dt=dt)
        exact = center + (a0 - center) * np.exp(-2.0 * sol.times)[:, None]
        errors.append(float(np.max(np.abs(sol.positions[:, 0, :] - exact))))
    return [_row("rk4_trajectory", "rk4", dt_ladder, errors)]


def _imex_rows(dt0: float = 0.008, levels: int = 4, horizon: float = 0.08) -> List[ConvergenceRow]:
    """光滑驱动数据上的 Richardson 差分：|u_dt - u_{dt/2}|"""
    grid = Grid(24, 24)
    X, Y = grid.mesh()
    params = ModelParams(alpha=1.0, beta=0.5, eps=0.2, lam=1.0)
    h = 0.2 * np.cos(np.pi * X) * np.cos(np.pi * Y)
    coeffs = ForcingCoefficients.build(grid, h, np.stack([0.3 * np.ones(grid.shape), np.zeros(grid.shape)]), 0.0)
    u0 = (0.5 + 0.3 * np.cos(np.pi * X) * np.cos(np.pi * Y)) * np.exp(0.5j * np.cos(np.pi * X))
    state = SimState(0.0, ComplexField(grid, u0), params, coeffs)

    finals, dts = [], []
    for k in range(levels):
        dt = dt0 / 2 ** k
        s = state
        for _, s in evolve(state, horizon, dt):
            pass
        finals.append(s.u.data)
        dts.append(dt)
    diffs = [float(np.max(np.abs(finals[k] - finals[k + 1]))) for k in range(levels - 1)]
    return [_row("imex_step", "imex", dts[:-1], diffs)]


def convergence_battery(
    selectors: Sequence[str],
    ladder: Sequence[int],
    dt_ladder: Sequence[float],
) -> List[ConvergenceRow]:
    """按选择器运行加细阶梯，返回各量的观测阶与判定"""
    if len(ladder) < 3 or len(dt_ladder) < 3:
        raise ValueError("细化阶梯至少需要 3 级")
    rows: List[ConvergenceRow] = []
    for selector in selectors:
        if selector == "grid":
            rows.extend(_grid_rows(ladder))
        elif selector == "elliptic":
            rows.extend(_elliptic_rows(ladder))
        elif selector == "identity":
            rows.extend(_identity_rows(ladder))
        elif selector == "rk4":
            rows.extend(_rk4_rows(dt_ladder))
        elif selector == "imex":
            rows.extend(_imex_rows())
        else:
            raise ValueError(f"未知的选择器 {selector}")
    return rows
