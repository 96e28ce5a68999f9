import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ..errors import DegenerateZero, TrackingAmbiguity
from .grid import ComplexField, Grid, ScalarField, VectorField

# 配置日志
logger = logging.getLogger(__name__)

DEGENERATE_MODULUS = 1e-12
NEWTON_STEPS = 20

# 2x2 小块上的 L1 线性拟合 f ≈ a·s + b·t + c（节点顺序 (0,0), (0,1), (1,0), (1,1)）
L1 = np.asarray([
    [-0.5, -0.5, 0.5, 0.5],
    [-0.5, 0.5, -0.5, 0.5],
    [0.75, 0.25, 0.25, -0.25],
])

TERMINATIONS = ("collision", "exit", "horizon")


@dataclass(frozen=True)
class Vortex:
    x: float
    y: float
    degree: int

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class VortexState:
    t: float
    vortices: Tuple[Vortex, ...]
    raw_winding: Tuple[Tuple[int, int, int], ...] = field(default=(), repr=False)  # (i, j, w)
    boundary_winding: int = 0
    degenerate: Tuple[DegenerateZero, ...] = field(default=(), repr=False)

    @property
    def total_degree(self) -> int:
        return sum(v.degree for v in self.vortices)

    @property
    def total_winding(self) -> int:
        return sum(w for _, _, w in self.raw_winding)


@dataclass
class Trajectory:
    id: int
    degree: int
    times: List[float] = field(default_factory=list)
    positions: List[Tuple[float, float]] = field(default_factory=list)
    termination: Optional[str] = None
    t_end: Optional[float] = None

    @property
    def open(self) -> bool:
        return self.termination is None

    @property
    def last(self) -> np.ndarray:
        return np.asarray(self.positions[-1])

    def append(self, t: float, position: Sequence[float]) -> None:
        self.times.append(float(t))
        self.positions.append((float(position[0]), float(position[1])))

    def close(self, reason: str, t: float) -> None:
        self.termination = reason
        self.t_end = float(t)

    def as_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.times), np.asarray(self.positions).reshape(-1, 2)


@dataclass(frozen=True)
class TrackingParams:
    gate: float
    r_coll: float
    r_exit: float
    h: float
    lx: float
    ly: float

    @classmethod
    def for_run(cls, grid: Grid, eps: float, dt_frame: float, v_max: float) -> "TrackingParams":
        radius = max(4.0 * eps, 2.0 * grid.h)
        return cls(
            gate=10.0 * max(grid.h, dt_frame * v_max),
            r_coll=radius,
            r_exit=radius,
            h=grid.h,
            lx=grid.lx,
            ly=grid.ly,
        )


# ===== 涡度与速度 =====
def vorticity(u: ComplexField) -> ScalarField:
    """μ = 2(i∂₁u, ∂₂u)"""
    grid = u.grid
    ux, uy = grid.grad(u.data)
    return ScalarField(grid, 2.0 * (ux.real * uy.imag - ux.imag * uy.real))


def velocity(u_prev: ComplexField, u_next: ComplexField, dt: float) -> VectorField:
    """V = 2(∂ₜu, i∇u)，∂ₜu 取差商，∇u 取两帧平均"""
    grid = u_prev.grid
    ut = (u_next.data - u_prev.data) / dt
    ux, uy = grid.grad(0.5 * (u_prev.data + u_next.data))
    # (a, iX) = -Re a·Im X + Im a·Re X
    v1 = 2.0 * (-ut.real * ux.imag + ut.imag * ux.real)
    v2 = 2.0 * (-ut.real * uy.imag + ut.imag * uy.real)
    return VectorField.from_components(grid, v1, v2)


def continuity_residual(u_prev: ComplexField, u_next: ComplexField, dt: float, band: int = 3) -> float:
    """∂ₜμ + curl V 在内部带上的最大范数"""
    grid = u_prev.grid
    dmu = (vorticity(u_next).data - vorticity(u_prev).data) / dt
    V = velocity(u_prev, u_next, dt)
    inner = grid.interior(band)
    return float(np.max(np.abs((dmu + grid.curl(V.x, V.y))[inner])))


# ===== 检测 =====
def plaquette_winding(u: np.ndarray) -> np.ndarray:
    """每个小方格逆时针一圈的相位差之和 / 2π，取整为整数"""
    def wrapped(a, b):
        return np.angle(b * np.conj(a))

    c00, c10, c11, c01 = u[:-1, :-1], u[1:, :-1], u[1:, 1:], u[:-1, 1:]
    total = wrapped(c00, c10) + wrapped(c10, c11) + wrapped(c11, c01) + wrapped(c01, c00)
    return np.rint(total / (2.0 * np.pi)).astype(int)


def boundary_winding(u: np.ndarray) -> int:
    loop = np.concatenate([u[:, 0], u[-1, 1:], u[-2::-1, -1], u[0, -2::-1]])
    return int(np.rint(np.sum(np.angle(loop[1:] * np.conj(loop[:-1]))) / (2.0 * np.pi)))


def _bilinear_zero(cell: np.ndarray) -> Optional[Tuple[float, float]]:
    """2x2 小块上 (Re u, Im u) 双线性插值的零点，局部坐标 (s, t) ∈ [0, 1]²"""
    re = cell.real.ravel()
    im = cell.imag.ravel()
    a1, b1, c1 = L1 @ re
    a2, b2, c2 = L1 @ im
    try:
        s, t = np.linalg.solve(np.array([[a1, b1], [a2, b2]]), -np.array([c1, c2]))
    except np.linalg.LinAlgError:
        s, t = 0.5, 0.5

    f00, f01, f10, f11 = cell[0, 0], cell[0, 1], cell[1, 0], cell[1, 1]
    for _ in range(NEWTON_STEPS):
        value = f00 * (1 - s) * (1 - t) + f10 * s * (1 - t) + f01 * (1 - s) * t + f11 * s * t
        ds = -f00 * (1 - t) + f10 * (1 - t) - f01 * t + f11 * t
        dt = -f00 * (1 - s) - f10 * s + f01 * (1 - s) + f11 * s
        jac = np.array([[ds.real, dt.real], [ds.imag, dt.imag]])
        try:
            delta = np.linalg.solve(jac, -np.array([value.real, value.imag]))
        except np.linalg.LinAlgError:
            return None
        s, t = s + delta[0], t + delta[1]
        if np.hypot(*delta) < 1e-12:
            break
    if not (-1e-9 <= s <= 1 + 1e-9 and -1e-9 <= t <= 1 + 1e-9):
        return None
    return float(np.clip(s, 0.0, 1.0)), float(np.clip(t, 0.0, 1.0))


def detect(u: ComplexField, t: float = 0.0) -> VortexState:
    """按小方格绕数检测涡旋，8 连通聚类，位置取双线性零点"""
    grid = u.grid
    data = u.data
    winding = plaquette_winding(data)
    labels, count = ndimage.label(winding != 0, structure=np.ones((3, 3), dtype=int))

    vortices: List[Vortex] = []
    degenerate: List[DegenerateZero] = []
    for label in range(1, count + 1):
        cells = np.argwhere(labels == label)
        degree = int(sum(winding[i, j] for i, j in cells))
        if degree == 0:
            continue

        estimates = []
        weights = []
        for i, j in cells:
            cell = data[i:i + 2, j:j + 2]
            zero = _bilinear_zero(cell)
            if zero is None:
                zero = (0.5, 0.5)
            estimates.append(((i + zero[0]) * grid.hx, (j + zero[1]) * grid.hy))
            weights.append(abs(winding[i, j]) / (np.mean(np.abs(cell)) + DEGENERATE_MODULUS))

        centroid = (
            float(np.mean([(i + 0.5) * grid.hx for i, _ in cells])),
            float(np.mean([(j + 0.5) * grid.hy for _, j in cells])),
        )
        if _cluster_is_degenerate(data, cells):
            error = DegenerateZero(
                f"涡旋簇 {label} 的边界上 |u| < {DEGENERATE_MODULUS}，位置取质心",
                {"t": t, "centroid": list(centroid)},
            )
            logger.warning(error.message)
            degenerate.append(error)
            x, y = centroid
        else:
            w = np.asarray(weights)
            pts = np.asarray(estimates)
            x, y = (w[:, None] * pts).sum(axis=0) / w.sum()
        for _ in range(abs(degree)):
            vortices.append(Vortex(float(x), float(y), int(np.sign(degree))))

    vortices.sort(key=lambda v: (v.x, v.y, v.degree))
    raw = tuple((int(i), int(j), int(winding[i, j])) for i, j in np.argwhere(winding != 0))
    return VortexState(
        t=float(t),
        vortices=tuple(vortices),
        raw_winding=raw,
        boundary_winding=boundary_winding(data),
        degenerate=tuple(degenerate),
    )


def _cluster_is_degenerate(data: np.ndarray, cells: np.ndarray) -> bool:
    nodes = set()
    for i, j in cells:
        nodes.update({(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)})
    return all(abs(data[i, j]) < DEGENERATE_MODULUS for i, j in nodes)


# ===== 跟踪 =====
@dataclass
class TrackingResult:
    trajectories: List[Trajectory]
    ambiguities: List[TrackingAmbiguity] = field(default_factory=list)

    @property
    def t_star(self) -> float:
        """最早的碰撞/出界时间；都没有时为 +∞"""
        ends = [tr.t_end for tr in self.trajectories if tr.termination in ("collision", "exit")]
        return min(ends) if ends else float("inf")


def _wall_distance(p: np.ndarray, params: TrackingParams) -> float:
    return float(min(p[0], params.lx - p[0], p[1], params.ly - p[1]))


def track(states: Sequence[VortexState], params: TrackingParams) -> TrackingResult:
    """逐帧贪心最近邻匹配（同度数），并判定碰撞、出界与到达时限"""
    trajectories: List[Trajectory] = []
    ambiguities: List[TrackingAmbiguity] = []
    if not states:
        return TrackingResult(trajectories)

    def start(vortex: Vortex, t: float) -> Trajectory:
        tr = Trajectory(id=len(trajectories), degree=vortex.degree)
        tr.append(t, vortex.position)
        trajectories.append(tr)
        return tr

    first = states[0]
    for vortex in sorted(first.vortices, key=lambda v: (v.x, v.y, v.degree)):
        start(vortex, first.t)
    _close_events(trajectories, params, first.t)

    for state in states[1:]:
        detections = sorted(state.vortices, key=lambda v: (v.x, v.y, v.degree))
        active = [tr for tr in trajectories if tr.open]
        matched_tracks: Dict[int, int] = {}
        for degree in (-1, 1):
            tracks = [tr for tr in active if tr.degree == degree]
            dets = [k for k, v in enumerate(detections) if v.degree == degree]
            pairs = []
            for tr in tracks:
                for k in dets:
                    dist = float(np.hypot(*(detections[k].position - tr.last)))
                    if dist <= params.gate:
                        pairs.append((dist, tr.id, k))
            pairs.sort()
            used_tracks, used_dets = set(), set()
            for n, (dist, tid, k) in enumerate(pairs):
                if tid in used_tracks or k in used_dets:
                    continue
                rivals = [
                    p for p in pairs[n + 1:]
                    if (p[1] == tid or p[2] == k)
                    and p[1] not in used_tracks and p[2] not in used_dets
                    and p[0] - dist <= 0.1 * params.h
                ]
                if rivals:
                    ambiguity = TrackingAmbiguity(
                        f"t={state.t:.6g} 轨迹 {tid} 的匹配存在并列候选，取编号较小者",
                        {"t": state.t, "track": tid, "distance": dist, "rival": rivals[0][0]},
                    )
                    logger.warning(ambiguity.message)
                    ambiguities.append(ambiguity)
                used_tracks.add(tid)
                used_dets.add(k)
                matched_tracks[tid] = k

        for tr in active:
            if tr.id in matched_tracks:
                tr.append(state.t, detections[matched_tracks[tr.id]].position)

        lost = [tr for tr in active if tr.id not in matched_tracks]
        _close_lost(lost, params, state.t)
        _close_events(trajectories, params, state.t)

        claimed = set(matched_tracks.values())
        for k, vortex in enumerate(detections):
            if k not in claimed:
                logger.warning(f"t={state.t:.6g} 出现新涡旋 ({vortex.x:.4f}, {vortex.y:.4f})，度数 {vortex.degree}")
                start(vortex, state.t)

    t_last = states[-1].t
    for tr in trajectories:
        if tr.open:
            tr.close("horizon", t_last)
    return TrackingResult(trajectories, ambiguities)


def _close_lost(lost: List[Trajectory], params: TrackingParams, t: float) -> None:
    """丢失的涡旋：与相反度数的丢失涡旋相距不超过 2·gate 时成对记为碰撞（最近者优先），否则记为出界"""
    # 两者在一帧内各自至多移动一个门限
    reach = 2.0 * params.gate
    pairs = []
    for n, tr in enumerate(lost):
        for other in lost[n + 1:]:
            if other.degree == -tr.degree:
                dist = float(np.hypot(*(tr.last - other.last)))
                if dist <= reach:
                    pairs.append((dist, min(tr.id, other.id), max(tr.id, other.id), tr, other))
    pairs.sort(key=lambda p: p[:3])
    for _, _, _, tr, other in pairs:
        if tr.open and other.open:
            tr.close("collision", t)
            other.close("collision", t)

    for tr in lost:
        if not tr.open:
            continue
        wall = _wall_distance(tr.last, params)
        if wall > params.gate:
            logger.warning(f"t={t:.6g} 轨迹 {tr.id} 在距边界 {wall:.4g} 处丢失且没有碰撞对象，记为出界")
        tr.close("exit", t)


def _close_events(trajectories: List[Trajectory], params: TrackingParams, t: float) -> None:
    active = [tr for tr in trajectories if tr.open]
    for n, tr in enumerate(active):
        if not tr.open:
            continue
        for other in active[n + 1:]:
            if other.open and other.degree == -tr.degree:
                if np.hypot(*(tr.last - other.last)) < params.r_coll:
                    tr.close("collision", t)
                    other.close("collision", t)
                    break
    for tr in active:
        if tr.open and _wall_distance(tr.last, params) < params.r_exit:
            tr.close("exit", t)
