import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..models import RunConfig
from ..services.builders import (
    build_forcing,
    build_grid,
    build_initial_state,
    build_landscape,
    build_params,
)
from ..services.gl_sim import SimState, default_dt
from ..services.grid import Grid, ScalarField
from ..services.limit_law import velocity_bound
from ..services.pinning_fields import AuxiliaryFields
from ..services.studies import EnergyGrowth, SimulationRecord, energy_growth_study, run_simulation
from ..services.vortexometry import TrackingParams
from ..storage.run_storage import RunStorage

# 配置日志
logger = logging.getLogger(__name__)


@dataclass
class SimulationCase:
    grid: Grid
    b: ScalarField
    fields: Optional[AuxiliaryFields]
    tracking: TrackingParams
    v_max: float
    dt: float
    record: SimulationRecord

    @property
    def gate_time(self) -> float:
        """一个跟踪门限对应的时间长度"""
        return self.tracking.gate / self.v_max if self.v_max > 0 else 0.0


def simulate_case(
    config: RunConfig,
    eps: Optional[float] = None,
    storage: Optional[RunStorage] = None,
    prefix: str = "",
) -> SimulationCase:
    grid = build_grid(config)
    params = build_params(config, eps=eps)
    b = build_landscape(config).realize(grid)
    coeffs, fields = build_forcing(config, grid, b, params)
    state = build_initial_state(config, grid, params, b, coeffs)

    dt = config.time.dt or default_dt(grid, params)
    every = config.time.diagnostics_every
    gx, gy = grid.grad(np.log(b.data))
    z_sup = 0.0 if coeffs is None else float(np.max(np.hypot(coeffs.Z[0], coeffs.Z[1])))
    # coeffs.Z 已乘 λ
    v_max = velocity_bound(params.alpha, params.beta, 1.0, z_sup, float(np.max(np.hypot(gx, gy))))
    tracking = TrackingParams.for_run(grid, params.eps, dt * every, v_max)
    logger.info(f"开始模拟: ε={params.eps}, 网格 {grid.nx}x{grid.ny}, dt={dt:.3e}, 时限 {config.time.horizon}")

    def on_snapshot(s: SimState) -> None:
        storage.write_snapshot(f"{prefix}snapshots/u_t{s.t:.6f}.vxf", s.u)

    record = run_simulation(
        state,
        b,
        config.time.horizon,
        dt,
        every,
        tracking,
        on_snapshot=on_snapshot if storage is not None else None,
        snapshot_every=config.time.snapshot_every,
    )
    return SimulationCase(grid, b, fields, tracking, v_max, dt, record)


def write_case(storage: RunStorage, case: SimulationCase, prefix: str = "") -> EnergyGrowth:
    record = case.record
    storage.write_csv(f"{prefix}diagnostics.csv", record.diagnostics_rows())
    storage.write_trajectories(f"{prefix}trajectories.csv", record.tracking.trajectories)
    storage.write_snapshot(f"{prefix}u_final.vxf", record.final.u)
    growth = energy_growth_study(record)
    storage.write_json(f"{prefix}simulation.json", {
        "eps": record.eps,
        "dt": case.dt,
        "t_final": record.final.t,
        "t_star": record.tracking.t_star,
        "gate": case.tracking.gate,
        "v_max": case.v_max,
        "trajectories": [
            {"id": tr.id, "degree": tr.degree, "termination": tr.termination, "t_end": tr.t_end}
            for tr in record.tracking.trajectories
        ],
        "ambiguities": [a.to_dict() for a in record.tracking.ambiguities],
        "degenerate_zeros": sum(len(f.degenerate) for f in record.frames),
        "energy_growth": growth.as_metrics(),
        "passed": growth.passed,
    })
    return growth


def cmd_simulate(config: RunConfig, storage: RunStorage, threads: int = 1) -> int:
    """运行 GL 流并写出诊断、轨迹与快照；能量增长或涡旋个数检查失败时返回 1"""
    case = simulate_case(config, storage=storage)
    growth = write_case(storage, case)
    logger.info(f"模拟结果写入 {storage.out_dir}")
    if growth.passed:
        return 0
    if not growth.count_constant:
        logger.error("T* 之前涡旋个数发生变化")
    else:
        logger.error(
            f"能量增长 {growth.growth:.4g} / 超额 {growth.max_excess:.4g} 未低于 π inf b = {growth.threshold:.4g}"
        )
    return 1
