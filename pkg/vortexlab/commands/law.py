import logging
from typing import Optional

from ..models import RunConfig
from ..services.builders import (
    build_boundary,
    build_forces,
    build_grid,
    build_landscape,
    build_ode_system,
    law_form,
)
from ..services.limit_law import OdeSolution, OdeSystem, integrate_law
from ..services.pinning_fields import AuxiliaryFields, compute_auxiliary_fields
from ..services.studies import trajectories_from_solution
from ..storage.run_storage import RunStorage

# 配置日志
logger = logging.getLogger(__name__)


def needs_fields(config: RunConfig) -> bool:
    if config.flavor == "pinned_gl" or config.law.form == "pinning_only":
        return False
    return config.law.form == "potential" or config.forcing.mode == "auxiliary"


def law_system(config: RunConfig, fields: Optional[AuxiliaryFields] = None) -> OdeSystem:
    grid = build_grid(config)
    landscape = build_landscape(config)
    b = landscape.realize(grid)
    if fields is None and needs_fields(config):
        bd = build_boundary(config, grid)
        p = config.params
        fields = compute_auxiliary_fields(b, bd, p.alpha, p.beta, p.sigma, p.eps, p.lam)
    forces = build_forces(config, grid, landscape, b, fields)
    return build_ode_system(config, forces)


def solve_law(config: RunConfig, fields: Optional[AuxiliaryFields] = None) -> OdeSolution:
    system = law_system(config, fields)
    horizon = config.law.horizon or config.time.horizon
    return integrate_law(system, config.positions, horizon, config.law.dt)


def cmd_law(config: RunConfig, storage: RunStorage, threads: int = 1) -> int:
    """积分极限律并写出 ODE 轨迹"""
    solution = solve_law(config)
    storage.write_trajectories("law_trajectories.csv", trajectories_from_solution(solution))
    storage.write_json("law.json", {
        "T_star": solution.T_star,
        "stop_reason": solution.stop_reason,
        "involved": list(solution.involved),
        "steps": len(solution.times) - 1,
        "form": law_form(config),
    })
    logger.info(f"极限律停止于 T*={solution.T_star:.6g}（{solution.stop_reason}）")
    return 0
