import logging

from ..models import RunConfig
from ..services.builders import build_boundary, build_grid, build_landscape
from ..services.pinning_fields import compute_auxiliary_fields
from ..storage.run_storage import RunStorage

# 配置日志
logger = logging.getLogger(__name__)

SNAPSHOTS = ("phi0", "h0", "xi0", "X0", "psi0", "Z", "f_eps")


def cmd_fields(config: RunConfig, storage: RunStorage, threads: int = 1) -> int:
    """求解辅助场，写出各场的 VXF1 快照与恒等式残差摘要"""
    grid = build_grid(config)
    b = build_landscape(config).realize(grid)
    bd = build_boundary(config, grid)
    p = config.params
    fields = compute_auxiliary_fields(b, bd, p.alpha, p.beta, p.sigma, p.eps, p.lam)

    storage.write_snapshot("b.vxf", b)
    for name in SNAPSHOTS:
        storage.write_snapshot(f"{name}.vxf", getattr(fields, name))

    tolerance = config.auxiliary.identity_tolerance
    passed = fields.identity_residual <= tolerance
    summary = dict(fields.summary(), identity_tolerance=tolerance, passed=passed, nx=grid.nx, ny=grid.ny)
    storage.write_json("fields.json", summary)
    if passed:
        logger.info(f"辅助场写入 {storage.out_dir}，恒等式残差 {fields.identity_residual:.3e}")
        return 0
    logger.error(f"恒等式残差 {fields.identity_residual:.3e} 超过容限 {tolerance:.1e}")
    return 1
