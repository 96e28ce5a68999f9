import logging
from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..models import RunConfig
from ..storage.snapshot import read_snapshot
from .expressions import compile_expression
from .gl_sim import ForcingCoefficients, ModelParams, SimState, make_well_prepared
from .grid import Grid, ScalarField
from .landscapes import (
    PinningLandscape,
    Well,
    constant_landscape,
    expression_landscape,
    gaussian_well,
    multi_well,
    sampled_landscape,
)
from .limit_law import ClosedFormForces, ForceLandscape, GriddedForces, OdeSystem, PotentialForces
from .pinning_fields import AuxiliaryFields, BoundaryData, compute_auxiliary_fields

# 配置日志
logger = logging.getLogger(__name__)


def build_grid(cfg: RunConfig) -> Grid:
    d = cfg.domain
    return Grid(d.nx, d.ny, d.lx, d.ly)


def build_params(cfg: RunConfig, eps: Optional[float] = None, lam: Optional[float] = None) -> ModelParams:
    p = cfg.params
    return ModelParams(
        alpha=p.alpha,
        beta=p.beta,
        sigma=p.sigma,
        eps=p.eps if eps is None else eps,
        lam=p.lam if lam is None else lam,
        flavor=cfg.flavor,
    )


def build_landscape(cfg: RunConfig) -> PinningLandscape:
    land = cfg.landscape
    if land.kind == "constant":
        return constant_landscape(land.value)
    if land.kind in ("gaussian_well", "multi_well"):
        wells = [Well(tuple(w.center), w.depth, w.width) for w in land.wells]
        if land.kind == "gaussian_well":
            w = wells[0]
            return gaussian_well(w.center, w.depth, w.width)
        return multi_well(wells)
    if land.kind == "expression":
        return expression_landscape(compile_expression(land.expression))
    field = read_snapshot(land.path)
    if not isinstance(field, ScalarField):
        raise ConfigError("landscape.path", "采样钉扎势必须是标量 VXF1 快照")
    return sampled_landscape(field)


def build_boundary(cfg: RunConfig, grid: Grid) -> BoundaryData:
    X, Y = grid.mesh()
    bc = cfg.boundary
    H = compile_expression(bc.H)(X, Y)
    J = np.stack([compile_expression(e)(X, Y) for e in bc.J])
    I = None
    if bc.I is not None:
        I = np.stack([compile_expression(e)(X, Y) for e in bc.I])
    return BoundaryData(H, J, I)


def build_forcing(
    cfg: RunConfig,
    grid: Grid,
    b: ScalarField,
    params: ModelParams,
) -> Tuple[Optional[ForcingCoefficients], Optional[AuxiliaryFields]]:
    """forced_gl 的系数：辅助场模式由边界数据求解，prescribed 模式直接取表达式"""
    if params.flavor == "pinned_gl":
        return None, None

    h = np.log(b.data)
    if cfg.forcing.mode == "prescribed":
        X, Y = grid.mesh()
        Z = np.stack([compile_expression(e)(X, Y) for e in cfg.forcing.Z])
        f = compile_expression(cfg.forcing.f)(X, Y)
        return ForcingCoefficients.build(grid, h, params.lam * Z, f), None

    bd = build_boundary(cfg, grid)
    fields = compute_auxiliary_fields(b, bd, params.alpha, params.beta, params.sigma, params.eps, params.lam)
    return ForcingCoefficients.build(grid, h, fields.Z.data, fields.f_eps.data), fields


def build_initial_state(
    cfg: RunConfig,
    grid: Grid,
    params: ModelParams,
    b: ScalarField,
    coeffs: Optional[ForcingCoefficients],
) -> SimState:
    u = make_well_prepared(cfg.positions, cfg.degrees, params, b, grid)
    if params.flavor == "pinned_gl":
        return SimState(t=0.0, u=u, params=params, b=b)
    return SimState(t=0.0, u=u, params=params, coeffs=coeffs)


def base_current_field(fields: AuxiliaryFields) -> np.ndarray:
    """未乘 λ 的 Z = ∇ψ₀ - X₀"""
    grid = fields.psi0.grid
    psi_x, psi_y = grid.grad(fields.psi0.data)
    return np.stack([psi_x - fields.X0.x, psi_y - fields.X0.y])


def build_forces(
    cfg: RunConfig,
    grid: Grid,
    landscape: PinningLandscape,
    b: ScalarField,
    fields: Optional[AuxiliaryFields],
) -> ForceLandscape:
    form = law_form(cfg)
    if form == "potential":
        if fields is None:
            raise ConfigError("law.form", "potential 形式需要辅助场（forcing.mode = auxiliary）")
        return PotentialForces(b, fields.phi0, fields.h0, cfg.params.sigma)

    if cfg.forcing.mode == "prescribed" or fields is None or form == "pinning_only":
        Z_exprs = [compile_expression(e) for e in cfg.forcing.Z]
        if form == "pinning_only" or cfg.forcing.mode != "prescribed":
            Z_exprs = [None, None]
        if cfg.law.landscape == "closed_form" and landscape.closed_form:
            return ClosedFormForces(landscape.log_b, *Z_exprs)
        X, Y = grid.mesh()
        Z = np.stack([np.zeros(grid.shape) if e is None else e(X, Y) for e in Z_exprs])
        return GriddedForces(grid, np.log(b.data), Z)

    return GriddedForces(grid, np.log(b.data), base_current_field(fields))


def law_form(cfg: RunConfig) -> str:
    if cfg.flavor == "pinned_gl":
        return "pinning_only"
    return cfg.law.form


def build_ode_system(cfg: RunConfig, forces: ForceLandscape, lam: Optional[float] = None) -> OdeSystem:
    p = cfg.params
    return OdeSystem(
        degrees=tuple(cfg.degrees),
        forces=forces,
        alpha=p.alpha,
        beta=p.beta,
        lam=p.lam if lam is None else lam,
        lx=cfg.domain.lx,
        ly=cfg.domain.ly,
        form=law_form(cfg),
    )
