import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import ComplexField, Grid, ScalarField
from .vortexometry import Vortex, velocity

# 配置日志
logger = logging.getLogger(__name__)

RESIDUAL_BAND = 3


@dataclass(frozen=True)
class EnergyReport:
    t: float
    e_total: float      # ∫e_ε
    e_weighted: float   # ∫ẽ_ε
    F: float            # ∫g_ε
    F_tilde: float      # ∫g̃_ε + ∮((|u|²-1)/4)∇b·ν
    normalized: float   # F̃/|log ε|
    target: Optional[float] = None  # π Σ b(aᵢ)
    comparison: float = 0.0         # |F - F̃|

    def as_row(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class StressTensor:
    T11: ScalarField
    T12: ScalarField
    T22: ScalarField

    @property
    def T21(self) -> ScalarField:
        return self.T12

    def trace(self) -> np.ndarray:
        return self.T11.data + self.T22.data


def _grad_sq(u: np.ndarray, grid: Grid) -> np.ndarray:
    ux, uy = grid.grad(u)
    return np.abs(ux) ** 2 + np.abs(uy) ** 2


def energy_density(u: ComplexField, b: ScalarField, eps: float) -> ScalarField:
    """e_ε = ½|∇u|² + (1-|u|²)²/(4ε²)"""
    grid = u.grid
    potential = (1.0 - np.abs(u.data) ** 2) ** 2 / (4.0 * eps ** 2)
    return ScalarField(grid, 0.5 * _grad_sq(u.data, grid) + potential)


def weighted_density(u: ComplexField, b: ScalarField, eps: float, f_eps: ScalarField) -> ScalarField:
    """ẽ_ε = b(e_ε + (1-|u|²)f_ε/2)"""
    e = energy_density(u, b, eps).data
    return ScalarField(u.grid, b.data * (e + 0.5 * (1.0 - np.abs(u.data) ** 2) * f_eps.data))


def pinned_density(u: ComplexField, b: ScalarField, eps: float) -> ScalarField:
    """g_ε = ½(b|∇u|² + b²(1-|u|²)²/(2ε²))，规范场取零"""
    grid = u.grid
    potential = b.data ** 2 * (1.0 - np.abs(u.data) ** 2) ** 2 / (2.0 * eps ** 2)
    return ScalarField(grid, 0.5 * (b.data * _grad_sq(u.data, grid) + potential))


def modified_density(u: ComplexField, b: ScalarField, eps: float, f_eps: ScalarField) -> ScalarField:
    """g̃_ε = g_ε + (1-|u|²)b f_ε/2"""
    g = pinned_density(u, b, eps).data
    return ScalarField(u.grid, g + 0.5 * (1.0 - np.abs(u.data) ** 2) * b.data * f_eps.data)


def boundary_term(u: ComplexField, b: ScalarField) -> float:
    """∮((|u|²-1)/4)∇b·ν"""
    grid = u.grid
    bx, by = grid.grad(b.data)
    weight = 0.25 * (np.abs(u.data) ** 2 - 1.0)
    return float(np.sum(grid.normal_flux_load(weight * bx, weight * by)))


def vortex_target(b: ScalarField, vortices: Sequence[Vortex]) -> float:
    """π Σ b(aᵢ)，b 在涡旋位置处双线性插值"""
    grid = b.grid
    if not vortices:
        return 0.0
    interp = RegularGridInterpolator((grid.x, grid.y), b.data)
    points = np.array([[v.x, v.y] for v in vortices])
    return float(np.pi * np.sum(interp(points)))


def total_energies(
    u: ComplexField,
    b: ScalarField,
    eps: float,
    f_eps: ScalarField,
    t: float = 0.0,
    vortices: Optional[Sequence[Vortex]] = None,
) -> EnergyReport:
    grid = u.grid
    F = grid.integrate(pinned_density(u, b, eps).data)
    F_tilde = grid.integrate(modified_density(u, b, eps, f_eps).data) + boundary_term(u, b)
    return EnergyReport(
        t=float(t),
        e_total=grid.integrate(energy_density(u, b, eps).data),
        e_weighted=grid.integrate(weighted_density(u, b, eps, f_eps).data),
        F=F,
        F_tilde=F_tilde,
        normalized=F_tilde / abs(math.log(eps)),
        target=None if vortices is None else vortex_target(b, vortices),
        comparison=abs(F - F_tilde),
    )


def stress_tensor(u: ComplexField, b: ScalarField, eps: float, f_eps: ScalarField) -> StressTensor:
    """T_ε = b(∇u⊗∇u - (e_ε + (1-|u|²)f_ε/2)I)"""
    grid = u.grid
    ux, uy = grid.grad(u.data)
    e_tot = energy_density(u, b, eps).data + 0.5 * (1.0 - np.abs(u.data) ** 2) * f_eps.data
    T11 = b.data * ((ux.real ** 2 + ux.imag ** 2) - e_tot)
    T12 = b.data * (ux.real * uy.real + ux.imag * uy.imag)
    T22 = b.data * ((uy.real ** 2 + uy.imag ** 2) - e_tot)
    return StressTensor(ScalarField(grid, T11), ScalarField(grid, T12), ScalarField(grid, T22))


def stress_divergence_residual(
    u: ComplexField,
    b: ScalarField,
    eps: float,
    f_eps: ScalarField,
    band: int = RESIDUAL_BAND,
) -> float:
    """div T_ε 与 b(∂ₖu, R(u)) - b e ∂ₖh - b(1-|u|²)∂ₖf/2 之差，R(u) = Δu + ∇h·∇u + u(1-|u|²)/ε² + fu"""
    grid = u.grid
    T = stress_tensor(u, b, eps, f_eps)
    div1 = grid.ddx(T.T11.data) + grid.ddy(T.T12.data)
    div2 = grid.ddx(T.T12.data) + grid.ddy(T.T22.data)

    data = u.data
    h = np.log(b.data)
    hx, hy = grid.grad(h)
    fx, fy = grid.grad(f_eps.data)
    ux, uy = grid.grad(data)
    modulus = 1.0 - np.abs(data) ** 2
    operator = grid.lap(data) + hx * ux + hy * uy + data * modulus / eps ** 2 + f_eps.data * data
    e_tot = energy_density(u, b, eps).data + 0.5 * modulus * f_eps.data

    def dot(a, c):
        return a.real * c.real + a.imag * c.imag

    rhs1 = b.data * (dot(ux, operator) - e_tot * hx - 0.5 * modulus * fx)
    rhs2 = b.data * (dot(uy, operator) - e_tot * hy - 0.5 * modulus * fy)
    inner = grid.interior(band)
    return float(np.max(np.hypot(div1 - rhs1, div2 - rhs2)[inner]))


def energy_evolution_residual(
    u_prev: ComplexField,
    u_next: ComplexField,
    dt: float,
    b: ScalarField,
    eps: float,
    f_eps: ScalarField,
    Z: np.ndarray,
    alpha: float,
) -> float:
    """|Δ∫ẽ/dt + ∫αb|∂ₜu|² - |log ε|∫bV·Z - ∮b(∂ₜu, ∂νu)|，空间积分取时间中点"""
    grid = u_prev.grid
    log_eps = abs(math.log(eps))
    energy_change = (
        grid.integrate(weighted_density(u_next, b, eps, f_eps).data)
        - grid.integrate(weighted_density(u_prev, b, eps, f_eps).data)
    ) / dt

    ut = (u_next.data - u_prev.data) / dt
    dissipation = grid.integrate(alpha * b.data * np.abs(ut) ** 2)
    V = velocity(u_prev, u_next, dt)
    work = log_eps * grid.integrate(b.data * (V.x * Z[0] + V.y * Z[1]))

    ux, uy = grid.grad(0.5 * (u_prev.data + u_next.data))
    flux_x = b.data * (ut.real * ux.real + ut.imag * ux.imag)
    flux_y = b.data * (ut.real * uy.real + ut.imag * uy.imag)
    flux = float(np.sum(grid.normal_flux_load(flux_x, flux_y)))
    return abs(energy_change + dissipation - work - flux)


def dissipation_rate(u_prev: ComplexField, u_next: ComplexField, dt: float, b: ScalarField, alpha: float) -> float:
    """∫αb|∂ₜu|²"""
    ut = (u_next.data - u_prev.data) / dt
    return u_prev.grid.integrate(alpha * b.data * np.abs(ut) ** 2)
