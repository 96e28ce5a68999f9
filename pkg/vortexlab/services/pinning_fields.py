import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from ..config import settings
from ..errors import CompatibilityViolation, NonConvergence
from .grid import EDGES, NORMALS, ComplexField, Grid, ScalarField, VectorField

# 配置日志
logger = logging.getLogger(__name__)

IDENTITY_BAND = 3


@dataclass(frozen=True)
class BoundaryData:
    """外加场 H 与电流 J（以及可选的 I）的边界数据

    数组覆盖整个网格，只读取边界节点上的值。I 缺省时取 I = -∇⊥H，
    即 I·ν 为 H 沿边界的切向导数。
    """

    H: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)  # (2, nx, ny)
    I: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def zero(cls, grid: Grid) -> "BoundaryData":
        return cls(np.zeros(grid.shape), np.zeros((2,) + grid.shape))

    def scaled(self, factor: float) -> "BoundaryData":
        return BoundaryData(
            factor * self.H,
            factor * self.J,
            None if self.I is None else factor * self.I,
        )

    def normal_J(self, grid: Grid) -> Dict[str, np.ndarray]:
        return _normal_component(grid, self.J)

    def normal_I(self, grid: Grid) -> Dict[str, np.ndarray]:
        if self.I is not None:
            return _normal_component(grid, self.I)
        return {edge: grid.tangential_derivative(self.H, edge) for edge in EDGES}


def _normal_component(grid: Grid, V: np.ndarray) -> Dict[str, np.ndarray]:
    values = {}
    for edge in EDGES:
        n1, n2 = NORMALS[edge]
        values[edge] = n1 * grid.edge_values(V[0], edge) + n2 * grid.edge_values(V[1], edge)
    return values


@dataclass(frozen=True)
class AuxiliaryFields:
    phi0: ScalarField
    h0: ScalarField
    xi0: ScalarField
    psi0: ScalarField
    X0: VectorField
    Z: Optional[VectorField] = None
    f_eps: Optional[ScalarField] = None
    identity_residual: float = 0.0
    curl_residual: float = 0.0
    divergence_residual: float = 0.0
    compatibility_defect: float = 0.0
    f_c1_norm: float = 0.0

    def summary(self) -> Dict[str, float]:
        return {
            "identity_residual": self.identity_residual,
            "curl_residual": self.curl_residual,
            "divergence_residual": self.divergence_residual,
            "compatibility_defect": self.compatibility_defect,
            "f_c1_norm": self.f_c1_norm,
        }


# ===== 有限体积装配 =====
def _difference(n: int) -> sparse.spmatrix:
    return sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))


def face_operators(grid: Grid) -> Tuple[sparse.spmatrix, sparse.spmatrix]:
    """x 面与 y 面上的一阶差分矩阵（展平顺序 i*ny + j）"""
    dx = sparse.kron(_difference(grid.nx), sparse.identity(grid.ny))
    dy = sparse.kron(sparse.identity(grid.nx), _difference(grid.ny))
    return dx.tocsr(), dy.tocsr()


def stiffness(grid: Grid, k: np.ndarray) -> sparse.csr_matrix:
    """-div(k∇·) 的顶点中心有限体积刚度矩阵，面系数取两端节点 k 的算术平均"""
    dx, dy = face_operators(grid)
    cx = 0.5 * (k[1:, :] + k[:-1, :]) * grid.wy[None, :] / grid.hx
    cy = 0.5 * (k[:, 1:] + k[:, :-1]) * grid.wx[:, None] / grid.hy
    K = dx.T @ sparse.diags(cx.ravel()) @ dx + dy.T @ sparse.diags(cy.ravel()) @ dy
    return K.tocsr()


def mass(grid: Grid, weight: Optional[np.ndarray] = None) -> sparse.dia_matrix:
    w = grid.weights if weight is None else grid.weights * weight
    return sparse.diags(w.ravel())


def _solve_spd(A: sparse.spmatrix, rhs: np.ndarray, grid: Grid, problem: str) -> np.ndarray:
    rhs = rhs.ravel()
    norm = float(np.linalg.norm(rhs))
    if norm == 0.0:
        return np.zeros_like(rhs)

    maxiter = settings.solver_maxiter_factor * max(grid.nx, grid.ny)
    preconditioner = sparse.diags(1.0 / A.diagonal())
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    solution, info = cg(A, rhs, rtol=settings.solver_rtol, maxiter=maxiter, M=preconditioner, callback=count)
    residual = float(np.linalg.norm(rhs - A @ solution)) / norm
    if info != 0:
        logger.error(f"{problem} 求解失败: info={info}, 残差={residual:.3e}")
        raise NonConvergence(problem, residual, iterations)
    logger.debug(f"{problem} 收敛: {iterations} 次迭代, 相对残差 {residual:.3e}")
    return solution


def _solve_dirichlet(A: sparse.csr_matrix, rhs: np.ndarray, trace: np.ndarray, grid: Grid, problem: str) -> np.ndarray:
    """消去边界节点后求解内部方程，边界值精确等于 trace"""
    boundary = grid.boundary_mask().ravel()
    inner_idx = np.flatnonzero(~boundary)
    bound_idx = np.flatnonzero(boundary)
    values = trace.ravel().copy()

    A_ii = A[inner_idx][:, inner_idx]
    A_ib = A[inner_idx][:, bound_idx]
    reduced = rhs.ravel()[inner_idx] - A_ib @ values[bound_idx]
    values[inner_idx] = _solve_spd(A_ii.tocsr(), reduced, grid, problem)
    return values.reshape(grid.shape)


# ===== 五个辅助问题 =====
def solve_phi0(
    b: ScalarField,
    bd: BoundaryData,
    alpha: float,
    sigma: float,
    source: Optional[np.ndarray] = None,
) -> ScalarField:
    """-σΔφ₀ + αbφ₀ = source，σ∂νφ₀ = (bJ - I)·ν"""
    grid = b.grid
    A = sigma * stiffness(grid, np.ones(grid.shape)) + mass(grid, alpha * b.data)
    rhs = _phi0_boundary_load(b, bd)
    if source is not None:
        rhs = rhs + grid.weights * source
    phi = _solve_spd(A, rhs, grid, "phi0")
    return ScalarField(grid, phi.reshape(grid.shape))


def _phi0_boundary_load(b: ScalarField, bd: BoundaryData) -> np.ndarray:
    grid = b.grid
    J_nu = bd.normal_J(grid)
    I_nu = bd.normal_I(grid)
    data = {edge: grid.edge_values(b.data, edge) * J_nu[edge] - I_nu[edge] for edge in EDGES}
    return grid.edge_load(data)


def solve_h0(
    b: ScalarField,
    phi0: ScalarField,
    bd: BoundaryData,
    sigma: float,
    source: Optional[np.ndarray] = None,
) -> ScalarField:
    """-div(∇h₀/b) + h₀ = -σ∇⊥(1/b)·∇φ₀，边界上 h₀ = H"""
    grid = b.grid
    inv_b = 1.0 / b.data
    ib_x, ib_y = grid.grad(inv_b)
    phi_x, phi_y = grid.grad(phi0.data)
    # ∇⊥(1/b) = (-∂y(1/b), ∂x(1/b))
    rhs_density = -sigma * (-ib_y * phi_x + ib_x * phi_y)
    if source is not None:
        rhs_density = rhs_density + source

    A = stiffness(grid, inv_b) + mass(grid)
    h = _solve_dirichlet(A, grid.weights * rhs_density, bd.H, grid, "h0")
    return ScalarField(grid, h)


def solve_xi0_X0(h0: ScalarField) -> Tuple[ScalarField, VectorField]:
    """Δξ₀ = h₀，ξ₀ = 0 于边界；X₀ = ∇⊥ξ₀"""
    grid = h0.grid
    A = stiffness(grid, np.ones(grid.shape))
    xi = _solve_dirichlet(A, -grid.weights * h0.data, np.zeros(grid.shape), grid, "xi0")
    xi_x, xi_y = grid.grad(xi)
    return ScalarField(grid, xi), VectorField.from_components(grid, -xi_y, xi_x)


def _psi0_rhs(
    b: ScalarField,
    phi0: ScalarField,
    h0: ScalarField,
    bd: BoundaryData,
    sigma: float,
    alpha: float,
    phi_source: Optional[np.ndarray],
    source: Optional[np.ndarray],
) -> Tuple[np.ndarray, float, float]:
    grid = b.grid
    W = grid.weights
    boundary = grid.boundary_mask()

    # 内部面：F = (σ∇φ₀ - ∇⊥h₀)/b 的面平均通量
    phi_x, phi_y = grid.grad(phi0.data)
    h_x, h_y = grid.grad(h0.data)
    F1 = (sigma * phi_x + h_y) / b.data
    F2 = (sigma * phi_y - h_x) / b.data
    dx, dy = face_operators(grid)
    qx = 0.5 * (F1[1:, :] + F1[:-1, :]) * grid.wy[None, :]
    qy = 0.5 * (F2[:, 1:] + F2[:, :-1]) * grid.wx[:, None]
    face_part = (dx.T @ qx.ravel() + dy.T @ qy.ravel()).reshape(grid.shape)

    # 边界：σ∂νφ₀ 由 φ₀ 自身的离散残差恢复，-∇⊥h₀·ν 为 h₀ 的切向导数
    A_phi = sigma * stiffness(grid, np.ones(grid.shape)) + mass(grid, alpha * b.data)
    recovered = (A_phi @ phi0.data.ravel()).reshape(grid.shape)
    if phi_source is not None:
        recovered = recovered - W * phi_source
    recovered = np.where(boundary, recovered, 0.0)
    tangential = grid.edge_load({edge: grid.tangential_derivative(h0.data, edge) for edge in EDGES})
    flux_part = (recovered + tangential) / b.data

    current = grid.edge_load(bd.normal_J(grid))
    rhs = current + face_part - flux_part
    if source is not None:
        rhs = rhs - W * source

    defect = float(np.sum(rhs))
    scale = float(np.sum(np.abs(current)) + np.sum(np.abs(flux_part)))
    if source is not None:
        scale += float(np.sum(np.abs(W * source)))
    return rhs, defect, scale


def compatibility_defect(
    b: ScalarField,
    phi0: ScalarField,
    h0: ScalarField,
    bd: BoundaryData,
    sigma: float,
    alpha: float,
    phi_source: Optional[np.ndarray] = None,
    source: Optional[np.ndarray] = None,
) -> float:
    """ψ₀ 问题右端项投影前的相对相容性缺陷"""
    _, defect, scale = _psi0_rhs(b, phi0, h0, bd, sigma, alpha, phi_source, source)
    return abs(defect) / scale if scale > 0 else 0.0


def solve_psi0(
    b: ScalarField,
    phi0: ScalarField,
    h0: ScalarField,
    bd: BoundaryData,
    sigma: float,
    alpha: float,
    phi_source: Optional[np.ndarray] = None,
    source: Optional[np.ndarray] = None,
) -> ScalarField:
    """Δψ₀ = div((σ∇φ₀ - ∇⊥h₀)/b)，∂νψ₀ = J·ν；返回零均值代表元

    alpha 与 phi_source 用于从 φ₀ 的离散方程恢复其边界通量。
    """
    grid = b.grid
    rhs, defect, scale = _psi0_rhs(b, phi0, h0, bd, sigma, alpha, phi_source, source)
    relative = abs(defect) / scale if scale > 0 else 0.0
    if relative > settings.compatibility_rtol:
        raise CompatibilityViolation(relative, settings.compatibility_rtol)

    # 把剩余缺陷按边界权重从边界节点上扣除
    bw = grid.boundary_weights
    rhs = rhs - defect * bw / bw.sum()

    K = stiffness(grid, np.ones(grid.shape))
    psi = _solve_spd(K, rhs, grid, "psi0").reshape(grid.shape)
    psi -= grid.integrate(psi) / grid.area
    logger.debug(f"psi0 相容性缺陷 {relative:.3e}")
    return ScalarField(grid, psi)


# ===== Z 与 f_ε =====
def assemble_Z_and_f(
    fields: AuxiliaryFields,
    b: ScalarField,
    phi0: ScalarField,
    beta: float,
    eps: float,
    lam: float,
) -> Tuple[VectorField, ScalarField]:
    """返回 λZ 与 f_ε = Δ√b/√b - λ²|log ε|²|Z|² + βλ|log ε|²φ₀，其中 Z = ∇ψ₀ - X₀"""
    grid = b.grid
    log_eps = abs(np.log(eps))
    psi_x, psi_y = grid.grad(fields.psi0.data)
    Z1 = psi_x - fields.X0.x
    Z2 = psi_y - fields.X0.y

    sqrt_b = np.sqrt(b.data)
    f = grid.lap(sqrt_b) / sqrt_b
    f = f - (lam * log_eps) ** 2 * (Z1 ** 2 + Z2 ** 2) + beta * lam * log_eps ** 2 * phi0.data
    return VectorField.from_components(grid, lam * Z1, lam * Z2), ScalarField(grid, f)


def c1_norm(f: ScalarField) -> float:
    fx, fy = f.grid.grad(f.data)
    return float(np.max(np.abs(f.data)) + np.max(np.hypot(fx, fy)))


def identity_residual(
    b: ScalarField,
    phi0: ScalarField,
    h0: ScalarField,
    psi0: ScalarField,
    X0: VectorField,
    sigma: float,
    band: int = IDENTITY_BAND,
) -> float:
    """σ∇φ₀ - ∇⊥curl X₀ - b(∇ψ₀ - X₀) 在内部带上的最大范数"""
    grid = b.grid
    phi_x, phi_y = grid.grad(phi0.data)
    psi_x, psi_y = grid.grad(psi0.data)
    c_x, c_y = grid.grad(grid.curl(X0.x, X0.y))
    r1 = sigma * phi_x + c_y - b.data * (psi_x - X0.x)
    r2 = sigma * phi_y - c_x - b.data * (psi_y - X0.y)
    inner = grid.interior(band)
    return float(np.max(np.hypot(r1[inner], r2[inner])))


def compute_auxiliary_fields(
    b: ScalarField,
    bd: BoundaryData,
    alpha: float,
    beta: float,
    sigma: float,
    eps: float,
    lam: float,
) -> AuxiliaryFields:
    """依次求解 φ₀, h₀, ξ₀/X₀, ψ₀ 并组装 Z 与 f_ε"""
    grid = b.grid
    phi0 = solve_phi0(b, bd, alpha, sigma)
    h0 = solve_h0(b, phi0, bd, sigma)
    xi0, X0 = solve_xi0_X0(h0)
    defect = compatibility_defect(b, phi0, h0, bd, sigma, alpha)
    psi0 = solve_psi0(b, phi0, h0, bd, sigma, alpha)

    inner = grid.interior(IDENTITY_BAND)
    curl_res = float(np.max(np.abs((grid.curl(X0.x, X0.y) - h0.data)[inner])))
    div_res = float(np.max(np.abs(grid.div(X0.x, X0.y)[inner])))
    fields = AuxiliaryFields(
        phi0=phi0,
        h0=h0,
        xi0=xi0,
        psi0=psi0,
        X0=X0,
        identity_residual=identity_residual(b, phi0, h0, psi0, X0, sigma),
        curl_residual=curl_res,
        divergence_residual=div_res,
        compatibility_defect=defect,
    )

    Z, f_eps = assemble_Z_and_f(fields, b, phi0, beta, eps, lam)
    norm = c1_norm(f_eps)
    if norm > 1.0 / eps:
        logger.warning(f"‖f_ε‖_C¹ = {norm:.4g} 超过 1/ε = {1.0 / eps:.4g}")
    logger.info(f"辅助场求解完成: 恒等式残差 {fields.identity_residual:.3e}, 相容性缺陷 {defect:.3e}")
    return replace(fields, Z=Z, f_eps=f_eps, f_c1_norm=norm)


# ===== 未知量变换 =====
def change_unknowns(
    u: ComplexField,
    b: ScalarField,
    eps: float,
    psi0: Optional[ScalarField] = None,
    lam: float = 1.0,
) -> ComplexField:
    """v = u·exp(-iλ|log ε|ψ₀)/√b"""
    phase = np.ones(u.grid.shape, dtype=complex)
    if psi0 is not None:
        phase = np.exp(-1j * lam * abs(np.log(eps)) * psi0.data)
    return ComplexField(u.grid, u.data * phase / np.sqrt(b.data))


def restore_unknowns(
    v: ComplexField,
    b: ScalarField,
    eps: float,
    psi0: Optional[ScalarField] = None,
    lam: float = 1.0,
) -> ComplexField:
    phase = np.ones(v.grid.shape, dtype=complex)
    if psi0 is not None:
        phase = np.exp(1j * lam * abs(np.log(eps)) * psi0.data)
    return ComplexField(v.grid, v.data * phase * np.sqrt(b.data))
