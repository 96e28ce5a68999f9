from __future__ import annotations

import numpy as np
import pytest

from vortexlab.services.energetics import (
    boundary_term,
    dissipation_rate,
    energy_density,
    energy_evolution_residual,
    modified_density,
    pinned_density,
    stress_divergence_residual,
    stress_tensor,
    total_energies,
    vortex_target,
)
from vortexlab.services.gl_sim import ForcingCoefficients, ModelParams, SimState, step
from vortexlab.services.grid import ComplexField, Grid, ScalarField
from vortexlab.services.vortexometry import Vortex

from .conftest import smooth_order_parameter


def scalar(grid: Grid, values) -> ScalarField:
    return ScalarField(grid, np.broadcast_to(np.asarray(values, dtype=float), grid.shape).copy())


def test_unit_field_has_no_energy(grid: Grid) -> None:
    X, Y = grid.mesh()
    u = ComplexField(grid, np.ones(grid.shape, dtype=complex))
    b = ScalarField(grid, 1.0 + 0.5 * X * Y)
    report = total_energies(u, b, 0.1, ScalarField(grid, np.sin(X)))
    assert report.e_total == 0.0
    assert report.e_weighted == 0.0
    assert report.F == 0.0
    assert report.F_tilde == pytest.approx(0.0, abs=1e-14)
    assert report.target is None


def test_densities_agree_for_trivial_landscape(grid: Grid) -> None:
    u = ComplexField(grid, smooth_order_parameter(grid))
    b = scalar(grid, 1.0)
    f = scalar(grid, 0.0)
    np.testing.assert_allclose(pinned_density(u, b, 0.2).data, energy_density(u, b, 0.2).data, rtol=1e-12)
    np.testing.assert_allclose(modified_density(u, b, 0.2, f).data, pinned_density(u, b, 0.2).data)
    assert boundary_term(u, b) == 0.0


def test_stress_tensor_trace(grid: Grid) -> None:
    X, Y = grid.mesh()
    u = ComplexField(grid, smooth_order_parameter(grid))
    b = ScalarField(grid, 1.0 + 0.2 * X)
    f = ScalarField(grid, 0.1 * Y)
    T = stress_tensor(u, b, 0.2, f)
    ux, uy = grid.grad(u.data)
    e_tot = energy_density(u, b, 0.2).data + 0.5 * (1.0 - np.abs(u.data) ** 2) * f.data
    expected = b.data * (np.abs(ux) ** 2 + np.abs(uy) ** 2 - 2.0 * e_tot)
    np.testing.assert_allclose(T.trace(), expected, atol=1e-12)
    assert T.T21 is T.T12


def test_stress_divergence_identity_converges() -> None:
    residuals = []
    for n in (33, 65):
        grid = Grid(n, n)
        X, Y = grid.mesh()
        u = ComplexField(grid, smooth_order_parameter(grid))
        b = ScalarField(grid, 1.0 - 0.3 * np.cos(np.pi * X) * np.cos(np.pi * Y))
        f = ScalarField(grid, 0.1 * X * Y)
        residuals.append(stress_divergence_residual(u, b, 0.3, f))
    assert residuals[0] / residuals[1] > 3.0


def test_stress_divergence_vanishes_for_unit_field(grid: Grid) -> None:
    u = ComplexField(grid, np.ones(grid.shape, dtype=complex))
    assert stress_divergence_residual(u, scalar(grid, 1.0), 0.1, scalar(grid, 0.0)) == 0.0


def test_single_vortex_energy_scale() -> None:
    grid = Grid(160, 160)
    eps = 0.02
    X, Y = grid.mesh()
    dx, dy = X - 0.5, Y - 0.5
    u = ComplexField(grid, np.tanh(np.hypot(dx, dy) / eps) * np.exp(1j * np.arctan2(dy, dx)))
    b = scalar(grid, 1.0)
    report = total_energies(u, b, eps, scalar(grid, 0.0), vortices=[Vortex(0.5, 0.5, 1)])
    assert report.target == pytest.approx(np.pi)
    assert 0.75 < report.normalized / report.target < 1.4
    assert report.comparison == pytest.approx(0.0, abs=1e-12)


def test_vortex_target_interpolates_b(grid: Grid) -> None:
    X, _ = grid.mesh()
    b = ScalarField(grid, 1.0 + 0.5 * X)
    vortices = [Vortex(0.2, 0.5, 1), Vortex(0.6, 0.5, -1)]
    assert vortex_target(b, vortices) == pytest.approx(2.4 * np.pi)
    assert vortex_target(b, []) == 0.0


def test_dissipation_of_identical_frames(grid: Grid) -> None:
    u = ComplexField(grid, smooth_order_parameter(grid))
    assert dissipation_rate(u, u, 1e-3, scalar(grid, 1.0), 1.0) == 0.0


def test_energy_balance_over_one_step() -> None:
    grid = Grid(64, 64)
    params = ModelParams(alpha=1.0, eps=0.3)
    state = SimState(0.0, ComplexField(grid, smooth_order_parameter(grid)), params, ForcingCoefficients.none(grid))
    dt = 1e-5
    new = step(state, dt)
    b = scalar(grid, 1.0)
    f = scalar(grid, 0.0)
    Z = np.zeros((2,) + grid.shape)
    residual = energy_evolution_residual(state.u, new.u, dt, b, params.eps, f, Z, params.alpha)
    dissipation = dissipation_rate(state.u, new.u, dt, b, params.alpha)
    assert dissipation > 1.0
    assert residual < 0.1 * dissipation
