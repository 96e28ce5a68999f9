from __future__ import annotations

import numpy as np
import pytest

from vortexlab.errors import NonMonotoneVerdicts, OutOfDomain
from vortexlab.services import limit_law
from vortexlab.services.expressions import compile_expression, constant
from vortexlab.services.grid import Grid
from vortexlab.services.limit_law import (
    ClosedFormForces,
    ConfinementSpec,
    GriddedForces,
    OdeSystem,
    critical_current,
    integrate_law,
    ode_rhs,
    velocity_bound,
)


def drift_system(degrees, form: str = "solved", **kwargs) -> OdeSystem:
    """log b ≡ 0，Z ≡ (1, 0)：涡旋以速度 -2d(0, 1) 匀速运动"""
    forces = ClosedFormForces(constant(0.0), constant(1.0), constant(0.0))
    return OdeSystem(tuple(degrees), forces, form=form, **kwargs)


def test_pinning_only_decay() -> None:
    forces = ClosedFormForces(compile_expression("(x-0.5)^2 + (y-0.5)^2"))
    system = OdeSystem((1,), forces, form="pinning_only")
    solution = integrate_law(system, [(0.8, 0.3)], horizon=1.0, dt=1e-3)
    assert solution.stop_reason == "horizon"
    assert solution.T_star == 1.0
    decay = np.exp(-2.0)
    np.testing.assert_allclose(solution.positions[-1, 0], [0.5 + 0.3 * decay, 0.5 - 0.2 * decay], atol=1e-6)


def test_gyrotropic_drift() -> None:
    forces = ClosedFormForces(compile_expression("0.7*x"))
    system = OdeSystem((1,), forces, alpha=1.0, beta=1.0, form="pinning_only")
    np.testing.assert_allclose(ode_rhs(np.array([[0.5, 0.5]]), system), [[-0.35, 0.35]])


def test_drift_direction_depends_on_degree() -> None:
    velocity = ode_rhs(np.array([[0.5, 0.6], [0.5, 0.4]]), drift_system((1, -1)))
    np.testing.assert_allclose(velocity, [[0.0, -2.0], [0.0, 2.0]])


def test_pair_collision_time() -> None:
    solution = integrate_law(drift_system((1, -1)), [(0.5, 0.6), (0.5, 0.4)], horizon=1.0, dt=1e-3)
    assert solution.stop_reason == "collision"
    assert solution.involved == (0, 1)
    assert solution.T_star == pytest.approx(0.04975, abs=1e-9)
    np.testing.assert_allclose(solution.sample(0.02), [[0.5, 0.56], [0.5, 0.44]], atol=1e-12)


def test_exit_time() -> None:
    solution = integrate_law(drift_system((1,)), [(0.5, 0.1)], horizon=1.0, dt=1e-3)
    assert solution.stop_reason == "exit"
    assert solution.involved == (0,)
    assert solution.T_star == pytest.approx(0.0495, abs=1e-9)


def test_initial_position_outside() -> None:
    with pytest.raises(OutOfDomain):
        integrate_law(drift_system((1,)), [(1.5, 0.5)], horizon=1.0, dt=1e-3)
    with pytest.raises(ValueError):
        integrate_law(drift_system((1, -1)), [(0.5, 0.5)], horizon=1.0, dt=1e-3)


def test_invalid_system() -> None:
    with pytest.raises(ValueError):
        drift_system((1,), form="other")
    with pytest.raises(ValueError):
        drift_system((1,), alpha=0.0)


def test_velocity_bound() -> None:
    assert velocity_bound(1.0, 0.0, 1.0, 1.0, 0.0) == pytest.approx(2.0)
    assert velocity_bound(1.0, 1.0, 0.5, 1.0, 1.0) == pytest.approx(2.0)


def test_gridded_forces_match_closed_form() -> None:
    grid = Grid(65, 65)
    X, Y = grid.mesh()
    log_b = (X - 0.5) ** 2 + (Y - 0.5) ** 2
    gridded = GriddedForces(grid, log_b, np.stack([0.3 * X, 0.2 + 0.0 * Y]))
    closed = ClosedFormForces(
        compile_expression("(x-0.5)^2 + (y-0.5)^2"), compile_expression("0.3*x"), constant(0.2)
    )
    points = np.array([[0.13, 0.71], [0.5, 0.5], [0.87, 0.02]])
    np.testing.assert_allclose(gridded.grad_log_b(points), closed.grad_log_b(points), atol=1e-6)
    np.testing.assert_allclose(gridded.Z(points), closed.Z(points), atol=1e-6)
    np.testing.assert_allclose(gridded.Z_perp(points), closed.Z_perp(points), atol=1e-6)
    np.testing.assert_allclose(gridded.log_b(points), closed.log_b(points), atol=1e-6)


# ===== 临界电流 =====
def well_system() -> OdeSystem:
    """∇log b = 8(a - c)，Z⊥ = (0, 1)：平衡点偏离 c 的距离为 λ/4"""
    forces = ClosedFormForces(compile_expression("4*((x-0.5)^2 + (y-0.5)^2)"), constant(1.0), constant(0.0))
    return OdeSystem((1,), forces)


CONFINEMENT = ConfinementSpec(minima=((0.5, 0.5),), radius=0.1, horizon=3.0, dt=0.01)


def test_critical_current_is_bracketed() -> None:
    result = critical_current(well_system(), [(0.5, 0.5)], [0.0, 0.2, 0.6, 0.8], CONFINEMENT, threads=2)
    assert result.status == "bracketed"
    assert result.verdicts == [True, True, False, False]
    assert result.tolerance == pytest.approx(8e-4)
    assert result.lambda0 == pytest.approx(0.4, abs=2 * result.tolerance)
    lo, hi = result.bracket
    assert lo <= 0.4 <= hi
    assert hi - lo <= result.tolerance
    assert result.bisection


def test_critical_current_above_grid() -> None:
    result = critical_current(well_system(), [(0.5, 0.5)], [0.0, 0.1, 0.2], CONFINEMENT)
    assert result.status == "above_grid"
    assert result.lambda0 is None


def test_critical_current_rejects_unsorted_grid() -> None:
    with pytest.raises(ValueError):
        critical_current(well_system(), [(0.5, 0.5)], [0.2, 0.1], CONFINEMENT)


@pytest.mark.parametrize(
    "unconfined, lambdas",
    [({0.2}, [0.0, 0.2, 0.4]), ({0.0}, [0.0, 0.2])],
)
def test_non_monotone_verdicts(monkeypatch: pytest.MonkeyPatch, unconfined, lambdas) -> None:
    monkeypatch.setattr(limit_law, "confinement_verdict", lambda system, initial, target: system.lam not in unconfined)
    with pytest.raises(NonMonotoneVerdicts) as info:
        critical_current(well_system(), [(0.5, 0.5)], lambdas, CONFINEMENT)
    assert info.value.verdicts == [lam not in unconfined for lam in lambdas]
