from __future__ import annotations

import math

import numpy as np
import pytest

from vortexlab.commands.law import solve_law
from vortexlab.commands.simulate import simulate_case
from vortexlab.errors import CountMismatch
from vortexlab.models import RunConfig, parse_run_config
from vortexlab.services.energetics import energy_evolution_residual
from vortexlab.services.expressions import compile_expression, constant
from vortexlab.services.gl_sim import ForcingCoefficients, ModelParams, SimState, default_dt, make_well_prepared, step
from vortexlab.services.grid import ComplexField, Grid, ScalarField
from vortexlab.services.limit_law import ClosedFormForces, OdeSystem, integrate_law
from vortexlab.services.studies import (
    EnergyGrowth,
    compare_trajectories,
    convergence_battery,
    energy_growth_study,
    excess_trend,
    observed_order,
    run_simulation,
    trajectories_from_solution,
)
from vortexlab.services.vortexometry import Trajectory, TrackingParams

from .conftest import smooth_order_parameter


def decay_trajectories(dt: float):
    system = OdeSystem((1,), ClosedFormForces(compile_expression("(x-0.5)^2 + (y-0.5)^2")), form="pinning_only")
    return trajectories_from_solution(integrate_law(system, [(0.8, 0.3)], horizon=1.0, dt=dt))


def collision_trajectories():
    forces = ClosedFormForces(constant(0.0), constant(1.0), constant(0.0))
    system = OdeSystem((1, -1), forces)
    return trajectories_from_solution(integrate_law(system, [(0.5, 0.6), (0.5, 0.4)], horizon=1.0, dt=1e-3))


# ===== 轨迹比较 =====
def test_solution_to_trajectories() -> None:
    tracks = collision_trajectories()
    assert [tr.degree for tr in tracks] == [1, -1]
    assert all(tr.termination == "collision" for tr in tracks)
    assert tracks[0].t_end == pytest.approx(0.04975)
    (horizon,) = decay_trajectories(1e-2)
    assert horizon.termination == "horizon"
    assert horizon.t_end == 1.0


def test_identical_trajectories_have_zero_error() -> None:
    tracks = collision_trajectories()
    comparison = compare_trajectories(tracks, tracks)
    assert comparison.errors == [0.0, 0.0]
    assert comparison.sup_error == 0.0
    assert comparison.window == pytest.approx((0.0, 0.04975))
    assert comparison.terminal_discrepancy == 0.0
    assert comparison.reason_pde == comparison.reason_ode == "collision"


def test_gate_time_shrinks_window() -> None:
    tracks = collision_trajectories()
    comparison = compare_trajectories(tracks, tracks, gate_time=0.01)
    assert comparison.window[1] == pytest.approx(0.03975)


def test_refined_ode_agrees() -> None:
    comparison = compare_trajectories(decay_trajectories(5e-4), decay_trajectories(1e-3))
    assert comparison.sup_error < 1e-6
    assert comparison.window == pytest.approx((0.0, 1.0))
    assert math.isinf(comparison.t_star_pde)
    assert math.isnan(comparison.terminal_discrepancy)


def test_count_mismatches() -> None:
    ode = decay_trajectories(1e-2)
    with pytest.raises(CountMismatch):
        compare_trajectories([], ode)
    with pytest.raises(CountMismatch):
        compare_trajectories(ode, [])

    wrong_degree = Trajectory(id=0, degree=-1)
    wrong_degree.append(0.0, (0.8, 0.3))
    wrong_degree.append(1.0, (0.5, 0.5))
    wrong_degree.close("horizon", 1.0)
    with pytest.raises(CountMismatch):
        compare_trajectories([wrong_degree], ode)

    nucleated = Trajectory(id=1, degree=1)
    nucleated.append(0.5, (0.2, 0.2))
    nucleated.append(1.0, (0.2, 0.2))
    nucleated.close("horizon", 1.0)
    with pytest.raises(CountMismatch):
        compare_trajectories(decay_trajectories(1e-2) + [nucleated], ode)


def test_pde_exit_bounds_window() -> None:
    ode = decay_trajectories(1e-2)
    pde = decay_trajectories(1e-2)
    pde[0].close("exit", 0.4)
    comparison = compare_trajectories(pde, ode)
    assert comparison.t_star_pde == pytest.approx(0.4)
    assert comparison.reason_pde == "exit"
    assert comparison.window[1] == pytest.approx(0.4)
    assert comparison.sup_error == 0.0
    assert math.isnan(comparison.terminal_discrepancy)


# ===== 模拟与能量 =====
def centred_vortex_state(grid: Grid, eps: float) -> SimState:
    X, Y = grid.mesh()
    dx, dy = X - 0.5, Y - 0.5
    u = np.tanh(np.hypot(dx, dy) / eps) * np.exp(1j * np.arctan2(dy, dx))
    return SimState(0.0, ComplexField(grid, u), ModelParams(eps=eps), ForcingCoefficients.none(grid))


def test_stationary_vortex_run() -> None:
    grid = Grid(64, 64)
    eps = 0.1
    state = centred_vortex_state(grid, eps)
    b = ScalarField(grid, np.ones(grid.shape))
    dt = 0.25 * grid.h ** 2
    snapshots = []
    record = run_simulation(
        state, b, horizon=20 * dt, dt=dt, every=5,
        tracking=TrackingParams.for_run(grid, eps, 5 * dt, 1.0),
        on_snapshot=snapshots.append, snapshot_every=10,
    )
    assert len(record.frames) == 5
    assert len(snapshots) == 3
    assert all(len(frame.vortices) == 1 for frame in record.frames)
    assert record.final.t == pytest.approx(20 * dt)
    (tr,) = record.tracking.trajectories
    assert tr.termination == "horizon"

    rows = record.diagnostics_rows()
    assert len(rows) == 5
    assert math.isnan(rows[0]["residual"])
    assert rows[-1]["dissipation"] >= 0.0
    assert rows[0]["vortex_count"] == 1

    growth = energy_growth_study(record)
    assert growth.count_constant
    assert growth.threshold == pytest.approx(math.pi)
    assert growth.growth <= 1e-9
    assert growth.passed


def test_repeated_run_is_bitwise_identical() -> None:
    grid = Grid(32, 32)
    b = ScalarField(grid, np.ones(grid.shape))
    dt = 0.25 * grid.h ** 2
    tracking = TrackingParams.for_run(grid, 0.1, 5 * dt, 1.0)
    runs = [
        run_simulation(centred_vortex_state(grid, 0.1), b, horizon=30 * dt, dt=dt, every=5, tracking=tracking)
        for _ in range(2)
    ]
    first, second = runs
    assert np.array_equal(first.final.u.data, second.final.u.data)
    for row1, row2 in zip(first.diagnostics_rows(), second.diagnostics_rows()):
        assert row1.keys() == row2.keys()
        values1 = np.array(list(row1.values()), dtype=float)
        values2 = np.array(list(row2.values()), dtype=float)
        assert np.array_equal(values1, values2, equal_nan=True)
    assert [tr.positions for tr in first.tracking.trajectories] == [tr.positions for tr in second.tracking.trajectories]


def test_driven_energy_residual_halves_with_dt() -> None:
    grid = Grid(64, 64)
    X, Y = grid.mesh()
    b = ScalarField(grid, 1.0 - 0.3 * np.cos(np.pi * X) * np.cos(np.pi * Y))
    f = ScalarField(grid, np.zeros(grid.shape))
    Z = np.stack([0.5 + 0.2 * Y, 0.2 * X])
    params = ModelParams(eps=0.3)
    coeffs = ForcingCoefficients.build(grid, np.log(b.data), Z, 0.0)
    state = SimState(0.0, ComplexField(grid, smooth_order_parameter(grid)), params, coeffs)
    residuals = []
    for dt in (4e-3, 2e-3):
        new = step(state, dt)
        residuals.append(energy_evolution_residual(state.u, new.u, dt, b, params.eps, f, coeffs.Z, params.alpha))
    assert 1.4 < residuals[0] / residuals[1] < 2.6


@pytest.mark.slow
def test_strong_current_pushes_vortex_out() -> None:
    grid = Grid(64, 64)
    params = ModelParams(eps=0.05)
    b = ScalarField(grid, np.ones(grid.shape))
    coeffs = ForcingCoefficients.build(grid, 0.0, np.array([3.0, 0.0])[:, None, None], 0.0)
    u = make_well_prepared([(0.5, 0.5)], [1], params, b, grid)
    dt = default_dt(grid, params)
    record = run_simulation(
        SimState(0.0, u, params, coeffs), b, horizon=0.2, dt=dt, every=10,
        tracking=TrackingParams.for_run(grid, params.eps, 10 * dt, 6.0),
    )
    (tr,) = record.tracking.trajectories
    assert tr.termination == "exit"
    assert tr.t_end < 0.2
    assert record.tracking.t_star == tr.t_end


def test_excess_trend() -> None:
    def growth(max_excess: float) -> EnergyGrowth:
        return EnergyGrowth([0.0], [max_excess], max_excess, 0.0, 0.0, math.pi, True)

    assert excess_trend({0.08: growth(0.5), 0.04: growth(0.4), 0.02: growth(0.4)})
    assert not excess_trend({0.08: growth(0.3), 0.04: growth(0.4)})


# ===== 收敛阶 =====
def test_observed_order_of_exact_power_law() -> None:
    steps = [0.1, 0.05, 0.025]
    assert observed_order(steps, [3.0 * s ** 2 for s in steps]) == pytest.approx(2.0)
    assert observed_order(steps, [s for s in steps]) == pytest.approx(1.0)


@pytest.mark.parametrize("selector", ["grid", "rk4", "imex"])
def test_battery_rows_pass(selector: str) -> None:
    rows = convergence_battery([selector], ladder=[17, 33, 65], dt_ladder=[0.1, 0.05, 0.025])
    assert rows
    assert all(row.selector == selector for row in rows)
    assert all(row.passed for row in rows), [(row.quantity, row.order) for row in rows]


@pytest.mark.slow
@pytest.mark.parametrize("selector", ["elliptic", "identity"])
def test_battery_elliptic_rows_pass(selector: str) -> None:
    rows = convergence_battery([selector], ladder=[33, 65, 129], dt_ladder=[0.1, 0.05, 0.025])
    assert all(row.passed for row in rows), [(row.quantity, row.order) for row in rows]


def test_battery_validation() -> None:
    with pytest.raises(ValueError):
        convergence_battery(["grid"], ladder=[17, 33], dt_ladder=[0.1, 0.05, 0.025])
    with pytest.raises(ValueError):
        convergence_battery(["spectral"], ladder=[17, 33, 65], dt_ladder=[0.1, 0.05, 0.025])


# ===== ε 阶梯 =====
EPS_LADDER = (0.08, 0.04, 0.02)


def ladder_config(vortices, landscape, Z, horizon: float) -> RunConfig:
    return parse_run_config({
        "domain": {"lx": 2.0, "ly": 2.0, "nx": 256, "ny": 256},
        "landscape": landscape,
        "forcing": {"mode": "prescribed", "Z": list(Z)},
        "vortices": [{"position": list(p), "degree": d} for p, d in vortices],
        "time": {"horizon": horizon, "diagnostics_every": 20},
        "law": {"dt": 1e-3},
    })


def ladder_runs(config: RunConfig, eps_values):
    ode = trajectories_from_solution(solve_law(config))
    cases = {eps: simulate_case(config, eps=eps) for eps in eps_values}
    comparisons = {
        eps: compare_trajectories(case.record.tracking.trajectories, ode, case.gate_time)
        for eps, case in cases.items()
    }
    return ode, cases, comparisons


WELL = {"kind": "gaussian_well", "wells": [{"center": [1.0, 1.0], "depth": 0.5, "width": 0.3}]}


@pytest.fixture(scope="module")
def pinned_runs():
    return {
        degree: ladder_runs(ladder_config([((1.1, 1.0), degree)], WELL, ("0.3", "0"), 0.1), EPS_LADDER)
        for degree in (1, -1)
    }


@pytest.mark.slow
@pytest.mark.parametrize("degree", [1, -1])
def test_trajectory_error_decreases_with_eps(pinned_runs, degree: int) -> None:
    ode, cases, comparisons = pinned_runs[degree]
    errors = [comparisons[eps].sup_error for eps in EPS_LADDER]
    assert all(b < a for a, b in zip(errors, errors[1:])), errors

    # Z = (0.3, 0) 时 ȧ₂ 的驱动分量为 -2d·0.3
    (law,) = ode
    assert np.sign(law.positions[-1][1] - 1.0) == -degree
    (track,) = cases[EPS_LADDER[-1]].record.tracking.trajectories
    assert np.sign(track.positions[-1][1] - 1.0) == -degree


@pytest.mark.slow
def test_excess_energy_does_not_grow_as_eps_shrinks(pinned_runs) -> None:
    _, cases, _ = pinned_runs[1]
    growth = {eps: energy_growth_study(cases[eps].record) for eps in (0.04, 0.02)}
    assert excess_trend(growth)
    for result in growth.values():
        assert result.count_constant
        assert result.max_excess < result.threshold
        assert result.threshold == pytest.approx(math.pi * cases[0.02].record.inf_b)


@pytest.mark.slow
def test_collision_time_converges_with_eps() -> None:
    config = ladder_config(
        [((1.0, 1.2), 1), ((1.0, 0.8), -1)],
        {"kind": "constant", "value": 1.0},
        ("1", "0"),
        0.2,
    )
    _, _, comparisons = ladder_runs(config, (0.04, 0.02))
    for comparison in comparisons.values():
        assert comparison.reason_pde == comparison.reason_ode == "collision"
    gaps = [comparisons[eps].terminal_discrepancy for eps in (0.04, 0.02)]
    assert gaps[1] < gaps[0]
