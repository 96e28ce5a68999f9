import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List

from ..models import RunConfig, StudyReport
from ..plots import loglog_svg, trajectories_svg
from ..services.studies import (
    EnergyGrowth,
    TrajectoryComparison,
    compare_trajectories,
    excess_trend,
    trajectories_from_solution,
)
from ..storage.run_storage import RunStorage, read_trajectories
from .law import solve_law
from .simulate import SimulationCase, simulate_case, write_case

# 配置日志
logger = logging.getLogger(__name__)


def _strictly_decreasing(values: List[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _compare_files(config: RunConfig, storage: RunStorage, report: StudyReport) -> int:
    pde = read_trajectories(config.compare.pde_trajectories)
    ode = read_trajectories(config.compare.ode_trajectories)
    comparison = compare_trajectories(pde, ode)
    report.add({"source": "files"}, comparison.as_metrics(), passed=True)
    storage.write_json("compare.json", report.model_dump(mode="json"))
    if config.compare.plots:
        storage.write_text("trajectories.svg", trajectories_svg(
            {"PDE": pde, "ODE": ode}, config.domain.lx, config.domain.ly, "trajectory comparison"))
    logger.info(f"轨迹文件比较完成: sup 误差 {comparison.sup_error:.4e}")
    return 0


def cmd_compare(config: RunConfig, storage: RunStorage, threads: int = 1) -> int:
    """在一组 ε 上比较 PDE 涡旋轨迹与极限律，并检查能量增长"""
    report = StudyReport(kind="compare", config_hash=config.config_hash())
    if config.compare.pde_trajectories and config.compare.ode_trajectories:
        return _compare_files(config, storage, report)

    solution = solve_law(config)
    ode = trajectories_from_solution(solution)
    storage.write_trajectories("law_trajectories.csv", ode)

    eps_values = sorted(config.compare.eps_values, reverse=True)

    def run(eps: float) -> SimulationCase:
        return simulate_case(config, eps=eps, storage=storage, prefix=f"eps_{eps:g}/")

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        cases = list(pool.map(run, eps_values))

    comparisons: Dict[float, TrajectoryComparison] = {}
    growth: Dict[float, EnergyGrowth] = {}
    for eps, case in zip(eps_values, cases):
        growth[eps] = write_case(storage, case, prefix=f"eps_{eps:g}/")
        comparisons[eps] = compare_trajectories(case.record.tracking.trajectories, ode, case.gate_time)
        metrics = dict(comparisons[eps].as_metrics(), **growth[eps].as_metrics())
        report.add({"eps": eps}, metrics, passed=growth[eps].passed)

    errors = [comparisons[e].sup_error for e in eps_values]
    report.verdicts["errors_decreasing"] = _strictly_decreasing(errors)
    report.verdicts["excess_non_increasing"] = excess_trend(growth)
    terminal = [comparisons[e].terminal_discrepancy for e in eps_values]
    if all(math.isfinite(v) for v in terminal):
        report.verdicts["terminal_decreasing"] = _strictly_decreasing(terminal)

    storage.write_json("compare.json", report.model_dump(mode="json"))
    storage.write_csv("compare.csv", [
        {"eps": e, "sup_error": comparisons[e].sup_error,
         "terminal_discrepancy": comparisons[e].terminal_discrepancy,
         "max_excess": growth[e].max_excess, "growth": growth[e].growth}
        for e in eps_values
    ])
    if config.compare.plots:
        series = {"ODE": ode}
        series.update({f"ε={e:g}": c.record.tracking.trajectories for e, c in zip(eps_values, cases)})
        storage.write_text("trajectories.svg", trajectories_svg(
            series, config.domain.lx, config.domain.ly, "PDE vs ODE"))
        storage.write_text("error_vs_eps.svg", loglog_svg(
            eps_values, errors, "sup trajectory error", "ε", "error"))

    logger.info(f"ε 比较完成: 误差 {['%.3e' % e for e in errors]}，判定 {report.verdicts}")
    return 0 if report.passed else 1
