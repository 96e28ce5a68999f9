import logging

from ..errors import NonMonotoneVerdicts
from ..models import RunConfig, StudyReport
from ..services.limit_law import ConfinementSpec, critical_current
from ..storage.run_storage import RunStorage
from .law import law_system

# 配置日志
logger = logging.getLogger(__name__)


def cmd_critical(config: RunConfig, storage: RunStorage, threads: int = 1) -> int:
    """在 λ 网格上扫描约束判定，二分求临界电流 λ₀"""
    crit = config.critical
    minima = tuple(tuple(p) for p in (crit.minima or config.positions))
    confinement = ConfinementSpec(minima=minima, radius=crit.radius, horizon=crit.horizon, dt=crit.dt)
    template = law_system(config)
    report = StudyReport(kind="critical", config_hash=config.config_hash())

    try:
        result = critical_current(template, config.positions, crit.lambdas, confinement, crit.tolerance, threads)
    except NonMonotoneVerdicts as e:
        logger.error(f"约束判定不单调: {e.verdicts}")
        for lam, confined in zip(crit.lambdas, e.verdicts):
            report.add({"lambda": lam}, {"confined": confined})
        report.verdicts["single_transition"] = False
        storage.write_json("critical.json", dict(report.model_dump(mode="json"), status="non_monotone"))
        storage.write_csv("critical.csv", [{"lambda": lam, "confined": c} for lam, c in zip(crit.lambdas, e.verdicts)])
        return 1

    for lam, confined in zip(result.lambdas, result.verdicts):
        report.add({"lambda": lam}, {"confined": confined})
    for lam, confined in result.bisection:
        report.add({"lambda": lam, "bisection": True}, {"confined": confined})
    report.verdicts["single_transition"] = True
    storage.write_json("critical.json", dict(
        report.model_dump(mode="json"),
        status=result.status,
        lambda0=result.lambda0,
        bracket=list(result.bracket) if result.bracket else None,
        tolerance=result.tolerance,
    ))
    storage.write_csv("critical.csv", [{"lambda": lam, "confined": c} for lam, c in zip(result.lambdas, result.verdicts)])
    if result.status == "bracketed":
        logger.info(f"临界电流 λ₀ ≈ {result.lambda0:.6g}")
    else:
        logger.info(f"λ 网格内没有转变: {result.status}")
    return 0
