import logging

from ..models import RunConfig, StudyReport
from ..plots import loglog_svg
from ..services.studies import convergence_battery
from ..storage.run_storage import RunStorage

# 配置日志
logger = logging.getLogger(__name__)


def cmd_convergence(config: RunConfig, storage: RunStorage, threads: int = 1) -> int:
    """制造解收敛阶测试：各量的观测阶须落在声明区间内"""
    battery = config.convergence
    rows = convergence_battery(battery.selectors, battery.ladder, battery.dt_ladder)
    report = StudyReport(kind="convergence", config_hash=config.config_hash())
    for row in rows:
        report.add({"quantity": row.quantity, "selector": row.selector}, row.as_metrics(), passed=row.passed)
        storage.write_text(f"order_{row.quantity}.svg", loglog_svg(
            row.steps, row.errors, f"{row.quantity} (order {row.order:.2f})", "step", "error",
            reference_order=row.order))

    storage.write_json("convergence.json", report.model_dump(mode="json"))
    storage.write_csv("convergence.csv", [
        {"quantity": r.quantity, "selector": r.selector, "order": r.order,
         "low": r.band[0], "high": r.band[1], "passed": r.passed}
        for r in rows
    ])
    failed = [r.quantity for r in rows if not r.passed]
    if failed:
        logger.error(f"收敛阶不在区间内: {failed}")
        return 1
    logger.info(f"{len(rows)} 个量的收敛阶全部通过")
    return 0
