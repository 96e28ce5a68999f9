import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from jinja2 import Environment, PackageLoader, StrictUndefined, select_autoescape

from .services.vortexometry import Trajectory

# 配置日志
logger = logging.getLogger(__name__)

WIDTH = 480
HEIGHT = 480
MARGIN = 40
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")

templates = Environment(
    loader=PackageLoader("vortexlab", "templates"),
    autoescape=select_autoescape(["svg", "j2"]),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
)


def format_number(value: float) -> str:
    return f"{value:.3g}"


templates.globals.update(format_number=format_number)


def _polyline(xs: Sequence[float], ys: Sequence[float]) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def trajectories_svg(
    series: Dict[str, Sequence[Trajectory]],
    lx: float = 1.0,
    ly: float = 1.0,
    title: str = "",
) -> str:
    """把多组轨迹画在区域 [0, lx]×[0, ly] 上，每组一种颜色"""
    span = WIDTH - 2 * MARGIN
    scale = span / max(lx, ly)

    def to_px(x: float, y: float) -> Tuple[float, float]:
        return MARGIN + x * scale, HEIGHT - MARGIN - y * scale

    lines: List[Dict[str, str]] = []
    for k, (label, trajectories) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        for tr in trajectories:
            pts = [to_px(x, y) for x, y in tr.positions]
            if not pts:
                continue
            lines.append({
                "label": f"{label} #{tr.id} (d={tr.degree})",
                "color": color,
                "points": _polyline([p[0] for p in pts], [p[1] for p in pts]),
                "dash": "4 3" if k % 2 else "",
            })
    legend = [{"label": label, "color": PALETTE[k % len(PALETTE)]} for k, label in enumerate(series)]
    box = {"x": MARGIN, "y": HEIGHT - MARGIN - ly * scale, "w": lx * scale, "h": ly * scale}
    return templates.get_template("trajectories.svg.j2").render(
        width=WIDTH, height=HEIGHT, title=title, box=box, lines=lines, legend=legend, lx=lx, ly=ly,
    )


def loglog_svg(
    xs: Sequence[float],
    ys: Sequence[float],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    reference_order: Optional[float] = None,
) -> str:
    """误差随 ε（或 h）的双对数图，可附参考斜率线"""
    pairs = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(y)]
    if not pairs:
        logger.warning("双对数图没有可用的正数据点")
        pairs = [(1.0, 1.0)]
    lx = np.log10([p[0] for p in pairs])
    ly = np.log10([p[1] for p in pairs])
    x0, x1 = float(lx.min()) - 0.1, float(lx.max()) + 0.1
    y0, y1 = float(ly.min()) - 0.2, float(ly.max()) + 0.2

    def to_px(a: float, c: float) -> Tuple[float, float]:
        px = MARGIN + (a - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)
        py = HEIGHT - MARGIN - (c - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)
        return px, py

    points = [to_px(a, c) for a, c in zip(lx, ly)]
    reference = ""
    if reference_order is not None and len(points) > 1:
        a_ref = lx[0]
        c_ref = ly[0]
        ends = [(a, c_ref + reference_order * (a - a_ref)) for a in (lx.min(), lx.max())]
        ref_px = [to_px(a, c) for a, c in ends]
        reference = _polyline([p[0] for p in ref_px], [p[1] for p in ref_px])
    return templates.get_template("loglog.svg.j2").render(
        width=WIDTH,
        height=HEIGHT,
        margin=MARGIN,
        title=title,
        xlabel=xlabel,
        ylabel=ylabel,
        line=_polyline([p[0] for p in points], [p[1] for p in points]),
        markers=[{"x": p[0], "y": p[1], "value": 10 ** c} for p, c in zip(points, ly)],
        reference=reference,
        reference_order=reference_order,
    )
