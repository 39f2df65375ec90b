"""Hand-rolled SVG box-whisker and line charts for experiment reports.

No plotting dependency: charts are a few hundred SVG elements, so writing
them directly keeps outputs byte-reproducible. Boxes span the quartiles
with a median tick; whiskers reach the mean +/- 2.698 sigma band.
"""
from __future__ import annotations

from dataclasses import dataclass

from .experiments import ErrorStats, ExperimentReport

WIDTH = 640
HEIGHT = 400
MARGIN_LEFT = 70
MARGIN_RIGHT = 20
MARGIN_TOP = 40
MARGIN_BOTTOM = 50

SERIES_COLORS = {True: "#1f77b4", False: "#d62728"}  # with power: blue, without: red


@dataclass(frozen=True)
class _Box:
    x_label: str
    stats: ErrorStats
    color: str
    offset: float = 0.0  # horizontal shift within the slot, for paired series


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _y_scale(lo: float, hi: float):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    lo -= 0.05 * span
    hi += 0.05 * span
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def to_y(v: float) -> float:
        return MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo))

    return to_y, lo, hi


def _svg_header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _axes(parts: list[str], to_y, lo: float, hi: float, ylabel: str) -> None:
    x0 = MARGIN_LEFT
    x1 = WIDTH - MARGIN_RIGHT
    y0 = HEIGHT - MARGIN_BOTTOM
    parts.append(f'<line x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    for i in range(5):
        v = lo + (hi - lo) * i / 4
        y = to_y(v)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x0}" y2="{_fmt(y)}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end">{_fmt(v)}</text>'
        )
    parts.append(
        f'<text x="14" y="{(MARGIN_TOP + y0) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(MARGIN_TOP + y0) / 2})">{ylabel}</text>'
    )


def _draw_boxes(boxes: list[_Box], slots: list[str], title: str, ylabel: str, xlabel: str) -> str:
    values = [v for b in boxes for v in (b.stats.lower, b.stats.upper, b.stats.q1, b.stats.q3)]
    to_y, lo, hi = _y_scale(min(values), max(values))
    parts = _svg_header(title)
    _axes(parts, to_y, lo, hi, ylabel)

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    slot_w = plot_w / max(1, len(slots))
    box_w = min(24.0, slot_w / 3)
    slot_x = {label: MARGIN_LEFT + slot_w * (i + 0.5) for i, label in enumerate(slots)}
    for label in slots:
        parts.append(
            f'<text x="{_fmt(slot_x[label])}" y="{HEIGHT - MARGIN_BOTTOM + 16}" '
            f'text-anchor="middle">{label}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2}" y="{HEIGHT - 12}" text-anchor="middle">{xlabel}</text>'
    )
    for box in boxes:
        cx = slot_x[box.x_label] + box.offset
        s = box.stats
        y_lo, y_hi = to_y(s.lower), to_y(s.upper)
        y_q1, y_q3, y_med = to_y(s.q1), to_y(s.q3), to_y(s.median)
        half = box_w / 2
        parts.append(
            f'<line x1="{_fmt(cx)}" y1="{_fmt(y_lo)}" x2="{_fmt(cx)}" y2="{_fmt(y_hi)}" '
            f'stroke="{box.color}" stroke-dasharray="3 2"/>'
        )
        for y in (y_lo, y_hi):
            parts.append(
                f'<line x1="{_fmt(cx - half / 2)}" y1="{_fmt(y)}" x2="{_fmt(cx + half / 2)}" '
                f'y2="{_fmt(y)}" stroke="{box.color}"/>'
            )
        parts.append(
            f'<rect x="{_fmt(cx - half)}" y="{_fmt(y_q3)}" width="{_fmt(box_w)}" '
            f'height="{_fmt(max(0.5, y_q1 - y_q3))}" fill="{box.color}" fill-opacity="0.25" '
            f'stroke="{box.color}"/>'
        )
        parts.append(
            f'<line x1="{_fmt(cx - half)}" y1="{_fmt(y_med)}" x2="{_fmt(cx + half)}" '
            f'y2="{_fmt(y_med)}" stroke="{box.color}" stroke-width="2"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _paired_boxes(rows, x_of) -> tuple[list[_Box], list[str]]:
    slots: list[str] = []
    boxes: list[_Box] = []
    for row in rows:
        label = x_of(row)
        if label not in slots:
            slots.append(label)
        boxes.append(
            _Box(
                x_label=label,
                stats=row.stats,
                color=SERIES_COLORS[row.with_power],
                offset=-16.0 if row.with_power else 16.0,
            )
        )
    return boxes, slots


def coverage_boxplot(report: ExperimentReport) -> str:
    """Error distribution per meter count, with/without power side by side."""
    boxes, slots = _paired_boxes(report.rows, lambda r: str(r.meter_count))
    return _draw_boxes(
        boxes,
        slots,
        "Prediction error vs smart-meter coverage",
        "absolute error (pu)",
        "meters C (blue: with power, red: without)",
    )


def coverage_mean_lines(report: ExperimentReport) -> str:
    """Mean error against meter count, one polyline per power mode."""
    by_mode: dict[bool, list[tuple[int, float]]] = {}
    for row in report.rows:
        by_mode.setdefault(row.with_power, []).append((row.meter_count, row.stats.mean))
    values = [m for pts in by_mode.values() for _, m in pts]
    to_y, lo, hi = _y_scale(min(values), max(values))
    counts = sorted({c for pts in by_mode.values() for c, _ in pts})
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    x_of = {c: MARGIN_LEFT + plot_w * (i + 0.5) / len(counts) for i, c in enumerate(counts)}

    parts = _svg_header("Mean prediction error vs smart-meter coverage")
    _axes(parts, to_y, lo, hi, "mean absolute error (pu)")
    for c in counts:
        parts.append(
            f'<text x="{_fmt(x_of[c])}" y="{HEIGHT - MARGIN_BOTTOM + 16}" text-anchor="middle">{c}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2}" y="{HEIGHT - 12}" text-anchor="middle">meters C</text>'
    )
    for mode, pts in sorted(by_mode.items(), reverse=True):
        color = SERIES_COLORS[mode]
        pts = sorted(pts)
        coords = " ".join(f"{_fmt(x_of[c])},{_fmt(to_y(m))}" for c, m in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for c, m in pts:
            parts.append(f'<circle cx="{_fmt(x_of[c])}" cy="{_fmt(to_y(m))}" r="3" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def placement_boxplot(report: ExperimentReport) -> str:
    """Error distribution per placement, ordered by median inter-meter
    distance (the x labels, in metres)."""
    boxes, slots = _paired_boxes(
        report.rows, lambda r: f"{(r.median_inter_meter_m or 0.0):.0f}"
    )
    return _draw_boxes(
        boxes,
        slots,
        "Prediction error vs meter placement",
        "absolute error (pu)",
        "median inter-meter distance (m)",
    )
