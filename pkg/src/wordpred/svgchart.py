"""Hand-rolled SVG bar charts: deterministic bytes for fixed input.

No plotting dependency; floats are formatted with fixed precision so a
report always renders to the identical file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import OutputError

WIDTH, HEIGHT = 720, 420
MARGIN_LEFT, MARGIN_RIGHT = 70, 20
MARGIN_TOP, MARGIN_BOTTOM = 50, 70
PALETTE = ("#c44e52", "#4c72b0", "#55a868", "#8172b2", "#ccb974", "#64b5cd")


@dataclass(frozen=True)
class ChartBar:
    label: str
    value: float
    sem: float = 0.0
    starred: bool = False


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    exponent = math.floor(math.log10(raw))
    step = 10.0**exponent
    for mult in (1, 2, 5, 10):
        if mult * step >= raw:
            step = mult * step
            break
    first = step * math.floor(lo / step)
    ticks = []
    t = first
    while t <= hi + step / 2:
        ticks.append(round(t, 10))
        t += step
    return ticks


def render_bar_chart(
    groups: list[tuple[str, list[ChartBar]]],
    title: str = "",
    ylabel: str = "",
) -> str:
    """Grouped bars with SEM whiskers and significance asterisks."""
    if not groups or all(not bars for _, bars in groups):
        raise OutputError("nothing to chart: empty comparison list")

    values = [b.value for _, bars in groups for b in bars]
    sems = [b.sem for _, bars in groups for b in bars]
    lo = min(0.0, min(v - s for v, s in zip(values, sems)))
    hi = max(0.0, max(v + s for v, s in zip(values, sems)))
    if hi == lo:
        hi = lo + 1.0
    span = hi - lo
    lo -= 0.08 * span
    hi += 0.12 * span

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def y_of(v: float) -> float:
        return MARGIN_TOP + plot_h * (hi - v) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica,Arial,sans-serif">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16">{_escape(title)}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="18" y="{MARGIN_TOP + plot_h / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 18 {MARGIN_TOP + plot_h / 2:.1f})">{_escape(ylabel)}</text>'
        )

    for tick in _ticks(lo, hi):
        y = y_of(tick)
        parts.append(
            f'<line x1="{MARGIN_LEFT}" y1="{_fmt(y)}" x2="{WIDTH - MARGIN_RIGHT}" '
            f'y2="{_fmt(y)}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-size="11">{tick:g}</text>'
        )

    group_w = plot_w / len(groups)
    max_bars = max(len(bars) for _, bars in groups)
    bar_w = group_w * 0.8 / max(max_bars, 1)
    y_zero = y_of(0.0)
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{_fmt(y_zero)}" x2="{WIDTH - MARGIN_RIGHT}" '
        f'y2="{_fmt(y_zero)}" stroke="#444444" stroke-width="1"/>'
    )

    seen_labels: list[str] = []
    for gi, (group_label, bars) in enumerate(groups):
        x0 = MARGIN_LEFT + gi * group_w + group_w * 0.1
        for bi, bar in enumerate(bars):
            if bar.label not in seen_labels:
                seen_labels.append(bar.label)
            color = PALETTE[seen_labels.index(bar.label) % len(PALETTE)]
            x = x0 + bi * bar_w
            y_val = y_of(bar.value)
            top = min(y_val, y_zero)
            height = abs(y_val - y_zero)
            parts.append(
                f'<rect class="bar" data-group="{_escape(group_label)}" '
                f'data-label="{_escape(bar.label)}" data-value="{bar.value:.6g}" '
                f'x="{_fmt(x)}" y="{_fmt(top)}" width="{_fmt(bar_w * 0.9)}" '
                f'height="{_fmt(height)}" fill="{color}"/>'
            )
            if bar.sem > 0:
                cx = x + bar_w * 0.45
                y_hi, y_lo = y_of(bar.value + bar.sem), y_of(bar.value - bar.sem)
                parts.append(
                    f'<line class="sem" x1="{_fmt(cx)}" y1="{_fmt(y_hi)}" '
                    f'x2="{_fmt(cx)}" y2="{_fmt(y_lo)}" stroke="#222222" stroke-width="1.5"/>'
                )
                for yy in (y_hi, y_lo):
                    parts.append(
                        f'<line x1="{_fmt(cx - 4)}" y1="{_fmt(yy)}" x2="{_fmt(cx + 4)}" '
                        f'y2="{_fmt(yy)}" stroke="#222222" stroke-width="1.5"/>'
                    )
            if bar.starred:
                star_y = y_of(bar.value + bar.sem) - 8 if bar.value >= 0 else y_of(0) - 8
                parts.append(
                    f'<text class="star" x="{_fmt(x + bar_w * 0.45)}" y="{_fmt(star_y)}" '
                    f'text-anchor="middle" font-size="15">*</text>'
                )
        parts.append(
            f'<text x="{_fmt(x0 + group_w * 0.4)}" y="{HEIGHT - MARGIN_BOTTOM + 18}" '
            f'text-anchor="middle" font-size="12">{_escape(group_label)}</text>'
        )

    # legend
    lx = MARGIN_LEFT
    ly = HEIGHT - 24
    for li, label in enumerate(seen_labels):
        color = PALETTE[li % len(PALETTE)]
        parts.append(f'<rect x="{_fmt(lx)}" y="{ly - 10}" width="12" height="12" fill="{color}"/>')
        parts.append(f'<text x="{_fmt(lx + 16)}" y="{ly}" font-size="12">{_escape(label)}</text>')
        lx += 16 + 8 * len(label) + 24

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )
