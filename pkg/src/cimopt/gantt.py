"""Plain-text and SVG Gantt charts for decoded schedules.

One row per machine; each block is one schedule entry labeled J<job>.<op>
(1-based for humans). Both emitters are pure string producers.
"""

from __future__ import annotations

from .fjsp import FjspInstance, Schedule

__all__ = ["gantt_text", "gantt_svg"]

_PALETTE = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
    "#76b7b2", "#edc948", "#ff9da7", "#9c755f", "#bab0ac",
]

_CELL = 5  # characters per time unit in the text grid


def gantt_text(inst: FjspInstance, schedule: Schedule) -> str:
    """Fixed-width grid, one machine per row, '=' filled blocks."""
    if not schedule.entries:
        return "(empty schedule)\n"
    horizon = max(e.end for e in schedule.entries)
    width = horizon * _CELL
    lines = []

    ruler = [" "] * (width + 1)
    for t in range(0, horizon + 1, 5):
        mark = str(t)
        pos = t * _CELL
        ruler[pos : pos + len(mark)] = list(mark)
    lines.append("time " + "".join(ruler).rstrip())

    for machine in range(inst.machines):
        row = ["."] * width
        for e in sorted(schedule.entries, key=lambda e: e.start):
            if e.machine != machine:
                continue
            lo, hi = e.start * _CELL, e.end * _CELL
            for pos in range(lo, hi):
                row[pos] = "="
            row[lo] = "|"
            if hi < width:
                row[hi] = "|"
            label = f"J{e.job + 1}.{e.op + 1}"
            for offset, ch in enumerate(label):
                if lo + 1 + offset < hi:
                    row[lo + 1 + offset] = ch
        lines.append(f"M{machine + 1:<3} " + "".join(row))
    return "\n".join(lines) + "\n"


def gantt_svg(inst: FjspInstance, schedule: Schedule) -> str:
    """Self-contained SVG; blocks carry data-job/data-op attributes."""
    unit = 32
    row_h = 34
    left = 46
    top = 28
    horizon = max((e.end for e in schedule.entries), default=1)
    width = left + horizon * unit + 12
    height = top + inst.machines * row_h + 24

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<style>text{font-family:monospace;font-size:11px}</style>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for t in range(horizon + 1):
        x = left + t * unit
        parts.append(
            f'<line x1="{x}" y1="{top}" x2="{x}" y2="{top + inst.machines * row_h}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        if t % 2 == 0 or horizon <= 12:
            parts.append(f'<text x="{x - 3}" y="{top - 8}">{t}</text>')
    for machine in range(inst.machines):
        y = top + machine * row_h
        parts.append(f'<text x="6" y="{y + row_h // 2 + 4}">M{machine + 1}</text>')
    for e in sorted(schedule.entries, key=lambda e: (e.machine, e.start)):
        x = left + e.start * unit
        y = top + e.machine * row_h + 4
        w = (e.end - e.start) * unit
        color = _PALETTE[e.job % len(_PALETTE)]
        parts.append(
            f'<rect data-job="{e.job}" data-op="{e.op}" x="{x}" y="{y}" '
            f'width="{w}" height="{row_h - 8}" fill="{color}" stroke="#333333"/>'
        )
        parts.append(f'<text x="{x + 4}" y="{y + (row_h - 8) // 2 + 4}">J{e.job + 1}.{e.op + 1}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
