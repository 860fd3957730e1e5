"""CSV and aligned-text table rendering for run and sweep reports."""

from __future__ import annotations

import csv
import io
from typing import Sequence


def render_csv(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def render_aligned(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(c) for c in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in cells:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def ratio_delta(value: float, baseline: float, higher_is_better: bool = True) -> str:
    """Speedup-style ratio over a baseline, rendered like "1.58x"."""
    if baseline <= 0 or value <= 0:
        return "n/a"
    ratio = value / baseline if higher_is_better else baseline / value
    return f"{ratio:.2f}x"


def signed_delta(value: float, baseline: float, decimals: int = 1) -> str:
    delta = round(value - baseline, decimals) + 0.0  # drop negative zero
    return f"{delta:+.{decimals}f}"


def fmt(value, decimals: int = 1) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.{decimals}f}"
    return str(value)
