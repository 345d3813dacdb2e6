"""CSV and SVG writers for sweep and flowcheck results."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .metrics import MetricCurve, average_gain

SWEEP_COLUMNS = ("tensor", "p", "method", "seed", "masked_psnr_db", "psnr_db", "recover_ms", "status")
FLOW_COLUMNS = ("transform", "signal", "flow", "max_residual", "rms_residual", "pass")
TIMING_COLUMNS = ("recover_ms",)

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2")


@dataclass(frozen=True)
class SweepRow:
    tensor: str
    p: float
    method: str
    seed: int
    masked_psnr_db: float
    psnr_db: float
    recover_ms: float
    status: str

    def sort_key(self):
        return (self.tensor, self.p, self.method, self.seed)

    def as_csv(self) -> list[str]:
        return [self.tensor, f"{self.p:.4f}", self.method, str(self.seed),
                _num(self.masked_psnr_db), _num(self.psnr_db), f"{self.recover_ms:.3f}", self.status]


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in sorted(rows, key=SweepRow.sort_key):
            writer.writerow(row.as_csv())


def mean_table(rows) -> dict[str, list[tuple[float, float]]]:
    """Mean masked PSNR per method and loss rate, as sorted ``(p, mean)`` pairs.

    Runs where nothing was lost are left out of a cell's mean unless the cell
    has no lossy run at all (then every value is the PSNR cap).
    """
    cells = defaultdict(list)
    for row in rows:
        if row.status in ("ok", "noloss"):
            cells[(row.method, row.p)].append(row)
    table = defaultdict(list)
    for (method, p) in sorted(cells):
        cell = cells[(method, p)]
        lossy = [r.masked_psnr_db for r in cell if r.status == "ok"]
        pool = lossy or [r.masked_psnr_db for r in cell]
        table[method].append((p, sum(pool) / len(pool)))
    return dict(table)


def gain_table(table: dict[str, list[tuple[float, float]]], baseline: str = "none") -> dict[str, float]:
    """Average gain of every method over ``baseline`` (needs two or more loss rates)."""
    base = table.get(baseline, [])
    if len(base) < 2:
        return {}
    base_curve = MetricCurve(*zip(*base))
    gains = {}
    for method, points in table.items():
        if method == baseline or len(points) < 2:
            continue
        curve = MetricCurve(*zip(*points))
        if curve.probabilities == base_curve.probabilities:
            gains[method] = average_gain(curve, base_curve)
    return gains


def write_gains_csv(path, gains: dict[str, float], baseline: str = "none") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("method", f"avg_masked_psnr_gain_db_vs_{baseline}"))
        for method in sorted(gains):
            writer.writerow((method, f"{gains[method]:.6f}"))


def write_flow_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FLOW_COLUMNS)
        for r in rows:
            writer.writerow((r.transform, r.signal, r.flow, f"{r.max_residual:.6e}",
                             f"{r.rms_residual:.6e}", "PASS" if r.passed else "FAIL"))


def write_svg_chart(path, table: dict[str, list[tuple[float, float]]], title: str = "mean masked PSNR vs loss",
                    width: int = 640, height: int = 400) -> None:
    """Self-contained polyline chart, one line per method."""
    left, right, top, bottom = 60, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = [p for pts in table.values() for p, _ in pts]
    ys = [v for pts in table.values() for _, v in pts]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle">{escape(title)}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{xv:.2f}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.1f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">loss probability</text>')
    out.append(f'<text x="15" y="{top + ph / 2:.1f}" transform="rotate(-90 15 {top + ph / 2:.1f})" '
               f'text-anchor="middle">masked PSNR (dB)</text>')
    for i, (method, points) in enumerate(sorted(table.items())):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(p):.2f},{sy(v):.2f}" for p, v in points)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        for p, v in points:
            out.append(f'<circle cx="{sx(p):.2f}" cy="{sy(v):.2f}" r="3" fill="{color}"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{escape(method)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
