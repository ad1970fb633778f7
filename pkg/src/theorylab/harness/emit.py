"""Artifact emission: summary CSVs, run CSVs, SVG charts, verdict JSON.

Everything written here is a pure function of the summary contents, so
re-running an experiment with the same spec and seed reproduces every file
byte for byte.  The SVG writer is hand-rolled for exactly that reason.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

from ..trainer import RunRecord

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Check:
    """One asserted (or merely recorded) comparison from an experiment."""

    name: str
    passed: bool
    value: float
    threshold: float
    direction: str  # "<=", ">=", "==", or "info" (recorded, not asserted)
    detail: str = ""


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]


@dataclass(frozen=True)
class Series:
    """One chart: named lines sharing axes."""

    name: str
    title: str
    xlabel: str
    ylabel: str
    lines: tuple[tuple[str, tuple[float, ...], tuple[float, ...]], ...]
    logx: bool = False
    logy: bool = False


@dataclass(frozen=True)
class Summary:
    experiment: str
    tables: tuple[Table, ...] = ()
    checks: tuple[Check, ...] = ()
    series: tuple[Series, ...] = ()
    records: tuple[tuple[str, RunRecord], ...] = ()
    notes: tuple[str, ...] = ()
    censored: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.direction != "info")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_table_csv(table: Table, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_verdict(summary: Summary, path: str) -> None:
    doc = {
        "experiment": summary.experiment,
        "passed": summary.passed,
        "censored": summary.censored,
        "notes": list(summary.notes),
        "checks": [
            {
                "name": c.name,
                "passed": c.passed,
                "value": c.value,
                "threshold": c.threshold,
                "direction": c.direction,
                "detail": c.detail,
            }
            for c in summary.checks
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit(summary: Summary, out_dir: str, formats: Sequence[str] = ("csv",)) -> list[str]:
    """Write all artifacts under out_dir; returns the paths written."""
    bad = set(formats) - {"csv", "svg"}
    if bad:
        raise ValueError(f"unknown formats {sorted(bad)}; expected csv and/or svg")
    os.makedirs(out_dir, exist_ok=True)
    paths: list[str] = []

    def _target(stem: str, ext: str) -> str:
        p = os.path.join(out_dir, f"{summary.experiment}_{stem}.{ext}")
        paths.append(p)
        return p

    if "csv" in formats:
        # the checks table is always present, header-only for an empty summary
        with open(_target("summary", "csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("check,passed,value,threshold,direction,detail\n")
            for c in summary.checks:
                cells = (c.name, _fmt(c.passed), _fmt(c.value), _fmt(c.threshold),
                         c.direction, c.detail.replace(",", ";"))
                fh.write(",".join(cells) + "\n")
        for table in summary.tables:
            write_table_csv(table, _target(table.name, "csv"))
        for cellkey, record in summary.records:
            record.to_csv(_target(cellkey, "csv"))
    if "svg" in formats:
        for series in summary.series:
            with open(_target(series.name, "svg"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(render_svg(series))
    verdict = os.path.join(out_dir, "verdict.json")
    write_verdict(summary, verdict)
    paths.append(verdict)
    return paths


# ---- SVG rendering ----

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 72, 24, 44, 56


def _tick_values(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        first = math.ceil(lo - 1e-9)
        last = math.floor(hi + 1e-9)
        if first > last:
            return [lo, hi]
        return [float(d) for d in range(first, last + 1)]
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / 4)) if span > 0 else 1.0
    for mult in (1.0, 2.0, 5.0, 10.0):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step)
    return [first * step + i * step for i in range(int((hi - first * step) / step) + 1)]


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}" if abs(v - round(v)) < 1e-9 else f"{10.0**v:.3g}"
    return f"{v:.4g}"


def render_svg(series: Series) -> str:
    """A fixed-size line chart; byte-deterministic for fixed input."""
    lines = []
    for label, xs, ys in series.lines:
        pts = [
            (x, y)
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y)
            and (not series.logx or x > 0) and (not series.logy or y > 0)
        ]
        if pts:
            tx = [math.log10(p[0]) if series.logx else p[0] for p in pts]
            ty = [math.log10(p[1]) if series.logy else p[1] for p in pts]
            lines.append((label, tx, ty))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W/2:.1f}" y="20" text-anchor="middle" font-size="14">'
        f"{_esc(series.title)}</text>",
    ]
    x0, x1 = _ML, _W - _MR
    y0, y1 = _H - _MB, _MT
    if not lines:
        out.append(
            f'<text x="{_W/2:.1f}" y="{_H/2:.1f}" text-anchor="middle">no data</text></svg>'
        )
        return "\n".join(out) + "\n"

    all_x = [v for _, tx, _ in lines for v in tx]
    all_y = [v for _, _, ty in lines for v in ty]
    lo_x, hi_x = min(all_x), max(all_x)
    lo_y, hi_y = min(all_y), max(all_y)
    if hi_x - lo_x < 1e-12:
        lo_x, hi_x = lo_x - 0.5, hi_x + 0.5
    if hi_y - lo_y < 1e-12:
        lo_y, hi_y = lo_y - 0.5, hi_y + 0.5
    pad_x, pad_y = 0.04 * (hi_x - lo_x), 0.06 * (hi_y - lo_y)
    lo_x, hi_x = lo_x - pad_x, hi_x + pad_x
    lo_y, hi_y = lo_y - pad_y, hi_y + pad_y

    def sx(v: float) -> float:
        return x0 + (v - lo_x) / (hi_x - lo_x) * (x1 - x0)

    def sy(v: float) -> float:
        return y0 - (v - lo_y) / (hi_y - lo_y) * (y0 - y1)

    out.append(
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
        f'fill="none" stroke="black"/>'
    )
    for v in _tick_values(lo_x, hi_x, series.logx):
        if lo_x <= v <= hi_x:
            px = sx(v)
            out.append(f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 5}" stroke="black"/>')
            out.append(
                f'<text x="{px:.2f}" y="{y0 + 18}" text-anchor="middle">'
                f"{_tick_label(v, series.logx)}</text>"
            )
    for v in _tick_values(lo_y, hi_y, series.logy):
        if lo_y <= v <= hi_y:
            py = sy(v)
            out.append(f'<line x1="{x0 - 5}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="black"/>')
            out.append(
                f'<text x="{x0 - 8}" y="{py + 4:.2f}" text-anchor="end">'
                f"{_tick_label(v, series.logy)}</text>"
            )
    out.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{_H - 14}" text-anchor="middle">'
        f"{_esc(series.xlabel)}</text>"
    )
    out.append(
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{_esc(series.ylabel)}</text>'
    )
    for i, (label, tx, ty) in enumerate(lines):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(tx, ty))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in zip(tx, ty):
            out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2.5" fill="{color}"/>')
        ly = y1 + 14 + 16 * i
        out.append(f'<line x1="{x1 - 130}" y1="{ly - 4:.0f}" x2="{x1 - 110}" y2="{ly - 4:.0f}" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{x1 - 104}" y="{ly}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
