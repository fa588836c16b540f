"""Machine- and human-readable outputs: report JSON/CSV and SVG figures.

Figures are written as plain SVG text so that the same inputs always give
the same bytes, and so tests can read plotted values back from the markup.
Every mark carries a ``data-value`` attribute with the number it encodes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

from .bte import NO_EXIT, BtEReport, CategoryResult, ExitWindow
from .ingest import DataWarning
from .preference import PreferenceSeries, ThresholdSeries

__all__ = [
    "PlotSpec",
    "KINDS",
    "output_name",
    "report_to_dict",
    "report_from_dict",
    "emit_bte_report",
    "parse_bte_report",
    "select_categories",
    "render_plot",
    "write_atomic",
]

KINDS = ("bte-by-category", "series-with-thresholds")

PALETTE = {
    "bar": "#348ABD",
    "point": "#333333",
    "upper": "#E24A33",
    "lower": "#988ED5",
    "window": "#FBC15E",
    "warmup": "#EEEEEE",
    "axis": "#999999",
}


def _g9(x: float | None) -> float | None:
    if x is None:
        return None
    return float(format(float(x), ".9g"))


def output_name(user_id: int, kind: str, ext: str) -> str:
    """File name convention ``user<id>_<kind>.<ext>``."""
    return f"user{user_id}_{kind}.{ext}"


def write_atomic(path, data: bytes | str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def report_to_dict(report: BtEReport) -> dict:
    return {
        "user_id": report.user_id,
        "config": report.config,
        "categories": [
            {
                "label": c.label,
                "windows": [
                    {"t_x": w.t_x, "t_y": w.t_y, "bte": _g9(score)}
                    for w, score in zip(c.windows, c.scores)
                ],
                "category_bte": _g9(c.category_bte),
                "status": c.status,
            }
            for c in report.categories
        ],
        "system_bte": _g9(report.system_bte),
        "system_status": "ok" if report.system_bte is not None else NO_EXIT,
    }


def report_from_dict(doc: dict) -> BtEReport:
    mode = doc.get("config", {}).get("mode", "per-category")
    categories = []
    for i, c in enumerate(doc["categories"]):
        windows = [ExitWindow(i, int(w["t_x"]), int(w["t_y"]), (), mode) for w in c["windows"]]
        scores = [float(w["bte"]) for w in c["windows"]]
        value = c.get("category_bte")
        categories.append(CategoryResult(c["label"], windows, scores, None if value is None else float(value)))
    system = doc.get("system_bte")
    return BtEReport(int(doc["user_id"]), categories, None if system is None else float(system), dict(doc.get("config", {})))


CSV_COLUMNS = ["user_id", "category", "status", "t_x", "t_y", "bte", "category_bte", "system_bte"]


def _num(x) -> str:
    return "" if x is None else format(float(x), ".9g")


def emit_bte_report(report: BtEReport, fmt: str = "json") -> bytes:
    """Serialize a report.

    JSON has sorted keys and every float rounded to 9 significant digits.
    CSV has one row per window, plus one row (empty window columns) for each
    category without windows.
    """
    if fmt == "json":
        text = json.dumps(report_to_dict(report), sort_keys=True, indent=1) + "\n"
        return text.encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        system = _num(report.system_bte)
        for c in report.categories:
            if not c.windows:
                w.writerow([report.user_id, c.label, c.status, "", "", "", "", system])
            for win, score in zip(c.windows, c.scores):
                w.writerow([report.user_id, c.label, c.status, win.t_x, win.t_y, _num(score), _num(c.category_bte), system])
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


def parse_bte_report(data: bytes | str) -> BtEReport:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return report_from_dict(json.loads(data))


@dataclass(frozen=True)
class PlotSpec:
    """What to draw.

    ``categories`` picks labels explicitly; otherwise the ``top_n``
    categories by window count are used (all of them when ``top_n`` is None).
    """

    user_id: int
    kind: str = "bte-by-category"
    categories: tuple[str, ...] | None = None
    top_n: int | None = None
    path: str | None = None
    width: int = 800
    height: int = 400

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError("top_n must be positive")


def select_categories(spec: PlotSpec, labels: Sequence[str], report: BtEReport | None = None) -> list[str]:
    labels = list(labels)
    if spec.categories is not None:
        chosen = []
        missing = []
        for label in spec.categories:
            (chosen if label in labels else missing).append(label)
        if missing:
            warnings.warn(f"skipping unknown categories: {', '.join(missing)}", DataWarning, stacklevel=3)
        return chosen
    if spec.top_n is None:
        return labels
    counts = report.window_counts if report is not None else {}
    ranked = sorted(labels, key=lambda l: (-counts.get(l, 0), labels.index(l)))
    return ranked[:spec.top_n]


def _f(x: float) -> str:
    return format(float(x), ".3f")


def _nice_ceiling(x: float) -> float:
    if not x > 0:
        return 1.0
    exp = math.floor(math.log10(x))
    for m in (1, 2, 2.5, 5, 10):
        step = m * 10.0 ** exp
        if step >= x:
            return step
    return 10.0 ** (exp + 1)


def _svg_open(width, height, title) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{_f(width / 2)}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def _bars(spec: PlotSpec, report: BtEReport, chosen: list[str]) -> str:
    W, H = spec.width, spec.height
    left, right, top, bottom = 60.0, 20.0, 30.0, 90.0
    plot_w, plot_h = W - left - right, H - top - bottom
    values = [report.category(l).category_bte for l in chosen]
    ymax = _nice_ceiling(max([v for v in values if v is not None], default=0.0))
    base = top + plot_h
    out = _svg_open(W, H, f"Barrier to exit per category, user {report.user_id}")
    out.append(f'<g class="axis" data-ymax="{ymax!r}" data-y0="{_f(base)}" data-plot-height="{_f(plot_h)}">')
    out.append(f'<line x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(base)}" stroke="{PALETTE["axis"]}"/>')
    out.append(f'<line x1="{_f(left)}" y1="{_f(base)}" x2="{_f(left + plot_w)}" y2="{_f(base)}" stroke="{PALETTE["axis"]}"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = base - frac * plot_h
        out.append(f'<text x="{_f(left - 6)}" y="{_f(y + 4)}" text-anchor="end" font-size="10">{format(frac * ymax, ".4g")}</text>')
    out.append("</g>")
    n = max(len(chosen), 1)
    slot = plot_w / n
    bar_w = slot * 0.7
    for k, (label, value) in enumerate(zip(chosen, values)):
        x = left + k * slot + (slot - bar_w) / 2
        cx = x + bar_w / 2
        if value is None:
            out.append(f'<text class="no-exit" data-category="{escape(label)}" x="{_f(cx)}" y="{_f(base - 4)}" '
                       f'text-anchor="middle" font-size="9">n/a</text>')
        else:
            h = value / ymax * plot_h
            out.append(f'<rect class="bar" data-category="{escape(label)}" data-value="{value!r}" '
                       f'x="{_f(x)}" y="{_f(base - h)}" width="{_f(bar_w)}" height="{_f(h)}" fill="{PALETTE["bar"]}"/>')
        out.append(f'<text x="{_f(cx)}" y="{_f(base + 10)}" font-size="10" text-anchor="end" '
                   f'transform="rotate(-45 {_f(cx)} {_f(base + 10)})">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _polyline(cls, points, color) -> str:
    if not points:
        return ""
    coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
    return f'<polyline class="{cls}" points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'


def _series_panels(spec: PlotSpec, series: PreferenceSeries, thresholds: ThresholdSeries,
                   report: BtEReport | None, chosen: list[str]) -> str:
    W, H = spec.width, spec.height
    left, right, top, gap = 60.0, 20.0, 30.0, 30.0
    panel_h = (H - top - gap * len(chosen)) / max(len(chosen), 1)
    plot_w = W - left - right
    n_steps = len(series)
    xscale = plot_w / max(n_steps - 1, 1)
    out = _svg_open(W, H, f"Revealed preference and interaction thresholds, user {series.user_id}")
    defined = thresholds.defined()
    for p, label in enumerate(chosen):
        i = series.categories.index(label)
        c = series.values[:, i]
        up = thresholds.upper[:, i]
        lo = thresholds.lower[:, i]
        finite = np.concatenate([c, up[defined], lo[defined]])
        ymin, ymax = float(finite.min()), float(finite.max())
        if ymax == ymin:
            ymin, ymax = ymin - 1.0, ymax + 1.0
        y0 = top + p * (panel_h + gap)
        ybase = y0 + panel_h

        def X(t):
            return left + t * xscale

        def Y(v):
            return ybase - (v - ymin) / (ymax - ymin) * panel_h

        out.append(f'<g class="panel" data-category="{escape(label)}" data-ymin="{ymin!r}" data-ymax="{ymax!r}">')
        out.append(f'<text x="{_f(left)}" y="{_f(y0 - 4)}" font-size="11">{escape(label)}</text>')
        if thresholds.nu > 0:
            warm_end = X(min(thresholds.nu, n_steps - 1)) if n_steps > 1 else left + plot_w
            out.append(f'<rect class="warmup" data-steps="{min(thresholds.nu, n_steps)}" x="{_f(left)}" y="{_f(y0)}" '
                       f'width="{_f(warm_end - left)}" height="{_f(panel_h)}" fill="{PALETTE["warmup"]}"/>')
        if report is not None:
            for w in report.category(label).windows:
                out.append(f'<rect class="window" data-tx="{w.t_x}" data-ty="{w.t_y}" x="{_f(X(w.t_x))}" y="{_f(y0)}" '
                           f'width="{_f(X(w.t_y) - X(w.t_x))}" height="{_f(panel_h)}" fill="{PALETTE["window"]}" fill-opacity="0.4"/>')
        out.append(f'<line x1="{_f(left)}" y1="{_f(ybase)}" x2="{_f(left + plot_w)}" y2="{_f(ybase)}" stroke="{PALETTE["axis"]}"/>')
        out.append(f'<line x1="{_f(left)}" y1="{_f(y0)}" x2="{_f(left)}" y2="{_f(ybase)}" stroke="{PALETTE["axis"]}"/>')
        steps = np.flatnonzero(defined)
        out.append(_polyline("upper", [(X(t), Y(up[t])) for t in steps], PALETTE["upper"]))
        out.append(_polyline("lower", [(X(t), Y(lo[t])) for t in steps], PALETTE["lower"]))
        for t in range(n_steps):
            out.append(f'<circle class="point" data-t="{t}" data-value="{float(c[t])!r}" cx="{_f(X(t))}" cy="{_f(Y(c[t]))}" '
                       f'r="2.5" fill="{PALETTE["point"]}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(line for line in out if line) + "\n"


def render_plot(spec: PlotSpec, series: PreferenceSeries | None = None,
                thresholds: ThresholdSeries | None = None, report: BtEReport | None = None) -> bytes:
    """Draw one figure and return SVG bytes; also written to ``spec.path`` if set.

    ``bte-by-category`` needs ``report``; ``series-with-thresholds`` needs
    ``series`` and ``thresholds`` and uses ``report`` to shade exit windows.
    """
    if spec.kind == "bte-by-category":
        if report is None:
            raise ValueError("bte-by-category needs a report")
        chosen = select_categories(spec, [c.label for c in report.categories], report)
        svg = _bars(spec, report, chosen)
    else:
        if series is None or thresholds is None:
            raise ValueError("series-with-thresholds needs series and thresholds")
        chosen = select_categories(spec, series.categories, report)
        svg = _series_panels(spec, series, thresholds, report, chosen)
    data = svg.encode("utf-8")
    if spec.path is not None:
        write_atomic(spec.path, data)
    return data
