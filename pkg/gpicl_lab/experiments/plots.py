"""
Standalone SVG figures from CSV files: line plots with CI bands,
heatmaps with a color or category legend, and scatter plots.

Output is a pure function of the PlotSpec and the CSV text, so figures can be
compared byte for byte.
"""
import csv
import html
import logging
import math
from collections import Counter
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from gpicl_lab.errors import ConfigError
from gpicl_lab.experiments.config_file import read_key_values, validation_message
from gpicl_lab.schemas import PlotSpec
from gpicl_lab.utils.converters import parse_scalar

logger = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
HEAT_LOW = (247, 251, 255)
HEAT_HIGH = (8, 48, 107)
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 120, 36, 52
N_TICKS = 5


class SvgCanvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff" class="background"/>\n',
        ]

    def rect(self, x: float, y: float, w: float, h: float, fill: str, extra: str = "") -> None:
        self.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{fill}" {extra}/>\n')

    def line(self, x1: float, y1: float, x2: float, y2: float, stroke: str = "#333333") -> None:
        self.parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}"/>\n')

    def polyline(self, points: list[tuple[float, float]], stroke: str) -> None:
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.parts.append(f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="1.5"/>\n')

    def polygon(self, points: list[tuple[float, float]], fill: str) -> None:
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.parts.append(f'<polygon points="{coords}" fill="{fill}" fill-opacity="0.2" stroke="none"/>\n')

    def circle(self, cx: float, cy: float, r: float, fill: str) -> None:
        self.parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:.2f}" fill="{fill}"/>\n')

    def text(self, x: float, y: float, s: str, anchor: str = "middle", extra: str = "") -> None:
        self.parts.append(f'<text x="{x:.2f}" y="{y:.2f}" text-anchor="{anchor}" {extra}>{html.escape(s)}</text>\n')

    def render(self) -> str:
        return "".join(self.parts) + "</svg>\n"


def load_plot_spec(path: Path | str) -> PlotSpec:
    """key=value plot file; `where.<column> = text` lines filter rows; csv is relative to the file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Plot spec not found: {path}")
    pairs = read_key_values(path.read_text(), source=str(path))
    where = {k.split(".", 1)[1]: v for k, v in pairs.items() if k.startswith("where.")}
    values = {k: v for k, v in pairs.items() if not k.startswith("where.")}
    for key in ("x_log2", "y_log2", "width", "height"):
        if key in values:
            values[key] = parse_scalar(values[key])
    if values.get("csv"):
        values["csv"] = str(path.parent / values["csv"])
    try:
        return PlotSpec(where=where, **values)
    except ValidationError as e:
        raise ConfigError(f"Invalid plot spec {path}: {validation_message(e)}") from e


def read_rows(spec: PlotSpec, csv_path: Path) -> list[dict[str, str]]:
    if not csv_path.is_file():
        raise ConfigError(f"Plot input not found: {csv_path}")
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        columns = reader.fieldnames or []
        missing = [c for c in spec.columns if c not in columns]
        if missing:
            raise ConfigError(f"{csv_path} has no column(s) {', '.join(missing)}; available: {', '.join(columns)}")
        rows = [r for r in reader if all(r[k] == v for k, v in spec.where.items())]
    if not rows:
        raise ConfigError(f"Plot selection on {csv_path} is empty (where={spec.where})")
    return rows


def _number(text: str, column: str, log2: bool = False) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"Column {column!r} holds non-numeric value {text!r}") from None
    if log2:
        if value <= 0:
            raise ConfigError(f"Column {column!r} has non-positive value {value} on a log2 axis")
        return math.log2(value)
    return value


def _ticks(lo: float, hi: float) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (N_TICKS - 1) for i in range(N_TICKS)]


def _tick_label(value: float, log2: bool) -> str:
    if log2:
        return f"2^{value:g}" if float(value).is_integer() else f"2^{value:.1f}"
    return f"{value:.3g}"


def _categories(values: list[str]) -> list[str]:
    unique = list(dict.fromkeys(values))
    try:
        return sorted(unique, key=float)
    except ValueError:
        return unique


def _heat_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    r, g, b = (round(lo + (hi - lo) * t) for lo, hi in zip(HEAT_LOW, HEAT_HIGH))
    return f"#{r:02x}{g:02x}{b:02x}"


class _Frame:
    """Maps data coordinates into the plotting area."""

    def __init__(self, canvas: SvgCanvas, x_range: tuple[float, float], y_range: tuple[float, float]):
        self.left, self.top = MARGIN_LEFT, MARGIN_TOP
        self.w = canvas.width - MARGIN_LEFT - MARGIN_RIGHT
        self.h = canvas.height - MARGIN_TOP - MARGIN_BOTTOM
        self.x_range, self.y_range = x_range, y_range

    def sx(self, x: float) -> float:
        lo, hi = self.x_range
        return self.left + (0.5 if hi == lo else (x - lo) / (hi - lo)) * self.w

    def sy(self, y: float) -> float:
        lo, hi = self.y_range
        return self.top + self.h - (0.5 if hi == lo else (y - lo) / (hi - lo)) * self.h


def _axes(canvas: SvgCanvas, frame: _Frame, spec: PlotSpec) -> None:
    bottom = frame.top + frame.h
    canvas.line(frame.left, bottom, frame.left + frame.w, bottom)
    canvas.line(frame.left, frame.top, frame.left, bottom)
    for t in _ticks(*frame.x_range):
        x = frame.sx(t)
        canvas.line(x, bottom, x, bottom + 4)
        canvas.text(x, bottom + 16, _tick_label(t, spec.x_log2), extra='class="tick"')
    for t in _ticks(*frame.y_range):
        y = frame.sy(t)
        canvas.line(frame.left - 4, y, frame.left, y)
        canvas.text(frame.left - 7, y + 4, _tick_label(t, spec.y_log2), anchor="end", extra='class="tick"')
    _labels(canvas, spec)


def _labels(canvas: SvgCanvas, spec: PlotSpec) -> None:
    if spec.title:
        canvas.text(canvas.width / 2, 20, spec.title, extra='font-size="13"')
    canvas.text(MARGIN_LEFT + (canvas.width - MARGIN_LEFT - MARGIN_RIGHT) / 2, canvas.height - 12, spec.x_label or spec.x)
    mid = MARGIN_TOP + (canvas.height - MARGIN_TOP - MARGIN_BOTTOM) / 2
    canvas.text(16, mid, spec.y_label or spec.y, extra=f'transform="rotate(-90 16 {mid:.2f})"')


def _bounds(values: list[float]) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    return (min(finite), max(finite)) if finite else (0.0, 1.0)


def render_line(spec: PlotSpec, rows: list[dict[str, str]]) -> str:
    groups: dict[str, list[tuple[float, float, float]]] = {}
    for r in rows:
        ci = _number(r[spec.ci], spec.ci) if spec.ci and r[spec.ci] not in ("", "nan") else math.nan
        groups.setdefault(r[spec.series] if spec.series else "", []).append(
            (_number(r[spec.x], spec.x, spec.x_log2), _number(r[spec.y], spec.y, spec.y_log2), ci)
        )
    points = [p for g in groups.values() for p in g]
    y_values = [p[1] for p in points] + [p[1] + p[2] for p in points if math.isfinite(p[2])]
    y_values += [p[1] - p[2] for p in points if math.isfinite(p[2])]
    canvas = SvgCanvas(spec.width, spec.height)
    frame = _Frame(canvas, _bounds([p[0] for p in points]), _bounds(y_values))
    _axes(canvas, frame, spec)

    for i, (name, pts) in enumerate(groups.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(pts)
        band = [p for p in pts if math.isfinite(p[2])]
        if band:
            upper = [(frame.sx(x), frame.sy(y + c)) for x, y, c in band]
            lower = [(frame.sx(x), frame.sy(y - c)) for x, y, c in reversed(band)]
            canvas.polygon(upper + lower, color)
        canvas.polyline([(frame.sx(x), frame.sy(y)) for x, y, _ in pts], color)
        if name:
            legend_y = MARGIN_TOP + 14 * i
            canvas.rect(canvas.width - MARGIN_RIGHT + 10, legend_y - 8, 10, 10, color, 'class="legend"')
            canvas.text(canvas.width - MARGIN_RIGHT + 24, legend_y + 1, name, anchor="start")
    return canvas.render()


def _is_numeric(values: list[str]) -> bool:
    try:
        for v in values:
            float(v)
    except ValueError:
        return False
    return True


def _cell_values(spec: PlotSpec, rows: list[dict[str, str]]) -> dict[tuple[str, str], list[str]]:
    cells: dict[tuple[str, str], list[str]] = {}
    for r in rows:
        cells.setdefault((r[spec.x], r[spec.y]), []).append(r[spec.value])
    return cells


def render_heatmap(spec: PlotSpec, rows: list[dict[str, str]]) -> str:
    """
    Numeric value columns are averaged over rows sharing a cell (repeats of
    a sweep) and shaded on a colour bar. Any other column is drawn as
    categories: each cell takes its most frequent label.
    """
    xs = _categories([r[spec.x] for r in rows])
    ys = _categories([r[spec.y] for r in rows])
    grouped = _cell_values(spec, rows)
    numeric = _is_numeric([r[spec.value] for r in rows])
    if numeric:
        means = {cell: float(np.mean([float(v) for v in values])) for cell, values in grouped.items()}
        lo, hi = _bounds(list(means.values()))
        fills = {cell: _heat_color(0.5 if hi == lo else (v - lo) / (hi - lo)) for cell, v in means.items()}
        repeated = max(len(values) for values in grouped.values())
        if repeated > 1:
            logger.info(f"heatmap {spec.value}: averaged up to {repeated} rows per cell")
    else:
        labels = {cell: Counter(sorted(values)).most_common(1)[0][0] for cell, values in grouped.items()}
        kinds = sorted(set(labels.values()))
        fills = {cell: PALETTE[kinds.index(label) % len(PALETTE)] for cell, label in labels.items()}

    canvas = SvgCanvas(spec.width, spec.height)
    area_w = canvas.width - MARGIN_LEFT - MARGIN_RIGHT
    area_h = canvas.height - MARGIN_TOP - MARGIN_BOTTOM
    cw, ch = area_w / len(xs), area_h / len(ys)
    for (x, y), fill in fills.items():
        left = MARGIN_LEFT + xs.index(x) * cw
        top = MARGIN_TOP + (len(ys) - 1 - ys.index(y)) * ch
        canvas.rect(left, top, cw, ch, fill, 'class="cell"')
    for i, x in enumerate(xs):
        canvas.text(MARGIN_LEFT + (i + 0.5) * cw, MARGIN_TOP + area_h + 16, x, extra='class="tick"')
    for j, y in enumerate(ys):
        top = MARGIN_TOP + (len(ys) - 1 - j + 0.5) * ch
        canvas.text(MARGIN_LEFT - 7, top + 4, y, anchor="end", extra='class="tick"')

    bar_x = canvas.width - MARGIN_RIGHT + 20
    if numeric:
        steps = 10
        bar_h = area_h / steps
        for k in range(steps):
            canvas.rect(bar_x, MARGIN_TOP + (steps - 1 - k) * bar_h, 14, bar_h, _heat_color((k + 0.5) / steps), 'class="legend"')
        canvas.text(bar_x + 18, MARGIN_TOP + 8, f"{hi:.3g}", anchor="start")
        canvas.text(bar_x + 18, MARGIN_TOP + area_h, f"{lo:.3g}", anchor="start")
    else:
        for i, label in enumerate(kinds):
            legend_y = MARGIN_TOP + 14 * i
            canvas.rect(bar_x, legend_y - 8, 10, 10, PALETTE[i % len(PALETTE)], 'class="legend"')
            canvas.text(bar_x + 14, legend_y + 1, label, anchor="start")
    canvas.text(bar_x + 7, MARGIN_TOP - 8, spec.value)
    _labels(canvas, spec)
    return canvas.render()


def render_scatter(spec: PlotSpec, rows: list[dict[str, str]]) -> str:
    points = [
        (_number(r[spec.x], spec.x, spec.x_log2), _number(r[spec.y], spec.y, spec.y_log2), r[spec.series] if spec.series else "")
        for r in rows
    ]
    series = list(dict.fromkeys(p[2] for p in points))
    canvas = SvgCanvas(spec.width, spec.height)
    frame = _Frame(canvas, _bounds([p[0] for p in points]), _bounds([p[1] for p in points]))
    _axes(canvas, frame, spec)
    for x, y, s in points:
        canvas.circle(frame.sx(x), frame.sy(y), 3.5, PALETTE[series.index(s) % len(PALETTE)])
    for i, name in enumerate(s for s in series if s):
        legend_y = MARGIN_TOP + 14 * i
        canvas.rect(canvas.width - MARGIN_RIGHT + 10, legend_y - 8, 10, 10, PALETTE[series.index(name) % len(PALETTE)], 'class="legend"')
        canvas.text(canvas.width - MARGIN_RIGHT + 24, legend_y + 1, name, anchor="start")
    return canvas.render()


RENDERERS = {"line": render_line, "heatmap": render_heatmap, "scatter": render_scatter}


def emit_plot(spec: PlotSpec, csv_path: Path | str | None = None, out_path: Path | str | None = None) -> Path:
    """Renders spec over csv_path (or spec.csv) and writes the SVG next to the CSV by default."""
    if not (csv_path or spec.csv):
        raise ConfigError("Plot spec names no CSV input")
    source = Path(csv_path or spec.csv)
    rows = read_rows(spec, source)
    out = Path(out_path) if out_path is not None else source.with_name(f"{source.stem}-{spec.kind}.svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(RENDERERS[spec.kind](spec, rows))
    logger.info(f"Wrote {spec.kind} plot of {len(rows)} rows to {out}")
    return out
