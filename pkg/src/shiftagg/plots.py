"""Static SVG chart emission with no rendering dependency.

Each chart writes two files: the SVG itself and a companion CSV holding
exactly the plotted data series, so every figure can be recomputed and
checked. Output is deterministic byte-for-byte for fixed inputs.
"""

import csv
import math
from xml.etree import ElementTree as ET

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 72, 24, 48, 64

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _fmt(v):
    return f"{float(v):.6g}"


def _svg_root(title):
    root = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "width": str(WIDTH),
            "height": str(HEIGHT),
            "viewBox": f"0 0 {WIDTH} {HEIGHT}",
            "font-family": "sans-serif",
            "font-size": "12",
        },
    )
    ET.SubElement(root, "rect", {"width": str(WIDTH), "height": str(HEIGHT), "fill": "white"})
    caption = ET.SubElement(
        root, "text", {"x": str(WIDTH // 2), "y": "24", "text-anchor": "middle", "font-size": "15"}
    )
    caption.text = title
    return root


class _Frame:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, x_domain, y_domain, log_x=False):
        self.log_x = log_x
        x_lo, x_hi = x_domain
        if log_x:
            x_lo, x_hi = math.log10(x_lo), math.log10(x_hi)
        y_lo, y_hi = y_domain
        if x_hi == x_lo:
            x_hi = x_lo + 1.0
        if y_hi == y_lo:
            y_hi = y_lo + 1.0
        self.x_lo, self.x_hi = x_lo, x_hi
        self.y_lo, self.y_hi = y_lo, y_hi

    def x(self, value):
        if self.log_x:
            value = math.log10(value)
        frac = (value - self.x_lo) / (self.x_hi - self.x_lo)
        return MARGIN_LEFT + frac * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    def y(self, value):
        frac = (value - self.y_lo) / (self.y_hi - self.y_lo)
        return HEIGHT - MARGIN_BOTTOM - frac * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)


def _axes(root, frame, x_label, y_label, y_ticks):
    axis_style = {"stroke": "#333333", "stroke-width": "1"}
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
    ET.SubElement(root, "line", {"x1": str(x0), "y1": str(y0), "x2": str(x1), "y2": str(y0), **axis_style})
    ET.SubElement(root, "line", {"x1": str(x0), "y1": str(y0), "x2": str(x0), "y2": str(y1), **axis_style})
    for tick in y_ticks:
        py = frame.y(tick)
        ET.SubElement(
            root,
            "line",
            {"x1": str(x0 - 4), "y1": _fmt(py), "x2": str(x1), "y2": _fmt(py),
             "stroke": "#cccccc", "stroke-width": "0.5"},
        )
        label = ET.SubElement(
            root, "text", {"x": str(x0 - 8), "y": _fmt(py + 4), "text-anchor": "end"}
        )
        label.text = _fmt(tick)
    xl = ET.SubElement(
        root, "text", {"x": str((x0 + x1) // 2), "y": str(HEIGHT - 16), "text-anchor": "middle"}
    )
    xl.text = x_label
    yl = ET.SubElement(
        root,
        "text",
        {
            "x": "18",
            "y": str((y0 + y1) // 2),
            "text-anchor": "middle",
            "transform": f"rotate(-90 18 {(y0 + y1) // 2})",
        },
    )
    yl.text = y_label


def _y_ticks(lo, hi):
    return list(np.linspace(lo, hi, 5))


def _pad_domain(values):
    lo = float(min(values))
    hi = float(max(values))
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.06 * (hi - lo)
    return lo - pad, hi + pad


def _write_svg(root, path):
    ET.ElementTree(root).write(path, encoding="unicode", xml_declaration=True)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _companion(path):
    path = str(path)
    stem = path[: -len(".svg")] if path.endswith(".svg") else path
    return stem + ".csv"


def bar_chart(path, labels, values, *, title, y_label):
    """Vertical bars, one per label. Companion CSV columns: label,value."""
    values = [float(v) for v in values]
    if len(labels) != len(values) or not values:
        raise ValueError("labels and values must be equal-length and non-empty")
    lo, hi = _pad_domain(values + [0.0])
    frame = _Frame((0.0, float(len(values))), (lo, hi))
    root = _svg_root(title)
    _axes(root, frame, "", y_label, _y_ticks(lo, hi))
    base = frame.y(max(0.0, lo))
    span = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    bar_w = 0.6 * span / len(values)
    for i, (label, value) in enumerate(zip(labels, values)):
        cx = frame.x(i + 0.5)
        top = frame.y(value)
        y = min(top, base)
        h = abs(base - top)
        ET.SubElement(
            root,
            "rect",
            {
                "x": _fmt(cx - bar_w / 2),
                "y": _fmt(y),
                "width": _fmt(bar_w),
                "height": _fmt(max(h, 0.5)),
                "fill": PALETTE[i % len(PALETTE)],
            },
        )
        text = ET.SubElement(
            root,
            "text",
            {"x": _fmt(cx), "y": str(HEIGHT - MARGIN_BOTTOM + 16), "text-anchor": "middle"},
        )
        text.text = str(label)
    _write_svg(root, path)
    _write_csv(_companion(path), ["label", "value"], [[l, f"{v:.17g}"] for l, v in zip(labels, values)])
    return path


def line_chart(path, x_values, series, *, title, x_label, y_label, bands=None, log_x=False):
    """One line per series; optional (lo, hi) bands drawn as translucent fills.

    ``series`` maps name -> y values aligned with ``x_values``; ``bands``
    maps name -> (lo, hi) lists. Companion CSV columns: x, then
    <name>[, <name>_lo, <name>_hi] per series.
    """
    x_values = [float(x) for x in x_values]
    if not x_values or not series:
        raise ValueError("need x values and at least one series")
    bands = bands or {}
    all_y = []
    for name, ys in series.items():
        if len(ys) != len(x_values):
            raise ValueError(f"series {name!r} length does not match x values")
        all_y.extend(float(v) for v in ys)
        if name in bands:
            lo, hi = bands[name]
            all_y.extend(float(v) for v in lo)
            all_y.extend(float(v) for v in hi)
    lo_y, hi_y = _pad_domain(all_y)
    frame = _Frame((min(x_values), max(x_values)), (lo_y, hi_y), log_x=log_x)
    root = _svg_root(title)
    _axes(root, frame, x_label, y_label, _y_ticks(lo_y, hi_y))
    for x in x_values:
        text = ET.SubElement(
            root,
            "text",
            {"x": _fmt(frame.x(x)), "y": str(HEIGHT - MARGIN_BOTTOM + 16), "text-anchor": "middle"},
        )
        text.text = _fmt(x)
    for idx, (name, ys) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        if name in bands:
            lo, hi = bands[name]
            forward = [f"{_fmt(frame.x(x))},{_fmt(frame.y(float(v)))}" for x, v in zip(x_values, lo)]
            backward = [
                f"{_fmt(frame.x(x))},{_fmt(frame.y(float(v)))}"
                for x, v in zip(reversed(x_values), reversed(list(hi)))
            ]
            ET.SubElement(
                root,
                "polygon",
                {"points": " ".join(forward + backward), "fill": color, "fill-opacity": "0.15",
                 "stroke": "none"},
            )
        points = " ".join(
            f"{_fmt(frame.x(x))},{_fmt(frame.y(float(v)))}" for x, v in zip(x_values, ys)
        )
        ET.SubElement(
            root,
            "polyline",
            {"points": points, "fill": "none", "stroke": color, "stroke-width": "2"},
        )
        legend_y = MARGIN_TOP + 16 * idx
        ET.SubElement(
            root,
            "line",
            {"x1": str(WIDTH - MARGIN_RIGHT - 120), "y1": str(legend_y),
             "x2": str(WIDTH - MARGIN_RIGHT - 96), "y2": str(legend_y),
             "stroke": color, "stroke-width": "2"},
        )
        label = ET.SubElement(
            root, "text", {"x": str(WIDTH - MARGIN_RIGHT - 90), "y": str(legend_y + 4)}
        )
        label.text = name
    header = ["x"]
    for name in series:
        header.append(name)
        if name in bands:
            header.extend([f"{name}_lo", f"{name}_hi"])
    rows = []
    for i, x in enumerate(x_values):
        row = [f"{x:.17g}"]
        for name, ys in series.items():
            row.append(f"{float(ys[i]):.17g}")
            if name in bands:
                lo, hi = bands[name]
                row.extend([f"{float(lo[i]):.17g}", f"{float(hi[i]):.17g}"])
        rows.append(row)
    _write_csv(_companion(path), header, rows)
    _write_svg(root, path)
    return path


def box_plot(path, labels, samples, *, title, y_label):
    """Quartile boxes with min/max whiskers, one per label.

    Companion CSV columns: label,min,q1,median,q3,max.
    """
    if len(labels) != len(samples) or not samples:
        raise ValueError("labels and samples must be equal-length and non-empty")
    stats = []
    for label, values in zip(labels, samples):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ValueError(f"no samples for {label!r}")
        stats.append(
            (
                str(label),
                float(values.min()),
                float(np.percentile(values, 25)),
                float(np.median(values)),
                float(np.percentile(values, 75)),
                float(values.max()),
            )
        )
    all_values = [v for row in stats for v in row[1:]]
    lo, hi = _pad_domain(all_values)
    frame = _Frame((0.0, float(len(stats))), (lo, hi))
    root = _svg_root(title)
    _axes(root, frame, "", y_label, _y_ticks(lo, hi))
    span = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    box_w = 0.45 * span / len(stats)
    for i, (label, vmin, q1, med, q3, vmax) in enumerate(stats):
        color = PALETTE[i % len(PALETTE)]
        cx = frame.x(i + 0.5)
        for pair in ((vmin, q1), (q3, vmax)):
            ET.SubElement(
                root,
                "line",
                {"x1": _fmt(cx), "y1": _fmt(frame.y(pair[0])), "x2": _fmt(cx),
                 "y2": _fmt(frame.y(pair[1])), "stroke": color, "stroke-width": "1.5"},
            )
        ET.SubElement(
            root,
            "rect",
            {
                "x": _fmt(cx - box_w / 2),
                "y": _fmt(frame.y(q3)),
                "width": _fmt(box_w),
                "height": _fmt(max(frame.y(q1) - frame.y(q3), 0.5)),
                "fill": color,
                "fill-opacity": "0.25",
                "stroke": color,
            },
        )
        ET.SubElement(
            root,
            "line",
            {"x1": _fmt(cx - box_w / 2), "y1": _fmt(frame.y(med)), "x2": _fmt(cx + box_w / 2),
             "y2": _fmt(frame.y(med)), "stroke": color, "stroke-width": "2"},
        )
        text = ET.SubElement(
            root,
            "text",
            {"x": _fmt(cx), "y": str(HEIGHT - MARGIN_BOTTOM + 16), "text-anchor": "middle"},
        )
        text.text = str(label)
    _write_svg(root, path)
    _write_csv(
        _companion(path),
        ["label", "min", "q1", "median", "q3", "max"],
        [[row[0]] + [f"{v:.17g}" for v in row[1:]] for row in stats],
    )
    return path
