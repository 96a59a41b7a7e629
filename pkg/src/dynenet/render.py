"""Minimal SVG views of the heatmap and MDS CSVs."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .panel import index_to_month

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
            "#bcbd22", "#17becf")


def _shade(v):
    # white (not selected) to red (most important)
    level = int(round(255 * (1.0 - float(np.clip(v, 0.0, 1.0)))))
    return f"#ff{level:02x}{level:02x}"


def _svg(width, height):
    return ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                      viewBox=f"0 0 {width} {height}")


def _text(parent, x, y, label, **attrs):
    el = ET.SubElement(parent, "text", x=f"{x:g}", y=f"{y:g}", attrib={"font-size": "10", **attrs})
    el.text = label
    return el


def heatmap_svg(heatmap, cell=12, label_width=160, header=60):
    """Predictors as rows, months as columns."""
    n_months, n_pred = heatmap.values.shape
    width = label_width + cell * max(n_months, 1) + 10
    height = header + cell * max(n_pred, 1) + 10
    root = _svg(width, height)
    _text(root, 4, 14, f"{heatmap.country} step {heatmap.step}")
    for i, m in enumerate(heatmap.months):
        if i % 6 == 0:
            x = label_width + i * cell
            _text(root, x, header - 6, index_to_month(int(m)), transform=f"rotate(-45 {x} {header - 6})")
    for j, name in enumerate(heatmap.predictors):
        y = header + j * cell
        _text(root, 4, y + cell - 2, name)
        for i in range(n_months):
            v = heatmap.values[i, j]
            if v <= 0:
                continue
            ET.SubElement(root, "rect", x=str(label_width + i * cell), y=str(y), width=str(cell),
                          height=str(cell), fill=_shade(v))
    ET.SubElement(root, "rect", x=str(label_width), y=str(header), width=str(cell * n_months),
                  height=str(cell * n_pred), fill="none", stroke="#888888")
    return ET.tostring(root, encoding="unicode")


def scatter_svg(names, coords, labels, size=480, margin=40):
    coords = np.asarray(coords, dtype=float).reshape(len(names), -1)[:, :2]
    root = _svg(size, size)
    lo, hi = coords.min(0) if len(coords) else np.zeros(2), coords.max(0) if len(coords) else np.ones(2)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    for name, (x, y), label in zip(names, coords, labels):
        px = margin + (x - lo[0]) / span[0] * (size - 2 * margin)
        py = size - margin - (y - lo[1]) / span[1] * (size - 2 * margin)
        ET.SubElement(root, "circle", cx=f"{px:.2f}", cy=f"{py:.2f}", r="4",
                      fill=_PALETTE[int(label) % len(_PALETTE)])
        _text(root, px + 5, py - 5, str(name))
    return ET.tostring(root, encoding="unicode")


def write_svg(text, path):
    with open(path, "w") as fh:
        fh.write(text)
        fh.write("\n")
