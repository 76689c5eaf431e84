"""Render sweep results as plain SVG geometry."""
from __future__ import annotations

from collections import defaultdict
import csv
import os
from typing import Sequence
import xml.etree.ElementTree as ET

import numpy as np

from pyflops.bench import RunManifest
from pyflops.const import LOG, PLOTS_DIR
from pyflops.exceptions import ConfigError
from pyflops.util.store import dump_document

SIZE = 480
MARGIN = 48
MAX_POINTS = 1500
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
EXACT_COLOR = "#7f7f7f"


class _Frame:
    """Map data coordinates onto the square drawing area."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float], log_y: bool = False) -> None:
        self.log_y = log_y
        ys_t = [self._ty(y) for y in ys]
        self.x0, self.x1 = _padded(min(xs), max(xs))
        self.y0, self.y1 = _padded(min(ys_t), max(ys_t))

    def _ty(self, y: float) -> float:
        return float(np.log10(max(y, 1e-300))) if self.log_y else y

    def px(self, x: float) -> float:
        return MARGIN + (x - self.x0) / (self.x1 - self.x0) * (SIZE - 2 * MARGIN)

    def py(self, y: float) -> float:
        return SIZE - MARGIN - (self._ty(y) - self.y0) / (self.y1 - self.y0) * (SIZE - 2 * MARGIN)


def _padded(low: float, high: float) -> tuple[float, float]:
    span = high - low
    pad = 0.05 * span if span > 0 else max(abs(low), 1.0) * 0.5
    return low - pad, high + pad


def _canvas(title: str) -> ET.Element:
    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(SIZE),
        height=str(SIZE),
        viewBox=f"0 0 {SIZE} {SIZE}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(SIZE), height=str(SIZE), fill="white")
    heading = ET.SubElement(svg, "text", x=str(SIZE / 2), y="24", attrib={"text-anchor": "middle", "font-size": "14"})
    heading.text = title
    ET.SubElement(
        svg,
        "rect",
        x=str(MARGIN),
        y=str(MARGIN),
        width=str(SIZE - 2 * MARGIN),
        height=str(SIZE - 2 * MARGIN),
        fill="none",
        stroke="black",
    )
    return svg


def _legend(svg: ET.Element, entries: Sequence[tuple[str, str]]) -> None:
    for row, (label, color) in enumerate(entries):
        y = MARGIN + 14 + 14 * row
        ET.SubElement(svg, "circle", cx=str(MARGIN + 10), cy=str(y - 4), r="4", fill=color)
        text = ET.SubElement(svg, "text", x=str(MARGIN + 20), y=str(y), attrib={"font-size": "11"})
        text.text = label


def _write(svg: ET.Element, path: str) -> str:
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
    return path


def scatter_svg(
    title: str, exact: np.ndarray, clouds: dict[str, np.ndarray], path: str
) -> str:
    """Overlay the first two coordinates of exact samples and sampler endpoints."""
    def thin(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return points[:: max(1, len(points) // MAX_POINTS), :2]

    layers = [("exact", EXACT_COLOR, thin(exact))] + [
        (name, PALETTE[i % len(PALETTE)], thin(cloud)) for i, (name, cloud) in enumerate(sorted(clouds.items()))
    ]
    stacked = np.concatenate([points for _, _, points in layers])
    ys = stacked[:, 1] if stacked.shape[1] > 1 else np.zeros(len(stacked))
    frame = _Frame(stacked[:, 0].tolist(), ys.tolist())
    svg = _canvas(title)
    for name, color, points in layers:
        group = ET.SubElement(svg, "g", fill=color, attrib={"fill-opacity": "0.45"})
        group.set("id", name)
        for point in points:
            y = point[1] if len(point) > 1 else 0.0
            ET.SubElement(group, "circle", cx=f"{frame.px(point[0]):.2f}", cy=f"{frame.py(y):.2f}", r="1.6")
    _legend(svg, [(name, color) for name, color, _ in layers])
    return _write(svg, path)


def metric_svg(
    title: str, series: dict[str, list[tuple[float, float]]], path: str
) -> str:
    """Lines of a metric against NFE, one per sampler, log-scaled metric axis."""
    points = [p for line in series.values() for p in line]
    svg = _canvas(title)
    if not points:
        return _write(svg, path)
    positive = [y for _, y in points if y > 0]
    log_y = len(positive) == len(points)
    frame = _Frame([x for x, _ in points], [y for _, y in points], log_y=log_y)
    entries = []
    for i, (name, line) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        entries.append((name, color))
        coords = " ".join(f"{frame.px(x):.2f},{frame.py(y):.2f}" for x, y in sorted(line))
        ET.SubElement(svg, "polyline", points=coords, fill="none", stroke=color, attrib={"stroke-width": "1.5"})
        for x, y in line:
            ET.SubElement(svg, "circle", cx=f"{frame.px(x):.2f}", cy=f"{frame.py(y):.2f}", r="3", fill=color)
    label = ET.SubElement(svg, "text", x=str(SIZE / 2), y=str(SIZE - 12), attrib={"text-anchor": "middle", "font-size": "12"})
    label.text = "NFE"
    _legend(svg, entries)
    return _write(svg, path)


def _read_rows(path: str) -> list[dict[str, str]]:
    if not os.path.isfile(path):
        return []
    with open(path, encoding="utf-8", newline="") as csv_file:
        return list(csv.DictReader(csv_file))


def emit_plots(manifest: RunManifest) -> list[str]:
    """Write a scatter overlay and a metric-vs-NFE chart per target.

    Missing or failed cells leave gaps; each one is noted in the manifest's
    warnings.

    :param manifest: A finished sweep manifest
    :type manifest: :class:`RunManifest`
    :raises ConfigError: the manifest is not a sweep manifest
    :return: Paths of the SVG files written
    :rtype: ``list``
    """
    document = manifest.document
    if document.get("kind") != "sweep":
        raise ConfigError(f"{manifest.path}: plots need a sweep manifest")
    output = manifest.output
    plots = os.path.join(output, PLOTS_DIR)
    os.makedirs(plots, exist_ok=True)
    rows = _read_rows(os.path.join(output, document.get("csv", "")))
    warnings = list(document.get("warnings") or [])
    for key in manifest.failed:
        warnings.append(f"plot gap: cell {key} is missing")
        LOG.warning(f"Plot gap: cell {key} did not complete")

    targets = sorted({cell["target"] for cell in manifest.cells.values()})
    written = []
    for target in targets:
        exact_rel = (document.get("exact_samples") or {}).get(target)
        exact = np.load(os.path.join(output, exact_rel)) if exact_rel else np.zeros((0, 2))
        clouds = {}
        for cell in manifest.cells.values():
            if cell["target"] == target and cell.get("endpoint"):
                clouds[cell["sampler"]] = np.load(os.path.join(output, cell["endpoint"]))
        if not len(exact) and not clouds:
            warnings.append(f"plot gap: no point clouds for {target}")
            LOG.warning(f"No point clouds to plot for {target}")
            exact = np.zeros((1, 2))
        written.append(scatter_svg(f"{target}: endpoints", exact, clouds, os.path.join(plots, f"{target}__scatter.svg")))

        metric = "sliced_w2"
        target_rows = [row for row in rows if row["target"] == target]
        if target_rows and all(row["sliced_w2"] == "" for row in target_rows):
            metric = "energy"
        grouped: dict[tuple[str, float], list[float]] = defaultdict(list)
        for row in target_rows:
            if row[metric] != "":
                grouped[(row["sampler"], float(row["nfe"]))].append(float(row[metric]))
        series: dict[str, list[tuple[float, float]]] = defaultdict(list)
        for (sampler, nfe), values in grouped.items():
            series[sampler].append((nfe, float(np.mean(values))))
        written.append(metric_svg(f"{target}: {metric} vs NFE", series, os.path.join(plots, f"{target}__metric.svg")))

    if warnings != list(document.get("warnings") or []):
        document["warnings"] = warnings
        with open(manifest.path, "w", encoding="utf-8") as manifest_file:
            manifest_file.write(dump_document(dict(document)))
    LOG.info(f"Wrote {len(written)} plots to {plots}")
    return written
