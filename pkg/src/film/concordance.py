"""Agreement between metrics on which technique wins, and the concordance plot.

An experiment is one (dataset variant, fold) cell. Two metrics agree on an
experiment when both have the same unique best technique there.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import norm

from .errors import IncompleteRecords
from .records import RunRecord

# fixed legend colours for the built-in techniques
TECHNIQUE_COLORS = {
    "none": "#7f7f7f",
    "upsample": "#1f77b4",
    "downsample": "#ff7f0e",
    "smote": "#2ca02c",
    "under_bagging": "#9467bd",
    "ipip": "#d62728",
}
_FALLBACK_COLORS = ("#8c564b", "#e377c2", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78")


def technique_color(name: str, index: int) -> str:
    base = name.split("/")[0]
    return TECHNIQUE_COLORS.get(base, _FALLBACK_COLORS[index % len(_FALLBACK_COLORS)])


@dataclass
class ExperimentTable:
    experiments: list[tuple[int, int]]  # (variant, fold)
    techniques: list[str]
    values: np.ndarray  # experiments x techniques


def experiment_table(records: Iterable[RunRecord], metric: str) -> ExperimentTable:
    cells = defaultdict(dict)
    techniques = set()
    for rec in records:
        exp = (rec.variant, rec.fold)
        if rec.technique in cells[exp]:
            raise IncompleteRecords(f"duplicate record for {exp} / {rec.technique}")
        cells[exp][rec.technique] = rec.metrics.get(metric)
        techniques.add(rec.technique)
    if not cells:
        raise IncompleteRecords("no records")
    techniques = sorted(techniques)
    experiments = sorted(cells)
    for exp in experiments:
        missing = [t for t in techniques if t not in cells[exp]]
        if missing:
            raise IncompleteRecords(f"experiment {exp} lacks techniques {missing}")
    values = np.array([[cells[e][t] for t in techniques] for e in experiments], dtype=np.float64)
    return ExperimentTable(experiments, techniques, values)


def win_ratios(records: Iterable[RunRecord], metric: str) -> dict[str, float]:
    """Share of experiments each technique wins; tied winners split the experiment."""
    tab = experiment_table(records, metric)
    wins = np.zeros(len(tab.techniques))
    for row in tab.values:
        best = row == row.max()
        wins[best] += 1.0 / best.sum()
    return dict(zip(tab.techniques, (float(w) for w in wins / len(tab.experiments))))


@dataclass
class AgreementCell:
    agreement: float
    shares: dict[str, float]
    n_agree: int
    n_experiments: int

    def to_json(self) -> dict:
        return {"agreement": self.agreement, "shares": self.shares,
                "n_agree": self.n_agree, "n_experiments": self.n_experiments}


def _unique_argmax(values: np.ndarray) -> np.ndarray:
    """Column of the row maximum, or -1 where it is tied."""
    best = values == values.max(axis=1, keepdims=True)
    arg = np.argmax(best, axis=1)
    arg[best.sum(axis=1) > 1] = -1
    return arg


def pairwise_agreement(records: Iterable[RunRecord], metric_i: str, metric_j: str) -> AgreementCell:
    """Fraction of experiments whose unique winner is the same under both metrics.

    A tie under either metric counts as disagreement. With ``metric_i ==
    metric_j`` the cell is the diagonal: agreement 1 and shares equal to the
    win ratios.
    """
    records = list(records)
    if metric_i == metric_j:
        ratios = win_ratios(records, metric_i)
        n = len(experiment_table(records, metric_i).experiments)
        return AgreementCell(1.0, ratios, n, n)
    ti = experiment_table(records, metric_i)
    tj = experiment_table(records, metric_j)
    ai, aj = _unique_argmax(ti.values), _unique_argmax(tj.values)
    agree = (ai == aj) & (ai >= 0)
    n = len(ti.experiments)
    shares = {t: float(np.sum(agree & (ai == k))) / n for k, t in enumerate(ti.techniques)}
    n_agree = int(agree.sum())
    return AgreementCell(n_agree / n, shares, n_agree, n)


@dataclass
class AgreementMatrix:
    metrics: list[str]
    techniques: list[str]
    cells: dict[tuple[int, int], AgreementCell] = field(default_factory=dict)  # i <= j

    def cell(self, i: int, j: int) -> AgreementCell:
        return self.cells[(min(i, j), max(i, j))]

    def to_json(self) -> dict:
        return {
            "metrics": self.metrics,
            "techniques": self.techniques,
            "cells": [{"i": i, "j": j, "row": self.metrics[i], "col": self.metrics[j], **c.to_json()}
                      for (i, j), c in sorted(self.cells.items())],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AgreementMatrix":
        cells = {(c["i"], c["j"]): AgreementCell(c["agreement"], c["shares"], c["n_agree"], c["n_experiments"])
                 for c in obj["cells"]}
        return cls(list(obj["metrics"]), list(obj["techniques"]), cells)


def agreement_matrix(records: Iterable[RunRecord], metrics: Sequence[str]) -> AgreementMatrix:
    records = list(records)
    techniques = sorted({r.technique for r in records})
    mat = AgreementMatrix(list(metrics), techniques)
    for i, mi in enumerate(metrics):
        for j in range(i, len(metrics)):
            mat.cells[(i, j)] = pairwise_agreement(records, mi, metrics[j])
    return mat


def wilson_interval(successes: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    if n == 0:
        return (0.0, 0.0)
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


def discordance_ratio(matrix: AgreementMatrix, confidence: float = 0.99) -> tuple[float, tuple[float, float]]:
    """Mean disagreement over off-diagonal cells, with a Wilson interval on the
    pooled per-experiment disagreement indicators."""
    off = [c for (i, j), c in sorted(matrix.cells.items()) if i < j]
    if not off:
        return 0.0, (0.0, 0.0)
    ratio = float(np.mean([1.0 - c.agreement for c in off]))
    n = sum(c.n_experiments for c in off)
    disagree = sum(c.n_experiments - c.n_agree for c in off)
    return ratio, wilson_interval(disagree, n, confidence)


def win_ratio_csv(records: Iterable[RunRecord], metrics: Sequence[str]) -> str:
    records = list(records)
    ratios = {m: win_ratios(records, m) for m in metrics}
    techniques = sorted({r.technique for r in records})
    lines = ["metric," + ",".join(techniques)]
    for m in metrics:
        lines.append(m + "," + ",".join(repr(ratios[m][t]) for t in techniques))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- SVG

CELL = 64
RADIUS = 26
LABEL_W = 80


def _f(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _pie(cx: float, cy: float, cell: AgreementCell, techniques: Sequence[str]) -> list[str]:
    out = [f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{RADIUS}" fill="none" stroke="#999999" stroke-width="1"/>']
    angle = 0.0  # fraction of a turn, clockwise from 12 o'clock
    for k, t in enumerate(techniques):
        share = cell.shares.get(t, 0.0)
        if share <= 0.0:
            continue
        color = technique_color(t, k)
        if share >= 1.0 - 1e-12:
            out.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{RADIUS}" fill="{color}"/>')
        else:
            a0, a1 = 2 * math.pi * angle, 2 * math.pi * (angle + share)
            x0, y0 = cx + RADIUS * math.sin(a0), cy - RADIUS * math.cos(a0)
            x1, y1 = cx + RADIUS * math.sin(a1), cy - RADIUS * math.cos(a1)
            large = 1 if share > 0.5 else 0
            out.append(f'<path d="M{_f(cx)},{_f(cy)} L{_f(x0)},{_f(y0)} A{RADIUS},{RADIUS} 0 {large} 1 '
                       f'{_f(x1)},{_f(y1)} Z" fill="{color}"/>')
        angle += share
    return out


def _panel(matrix: AgreementMatrix, x0: float, y0: float, title: str) -> tuple[list[str], float, float]:
    m = len(matrix.metrics)
    out = []
    if title:
        out.append(f'<text x="{_f(x0)}" y="{_f(y0 + 14)}" font-size="14" font-weight="bold">{escape(title)}</text>')
    top = y0 + 24
    for j, name in enumerate(matrix.metrics):
        cx = x0 + LABEL_W + CELL * j + CELL / 2
        out.append(f'<text x="{_f(cx)}" y="{_f(top + 12)}" font-size="11" text-anchor="middle">{escape(name)}</text>')
    grid_top = top + 20
    for i, name in enumerate(matrix.metrics):
        cy = grid_top + CELL * i + CELL / 2
        out.append(f'<text x="{_f(x0 + LABEL_W - 6)}" y="{_f(cy + 4)}" font-size="11" text-anchor="end">{escape(name)}</text>')
        for j in range(i, m):
            cx = x0 + LABEL_W + CELL * j + CELL / 2
            out.extend(_pie(cx, cy, matrix.cell(i, j), matrix.techniques))
    width = LABEL_W + CELL * m
    height = grid_top - y0 + CELL * m
    return out, width, height


def concordance_svg(panels: Sequence[tuple[str, AgreementMatrix]]) -> str:
    """SVG text for one or more concordance matrices laid out side by side."""
    body, x, height = [], 10.0, 0.0
    techniques = []
    for title, matrix in panels:
        part, w, h = _panel(matrix, x, 10.0, title)
        body.extend(part)
        x += w + 20
        height = max(height, h)
        for t in matrix.techniques:
            if t not in techniques:
                techniques.append(t)
    legend_y = 10.0 + height + 20
    for k, t in enumerate(techniques):
        lx = 10 + LABEL_W + 120 * k
        body.append(f'<rect x="{_f(lx)}" y="{_f(legend_y)}" width="12" height="12" fill="{technique_color(t, k)}"/>')
        body.append(f'<text x="{_f(lx + 16)}" y="{_f(legend_y + 10)}" font-size="11">{escape(t)}</text>')
    width = max(x - 10, 10 + LABEL_W + 120 * len(techniques))
    total_h = legend_y + 24
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(total_h)}" '
            f'viewBox="0 0 {_f(width)} {_f(total_h)}" font-family="sans-serif">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="#ffffff"/>', *body, "</svg>"]) + "\n"


def render_concordance_svg(matrix: AgreementMatrix | Sequence[tuple[str, AgreementMatrix]], path,
                           title: str = "") -> Path:
    panels = [(title, matrix)] if isinstance(matrix, AgreementMatrix) else list(matrix)
    path = Path(path)
    path.write_text(concordance_svg(panels), encoding="utf-8")
    return path
