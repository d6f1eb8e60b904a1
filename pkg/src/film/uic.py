"""Bias profiles, Gaussian weighting and the UIC score.

A metric's bias is its Pearson correlation with the minority proportion across
a dataset and its re-proportioned versions. UIC adds up a technique's metrics
on the original dataset, each weighted by a Gaussian of its correlation, so
biased metrics contribute little.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DimensionMismatch, IncompleteGrid, LengthMismatch, TooFew
from .metrics import UIC_METRICS
from .records import RunRecord


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Sample Pearson correlation; ``None`` when either sequence is constant."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 3:
        raise TooFew(f"pearson needs at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    # relative test: float noise in a constant sequence is not variance
    if sxx <= 1e-28 * max(1.0, float(x @ x)) or syy <= 1e-28 * max(1.0, float(y @ y)):
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class GaussianParams:
    a: float = 1.0
    b: float = 0.0
    c: float = 0.25

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise ValueError("Gaussian height a and width c must be positive")


def gaussian_weight(r: float | None, params: GaussianParams = GaussianParams()) -> float:
    """``a * exp(-(r - b)^2 / (2 c^2))``; an undefined correlation gets the full height ``a``."""
    if r is None:
        return params.a
    return params.a * math.exp(-((r - params.b) ** 2) / (2.0 * params.c ** 2))


@dataclass
class BiasProfile:
    techniques: list[str]
    metrics: list[str]
    p_min_vector: list[float]
    # r[t][k]; None where undefined
    r: list[list[float | None]]
    # per technique: (n+1) x k fold-mean metric values, original dataset first
    means: dict[str, np.ndarray] = field(default_factory=dict)

    def r_of(self, technique: str, metric: str) -> float | None:
        return self.r[self.techniques.index(technique)][self.metrics.index(metric)]

    def to_csv(self) -> str:
        lines = ["technique," + ",".join(self.metrics)]
        for t, row in zip(self.techniques, self.r):
            lines.append(t + "," + ",".join("" if v is None else repr(v) for v in row))
        return "\n".join(lines) + "\n"


def fold_means(records: Iterable[RunRecord], metrics: Sequence[str] = UIC_METRICS):
    """``{technique: {variant: [mean over folds per metric]}}`` and ``{variant: p_min}``."""
    acc = defaultdict(lambda: defaultdict(list))
    p_of = {}
    for rec in records:
        acc[rec.technique][rec.variant].append([rec.metrics.get(m) for m in metrics])
        p_of[rec.variant] = rec.p_min
    means = {t: {v: np.mean(rows, axis=0) for v, rows in by_v.items()} for t, by_v in acc.items()}
    return means, p_of


def bias_profile(records: Iterable[RunRecord], p_min_vector: Sequence[float] | None = None,
                 metrics: Sequence[str] = UIC_METRICS) -> BiasProfile:
    """Correlate fold-mean metric values with the minority proportion per technique.

    Variants are indexed ``0..n`` (0 = original). ``p_min_vector`` defaults to
    the proportions recorded on the runs.
    """
    records = list(records)
    means, p_of = fold_means(records, metrics)
    variants = sorted(p_of)
    if p_min_vector is None:
        p_min_vector = [p_of[v] for v in variants]
    p_min_vector = [float(p) for p in p_min_vector]
    if variants != list(range(len(p_min_vector))):
        raise IncompleteGrid(f"variants {variants} do not cover 0..{len(p_min_vector) - 1}")
    techniques = sorted(means)
    r, mats = [], {}
    for t in techniques:
        missing = [v for v in variants if v not in means[t]]
        if missing:
            raise IncompleteGrid(f"technique {t!r} has no runs for variants {missing}")
        mat = np.array([means[t][v] for v in variants])
        mats[t] = mat
        r.append([pearson(mat[:, k], p_min_vector) for k in range(len(metrics))])
    return BiasProfile(techniques, list(metrics), p_min_vector, r, mats)


@dataclass
class TechniqueUic:
    weights: dict[str, float]
    metrics: dict[str, float]
    uic: float
    # correlation with p_min of the UIC and of the plain metric mean, over the grid
    uic_r: float | None = None
    mean_r: float | None = None

    def to_json(self) -> dict:
        return {"weights": self.weights, "metrics": self.metrics, "uic": self.uic,
                "uic_r": self.uic_r, "mean_r": self.mean_r}


@dataclass
class UicReport:
    techniques: dict[str, TechniqueUic]
    distances: dict[str, float]
    undefined_counts: dict[str, int]
    winner: str
    params: GaussianParams

    def to_json(self) -> dict:
        return {
            "techniques": {t: v.to_json() for t, v in self.techniques.items()},
            "distances": self.distances,
            "undefined": self.undefined_counts,
            "winner": self.winner,
            "gaussian": {"a": self.params.a, "b": self.params.b, "c": self.params.c},
        }


def uic_value(weights: Sequence[float], values: Sequence[float]) -> float:
    return float(sum(w * m for w, m in zip(weights, values)))


def uic_score(profile: BiasProfile, original_metrics: Mapping[str, Mapping[str, float]] | None = None,
              params: GaussianParams = GaussianParams()) -> UicReport:
    """UIC per technique from its bias profile.

    ``original_metrics`` maps technique -> metric -> value on the original
    dataset; by default the fold means of variant 0 are used. The report also
    carries per-metric bias distances over techniques (plus ``uic`` and
    ``mean`` pseudo-metrics) and the arg-max technique.
    """
    out = {}
    for i, t in enumerate(profile.techniques):
        if original_metrics is None:
            values = profile.means[t][0]
        else:
            if t not in original_metrics:
                raise DimensionMismatch(f"no original metrics for technique {t!r}")
            try:
                values = [original_metrics[t][k] for k in profile.metrics]
            except KeyError as exc:
                raise DimensionMismatch(f"technique {t!r} lacks metric {exc}") from None
        w = [gaussian_weight(r, params) for r in profile.r[i]]
        entry = TechniqueUic(dict(zip(profile.metrics, w)),
                             dict(zip(profile.metrics, (float(v) for v in values))),
                             uic_value(w, values))
        if t in profile.means and len(profile.p_min_vector) >= 3:
            mat = profile.means[t]
            entry.uic_r = pearson(mat @ np.asarray(w), profile.p_min_vector)
            entry.mean_r = pearson(mat.mean(axis=1), profile.p_min_vector)
        out[t] = entry

    columns = {m: [profile.r[i][k] for i in range(len(profile.techniques))]
               for k, m in enumerate(profile.metrics)}
    columns["mean"] = [out[t].mean_r for t in profile.techniques]
    columns["uic"] = [out[t].uic_r for t in profile.techniques]
    distances = {m: bias_distance(col) for m, col in columns.items()}
    undefined = {m: sum(v is None for v in col) for m, col in columns.items()}
    # ties resolve to the first technique in sorted order
    winner = max(profile.techniques, key=lambda t: (out[t].uic, -profile.techniques.index(t)))
    return UicReport(out, distances, undefined, winner, params)


def bias_distance(r_column: Sequence[float | None]) -> float:
    """Euclidean norm of the defined correlations (undefined entries are skipped)."""
    vals = [v for v in r_column if v is not None]
    return float(math.sqrt(sum(v * v for v in vals)))


# ---------------------------------------------------------------- testing

@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    p_value: float
    n: int
    method: str  # "exact" or "normal"


def _exact_cdf(doubled_ranks: np.ndarray, t2: int) -> float:
    """P(W+ <= t) under the null, with ranks given doubled so they are integers."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts += shifted
    return float(counts[: t2 + 1].sum() / 2.0 ** doubled_ranks.size)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], exact_max_n: int = 25) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped. For ``n <= exact_max_n`` the p-value comes
    from the exact permutation distribution (average ranks for ties); above
    that a normal approximation with tie and continuity corrections is used.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise TooFew(f"need at least 5 non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    t = min(w_plus, w_minus)
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = 2.0 * _exact_cdf(doubled, int(round(2 * t)))
        return WilcoxonResult(t, min(1.0, p), n, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = (t - mean + 0.5) / math.sqrt(var)
    return WilcoxonResult(t, min(1.0, 2.0 * float(norm.cdf(z))), n, "normal")


def bonferroni(ps: Sequence[float], m: int | None = None) -> list[float]:
    m = len(ps) if m is None else m
    return [min(1.0, p * m) for p in ps]


def pooled_abs_correlations(reports: Iterable[tuple[BiasProfile, UicReport]]) -> dict[str, list[float]]:
    """|r| per metric pooled over every (dataset, technique), with ``uic`` and ``mean``.

    An undefined correlation enters as 0 (a constant series carries no bias).
    """
    pooled = defaultdict(list)
    for profile, report in reports:
        for i, t in enumerate(profile.techniques):
            for k, m in enumerate(profile.metrics):
                pooled[m].append(abs(profile.r[i][k] or 0.0))
            pooled["uic"].append(abs(report.techniques[t].uic_r or 0.0))
            pooled["mean"].append(abs(report.techniques[t].mean_r or 0.0))
    return dict(pooled)


@dataclass(frozen=True)
class UicComparison:
    metric: str
    median_abs_r: float
    uic_median_abs_r: float
    uic_lower: bool
    p_value: float | None
    p_adjusted: float | None


def compare_with_uic(pooled: Mapping[str, Sequence[float]], metrics: Sequence[str] = UIC_METRICS,
                     m: int | None = None) -> list[UicComparison]:
    """Paired Wilcoxon of |r(UIC)| against |r(metric)| for each metric, Bonferroni-adjusted."""
    m = len(metrics) if m is None else m
    uic = np.asarray(pooled["uic"])
    out = []
    for metric in metrics:
        vals = np.asarray(pooled[metric])
        try:
            p = wilcoxon_signed_rank(uic, vals).p_value
            p_adj = bonferroni([p], m)[0]
        except TooFew:
            p = p_adj = None
        out.append(UicComparison(metric, float(np.median(vals)), float(np.median(uic)),
                                 bool(np.median(uic) < np.median(vals)), p, p_adj))
    return out
