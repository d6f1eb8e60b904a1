"""Confusion matrices, threshold metrics and curve areas for binary classifiers.

Metrics are total functions: a zero denominator yields ``0.0`` and the metric
name is added to ``degenerate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, NoPositives, OneClassOnly

# the k metrics integrated by UIC
UIC_METRICS = ("acc", "kappa", "bal_acc", "f1", "roc_auc", "pr_auc", "mcc", "gmean")

# MetricVector attribute -> serialized key
JSON_KEYS = {
    "acc": "acc", "sensitivity": "sens", "specificity": "spec", "precision": "prec",
    "recall": "recall", "fpr": "fpr", "f1": "f1", "kappa": "kappa", "mcc": "mcc",
    "bal_acc": "bal_acc", "gmean": "gmean", "roc_auc": "roc_auc", "pr_auc": "pr_auc",
}
_FROM_JSON = {v: k for k, v in JSON_KEYS.items()}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")
        if self.total < 1:
            raise ValueError("confusion matrix is empty")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricVector:
    acc: float
    sensitivity: float
    specificity: float
    precision: float
    recall: float
    fpr: float
    f1: float
    kappa: float
    mcc: float
    bal_acc: float
    gmean: float
    roc_auc: float | None = None
    pr_auc: float | None = None
    degenerate: frozenset[str] = field(default_factory=frozenset)

    def get(self, name: str) -> float:
        name = _FROM_JSON.get(name, name)
        value = getattr(self, name)
        if value is None:
            raise KeyError(f"metric {name!r} was not computed")
        return value

    def with_curves(self, roc: float | None, pr: float | None, flags=()) -> "MetricVector":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(roc_auc=roc, pr_auc=pr, degenerate=self.degenerate | frozenset(flags))
        return MetricVector(**kw)

    def to_json(self) -> dict:
        out = {key: getattr(self, attr) for attr, key in JSON_KEYS.items()}
        out["degenerate"] = sorted(self.degenerate)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MetricVector":
        kw = {attr: obj.get(key) for attr, key in JSON_KEYS.items()}
        return cls(**kw, degenerate=frozenset(obj.get("degenerate", ())))


def confusion(preds, truth) -> ConfusionMatrix:
    """Tally predictions against truth (both 0/1, 1 = positive)."""
    p = np.asarray(preds).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape or p.ndim != 1:
        raise LengthMismatch(f"predictions {p.shape} and truth {t.shape} differ")
    if p.size == 0:
        raise LengthMismatch("no instances")
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    tn = int(p.size - tp - fp - fn)
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def threshold_metrics(cm: ConfusionMatrix, kappa_form: str = "table") -> MetricVector:
    """All hard-label metrics of a confusion matrix.

    ``kappa_form="table"`` uses the closed 2x2 expression
    ``2(TP*TN - FN*FP) / ((TP+FP)(FP+TN) + (TP+FN)(FN+TN))``;
    ``"standard"`` uses ``(p_o - p_e) / (1 - p_e)``. The two agree algebraically.
    """
    tp, tn, fp, fn = cm.tp, cm.tn, cm.fp, cm.fn
    degenerate = set()

    def ratio(name, num, den):
        if den == 0:
            degenerate.add(name)
            return 0.0
        return num / den

    n = cm.total
    acc = (tp + tn) / n
    sens = ratio("sensitivity", tp, tp + fn)
    spec = ratio("specificity", tn, tn + fp)
    prec = ratio("precision", tp, tp + fp)
    recall = ratio("recall", tp, tp + fn)
    fpr = ratio("fpr", fp, fp + tn)
    if "precision" in degenerate or "recall" in degenerate:
        degenerate.add("f1")
        f1 = 0.0
    else:
        f1 = ratio("f1", 2.0 * prec * recall, prec + recall)

    if kappa_form == "table":
        kappa = ratio("kappa", 2.0 * (tp * tn - fn * fp), (tp + fp) * (fp + tn) + (tp + fn) * (fn + tn))
    elif kappa_form == "standard":
        p_o = acc
        p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
        kappa = ratio("kappa", p_o - p_e, 1.0 - p_e)
    else:
        raise ValueError(f"unknown kappa_form {kappa_form!r}")

    mcc_den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = ratio("mcc", tp * tn - fn * fp, math.sqrt(mcc_den))

    return MetricVector(
        acc=acc, sensitivity=sens, specificity=spec, precision=prec, recall=recall,
        fpr=fpr, f1=f1, kappa=kappa, mcc=mcc,
        bal_acc=(sens + spec) / 2.0, gmean=math.sqrt(sens * spec),
        degenerate=frozenset(degenerate),
    )


def _scored(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise LengthMismatch(f"scores {s.shape} and labels {y.shape} differ")
    return s, y


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic (ties count 1/2)."""
    s, y = _scored(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("roc_auc needs both classes")
    ranks = rankdata(s)  # average ranks, O(n log n)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Step-wise (non-interpolated) area under the precision-recall curve.

    Sum over distinct score thresholds, highest first, of
    ``(recall_i - recall_{i-1}) * precision_i``.
    """
    s, y = _scored(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("pr_auc needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    # last index of each run of equal scores
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp = tp[last]
    predicted = last + 1
    precision = tp / predicted
    recall = tp / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def evaluate(labels_true, labels_pred, scores=None, kappa_form: str = "table") -> MetricVector:
    """Threshold metrics plus curve areas when scores are given.

    A curve area that is undefined for the truth vector (one class only) is set
    to 0 and flagged.
    """
    mv = threshold_metrics(confusion(labels_pred, labels_true), kappa_form=kappa_form)
    if scores is None:
        return mv
    flags = []
    try:
        roc = roc_auc(scores, labels_true)
    except OneClassOnly:
        roc = 0.0
        flags.append("roc_auc")
    try:
        pr = pr_auc(scores, labels_true)
    except NoPositives:
        pr = 0.0
        flags.append("pr_auc")
    return mv.with_curves(roc, pr, flags)
