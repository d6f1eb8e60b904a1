"""Binary-classification datasets: ingestion, encoding, stratified splits and
class-proportion arithmetic.

Labels are stored as ``int8`` with ``1`` for the positive class, which is the
minority class at load time unless the caller says otherwise.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadN,
    ClassTooSmall,
    EmptyAfterCleaning,
    InvalidDataset,
    MissingTargetColumn,
    NotBinaryTarget,
    NotImbalanced,
    UnreachableProportion,
    WidthMismatch,
)
from .seeding import make_rng

log = logging.getLogger(__name__)

POSITIVE = 1
NEGATIVE = 0

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none", "?"})

# upper bound of the proportion interval; above it UIC is not meaningful
MAX_IMBALANCED_P = 0.4
MIN_GRID_P = 0.05


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Column:
    """How one source column maps to encoded features."""

    name: str
    levels: tuple[str, ...] | None = None  # None for numeric columns

    @property
    def width(self) -> int:
        return 1 if self.levels is None else len(self.levels)

    def feature_names(self) -> list[str]:
        if self.levels is None:
            return [self.name]
        return [f"{self.name}={lvl}" for lvl in self.levels]


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    positive_label: str = "1"
    negative_label: str = "0"
    provenance: str = ""
    columns: tuple[Column, ...] = ()
    # source row index per row; -1 marks synthetic rows
    row_ids: np.ndarray | None = None
    n_dropped: int = 0

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.y).astype(np.int8)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidDataset(f"row count {X.shape[0]} != label count {y.shape[0]}")
        if X.shape[0] < 2:
            raise InvalidDataset("a dataset needs at least 2 rows")
        if not np.isin(y, (0, 1)).all():
            raise InvalidDataset("labels must be 0/1")
        if y.min() == y.max():
            raise InvalidDataset("both classes must be present")
        if not np.isfinite(X).all():
            raise InvalidDataset("feature matrix contains missing or non-finite values")
        if len(self.feature_names) != X.shape[1]:
            raise InvalidDataset("feature_names does not match the matrix width")
        ids = np.arange(X.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64).copy()
        if ids.shape != y.shape:
            raise InvalidDataset("row_ids length mismatch")
        for a in (X, y, ids):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "row_ids", ids)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_pos(self) -> int:
        return int(self.y.sum())

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    def onehot_groups(self) -> list[list[int]]:
        groups, start = [], 0
        for col in self.columns:
            if col.levels is not None:
                groups.append(list(range(start, start + col.width)))
            start += col.width
        return groups

    def subset(self, idx, provenance: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return self.replace(
            X=self.X[idx], y=self.y[idx], row_ids=self.row_ids[idx],
            provenance=self.provenance if provenance is None else provenance,
        )

    def replace(self, **changes) -> "Dataset":
        kw = dict(
            X=self.X, y=self.y, feature_names=self.feature_names,
            positive_label=self.positive_label, negative_label=self.negative_label,
            provenance=self.provenance, columns=self.columns, row_ids=self.row_ids,
            n_dropped=self.n_dropped,
        )
        kw.update(changes)
        return Dataset(**kw)

    def summary(self) -> dict:
        s = class_stats(self)
        return {
            "n": self.n,
            "n_min": s.n_min,
            "n_maj": s.n_maj,
            "p_min": s.p_min,
            "ir": s.ir,
            "features": list(self.feature_names),
            "positive_label": self.positive_label,
            "rows_dropped": self.n_dropped,
        }


@dataclass(frozen=True)
class ClassStats:
    n_min: int
    n_maj: int
    p_min: float
    ir: float


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    p_holdout: float


@dataclass(frozen=True)
class ProportionGrid:
    p_d: float
    targets: tuple[float, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return len(self.targets)

    def with_original(self) -> tuple[float, ...]:
        """The n+1 proportions, original first."""
        return (self.p_d,) + self.targets


def p_min_from_ir(ir: float) -> float:
    return 1.0 / (ir + 1.0)


def ir_from_p_min(p_min: float) -> float:
    return (1.0 - p_min) / p_min


# ---------------------------------------------------------------- ingestion

def _is_missing(tok: str) -> bool:
    return tok.strip().lower() in MISSING_TOKENS


def _parses_as_float(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_table(path, delimiter: str = ",") -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidDataset(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise InvalidDataset(f"{path}: row {i + 2} has {len(r)} fields, header has {len(header)}")
    return header, rows


def _encode(rows: list[list[str]], columns: Sequence[Column], col_idx: Sequence[int]) -> np.ndarray:
    width = sum(c.width for c in columns)
    X = np.zeros((len(rows), width), dtype=np.float64)
    start = 0
    for col, j in zip(columns, col_idx):
        if col.levels is None:
            X[:, start] = [float(r[j]) for r in rows]
        else:
            pos = {lvl: k for k, lvl in enumerate(col.levels)}
            for i, r in enumerate(rows):
                k = pos.get(r[j].strip())
                if k is not None:  # unseen level encodes as all zeros
                    X[i, start + k] = 1.0
        start += col.width
    return X


def load_csv(path, target_column: str, positive_label: str | None = None,
             delimiter: str = ",") -> Dataset:
    """Read a CSV into a :class:`Dataset`.

    Non-numeric columns are one-hot encoded (source column order, then sorted
    levels). Rows with any missing value are dropped and counted. When
    ``positive_label`` is omitted the minority label becomes positive.
    """
    path = Path(path)
    header, rows = read_table(path, delimiter)
    if target_column not in header:
        raise MissingTargetColumn(f"{path}: no column named {target_column!r}")
    t = header.index(target_column)

    kept = [r for r in rows if not any(_is_missing(c) for c in r)]
    dropped = len(rows) - len(kept)
    if dropped:
        log.warning("%s: dropped %d row(s) with missing values", path, dropped)
    if not kept:
        raise EmptyAfterCleaning(f"{path}: every row had a missing value ({dropped} dropped)")

    labels = [r[t].strip() for r in kept]
    distinct = sorted(set(labels))
    if len(distinct) != 2:
        raise NotBinaryTarget(f"{path}: target {target_column!r} has {len(distinct)} distinct values, expected 2")
    counts = {lab: labels.count(lab) for lab in distinct}
    if positive_label is None:
        positive_label = min(distinct, key=lambda lab: (counts[lab], lab))
    elif positive_label not in counts:
        raise NotBinaryTarget(f"{path}: positive label {positive_label!r} not among {distinct}")
    negative_label = next(lab for lab in distinct if lab != positive_label)
    if counts[positive_label] > counts[negative_label]:
        log.warning("%s: positive label %r is the majority class", path, positive_label)

    columns, col_idx = [], []
    for j, name in enumerate(header):
        if j == t:
            continue
        values = [r[j].strip() for r in kept]
        if all(_parses_as_float(v) for v in values):
            columns.append(Column(name))
        else:
            columns.append(Column(name, tuple(sorted(set(values)))))
        col_idx.append(j)

    X = _encode(kept, columns, col_idx)
    y = np.array([lab == positive_label for lab in labels], dtype=np.int8)
    names = [fn for c in columns for fn in c.feature_names()]
    return Dataset(X, y, tuple(names), positive_label, negative_label,
                   provenance=str(path), columns=tuple(columns), n_dropped=dropped)


def load_features(path, columns: Sequence[Column], target_column: str | None = None,
                  delimiter: str = ",") -> np.ndarray:
    """Encode a CSV's feature columns with a schema recorded at training time.

    The target column, if present, is ignored. Missing values are rejected.
    """
    header, rows = read_table(path, delimiter)
    names = [h for h in header if h != target_column]
    expected = [c.name for c in columns]
    if names != expected:
        raise WidthMismatch(f"{path}: feature columns {names} do not match model columns {expected}")
    for i, r in enumerate(rows):
        if any(_is_missing(r[header.index(n)]) for n in names):
            raise InvalidDataset(f"{path}: row {i + 2} has missing values")
    try:
        return _encode(rows, columns, [header.index(n) for n in names])
    except ValueError as exc:
        raise InvalidDataset(f"{path}: {exc}") from None


def from_arrays(X, y, feature_names=None, provenance: str = "arrays") -> Dataset:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    return Dataset(X, y, tuple(feature_names), provenance=provenance,
                   columns=tuple(Column(n) for n in feature_names))


def write_csv(d: Dataset, path, target_column: str = "class") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(d.feature_names) + [target_column])
        for row, lab in zip(d.X, d.y):
            w.writerow([repr(float(v)) for v in row] + [d.positive_label if lab else d.negative_label])


# ---------------------------------------------------------------- proportions

def class_stats(d: Dataset) -> ClassStats:
    n_min, n_maj = sorted((d.n_pos, d.n_neg))
    ir = n_maj / n_min
    return ClassStats(n_min=n_min, n_maj=n_maj, p_min=1.0 / (ir + 1.0), ir=ir)


def _minority_label(d: Dataset) -> int:
    return POSITIVE if d.n_pos <= d.n_neg else NEGATIVE


def _class_indices(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return np.flatnonzero(d.y == POSITIVE), np.flatnonzero(d.y == NEGATIVE)


def stratified_holdout(d: Dataset, p_holdout: float, seed: int) -> SplitPair:
    """Per-class split: ``round(p_holdout * count)`` rows of each class go to train."""
    if not 0.0 < p_holdout < 1.0:
        raise InvalidDataset(f"p_holdout must be in (0, 1), got {p_holdout}")
    rng = make_rng(seed)
    train, test = [], []
    for idx in _class_indices(d):
        n_train = round_half_up(p_holdout * idx.size)
        if n_train < 1 or n_train >= idx.size:
            raise ClassTooSmall(f"a class of {idx.size} row(s) cannot be split with p_holdout={p_holdout}")
        perm = rng.permutation(idx)
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    tr, te = np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
    return SplitPair(d.subset(tr), d.subset(te), p_holdout)


def stratified_kfold(d: Dataset, k: int, seed: int) -> list[SplitPair]:
    """k stratified folds; fold ``f`` is the test part of split ``f``.

    Each class is shuffled and dealt round-robin from fold 0, so per-class
    counts differ by at most one between folds.
    """
    if k < 2:
        raise InvalidDataset(f"k must be >= 2, got {k}")
    pos, neg = _class_indices(d)
    if min(pos.size, neg.size) < k:
        raise ClassTooSmall(f"class of {min(pos.size, neg.size)} row(s) cannot fill {k} folds")
    rng = make_rng(seed)
    fold_of = np.empty(d.n, dtype=np.int64)
    for idx in (pos, neg):
        # both classes start at fold 0, so the folds holding an extra
        # minority row also hold the extra majority rows
        fold_of[rng.permutation(idx)] = np.arange(idx.size) % k
    splits = []
    for f in range(k):
        te = np.flatnonzero(fold_of == f)
        tr = np.flatnonzero(fold_of != f)
        splits.append(SplitPair(d.subset(tr), d.subset(te), (k - 1) / k))
    return splits


def resample_to_proportion(d: Dataset, p_target: float, seed: int) -> Dataset:
    """Subsample one class (without replacement) so the minority proportion is ``p_target``.

    The class that would otherwise need to grow is kept whole.
    """
    if not 0.0 < p_target < 0.5:
        raise InvalidDataset(f"p_target must be in (0, 0.5), got {p_target}")
    stats = class_stats(d)
    pos, neg = _class_indices(d)
    mino, majo = (pos, neg) if _minority_label(d) == POSITIVE else (neg, pos)
    rng = make_rng(seed)
    if math.isclose(p_target, stats.p_min, rel_tol=0.0, abs_tol=1e-12):
        return d
    if p_target > stats.p_min:
        n_keep = round_half_up(mino.size * (1.0 - p_target) / p_target)
        if n_keep < 1:
            raise UnreachableProportion(f"p_target={p_target} needs {n_keep} majority rows")
        keep = np.concatenate([mino, rng.choice(majo, size=n_keep, replace=False)])
    else:
        n_keep = round_half_up(majo.size * p_target / (1.0 - p_target))
        if n_keep < 1:
            raise UnreachableProportion(
                f"p_target={p_target} needs {n_keep} minority rows from {majo.size} majority rows")
        keep = np.concatenate([rng.choice(mino, size=n_keep, replace=False), majo])
    return d.subset(np.sort(keep), provenance=f"{d.provenance}@p={p_target:.6g}")


def proportion_grid(p_d: float, n: int = 6) -> ProportionGrid:
    """Evenly spaced target proportions around ``p_d`` (``p_d`` itself excluded)."""
    if n < 6 or n % 2:
        raise BadN(f"n must be even and >= 6, got {n}")
    if not 0.0 < p_d <= MAX_IMBALANCED_P:
        raise NotImbalanced(f"minority proportion {p_d:.4g} is above {MAX_IMBALANCED_P}; UIC is not applicable")
    if p_d == MAX_IMBALANCED_P:
        # the upper interval collapses to a point
        raise NotImbalanced(f"minority proportion {p_d} leaves no room above it for the grid")
    if p_d > MIN_GRID_P:
        lower = np.linspace(MIN_GRID_P, p_d, n // 2 + 1)[:-1]
        upper = np.linspace(p_d, MAX_IMBALANCED_P, n // 2 + 1)[1:]
        targets = np.concatenate([lower, upper])
    else:
        targets = np.linspace(p_d, MAX_IMBALANCED_P, n + 1)[1:]
    return ProportionGrid(float(p_d), tuple(float(t) for t in targets))
