"""Baseline imbalance-aware resamplers and the balanced subsampler used by IPIP.

All functions are pure given their seed. Rows copied from the source keep their
``row_ids``; SMOTE's synthetic rows get ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dataset import NEGATIVE, POSITIVE, Dataset, round_half_up
from .errors import BadCounts, TooFewMinority, ValidationError
from .learners import LearnerSpec, dumps, model_from_json, model_to_json, train
from .seeding import derive_seed, make_rng

IAA_KINDS = ("none", "upsample", "downsample", "smote", "under_bagging")


@dataclass(frozen=True)
class IaaSpec:
    kind: str = "none"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in IAA_KINDS:
            raise ValidationError(f"unknown IAA {self.kind!r}")
        if self.params.get("k_neighbors", 5) < 1:
            raise ValidationError("k_neighbors must be >= 1")
        if self.params.get("n_bags", 10) < 1:
            raise ValidationError("n_bags must be >= 1")


def _split_classes(d: Dataset):
    """(minority indices, majority indices); ties treat positive as minority."""
    pos, neg = np.flatnonzero(d.y == POSITIVE), np.flatnonzero(d.y == NEGATIVE)
    return (pos, neg) if pos.size <= neg.size else (neg, pos)


def upsample(d: Dataset, seed: int) -> Dataset:
    """Replicate random minority rows (with replacement) until the classes are equal."""
    mino, majo = _split_classes(d)
    extra = majo.size - mino.size
    if extra == 0:
        return d
    rng = make_rng(seed)
    idx = np.concatenate([mino, rng.choice(mino, size=extra, replace=True), majo])
    return d.subset(idx, provenance=f"{d.provenance}+upsample")


def downsample(d: Dataset, seed: int) -> Dataset:
    mino, majo = _split_classes(d)
    if majo.size == mino.size:
        return d
    rng = make_rng(seed)
    idx = np.concatenate([mino, np.sort(rng.choice(majo, size=mino.size, replace=False))])
    return d.subset(idx, provenance=f"{d.provenance}+downsample")


@dataclass(frozen=True)
class SmoteTrace:
    base: np.ndarray  # row index (into the minority block) of x_i
    neighbor: np.ndarray  # row index of x_nn
    lam: np.ndarray


def smote_samples(X_min: np.ndarray, k_neighbors: int, n_new: int, rng: np.random.Generator,
                  onehot_groups=()) -> tuple[np.ndarray, SmoteTrace]:
    """Synthetic points ``x_i + lam * (x_nn - x_i)`` between minority neighbours.

    Base points cycle through the minority rows in a shuffled order; each one
    picks a uniform neighbour among its ``k_neighbors`` nearest and a uniform
    ``lam``. One-hot blocks are snapped to their largest entry.
    """
    m = X_min.shape[0]
    if m < 2:
        raise TooFewMinority(f"SMOTE needs at least 2 minority rows, got {m}")
    if not 1 <= k_neighbors <= m - 1:
        raise ValidationError(f"k_neighbors must be in [1, {m - 1}], got {k_neighbors}")
    _, nn = cKDTree(X_min).query(X_min, k=k_neighbors + 1)
    nn = nn[:, 1:].reshape(m, k_neighbors)  # drop the point itself
    reps = -(-n_new // m)
    base = np.concatenate([rng.permutation(m) for _ in range(reps)])[:n_new]
    neighbor = nn[base, rng.integers(0, k_neighbors, size=n_new)]
    lam = rng.random(n_new)
    X_new = X_min[base] + lam[:, None] * (X_min[neighbor] - X_min[base])
    for group in onehot_groups:
        block = X_new[:, group]
        snapped = np.zeros_like(block)
        snapped[np.arange(n_new), np.argmax(block, axis=1)] = 1.0
        X_new[:, group] = snapped
    return X_new, SmoteTrace(base, neighbor, lam)


def smote(d: Dataset, k_neighbors: int = 5, oversample_ratio: float | None = None,
          seed: int = 0) -> Dataset:
    """Append SMOTE rows to ``d``.

    ``oversample_ratio`` is the number of synthetic rows as a multiple of the
    minority count; by default the classes are balanced.
    """
    mino, majo = _split_classes(d)
    if mino.size < 2:
        raise TooFewMinority(f"SMOTE needs at least 2 minority rows, got {mino.size}")
    n_new = majo.size - mino.size if oversample_ratio is None else round_half_up(oversample_ratio * mino.size)
    if n_new <= 0:
        return d
    X_new, _ = smote_samples(d.X[mino], k_neighbors, n_new, make_rng(seed), d.onehot_groups())
    label = d.y[mino[0]]
    return d.replace(
        X=np.vstack([d.X, X_new]),
        y=np.concatenate([d.y, np.full(n_new, label, dtype=np.int8)]),
        row_ids=np.concatenate([d.row_ids, np.full(n_new, -1, dtype=np.int64)]),
        provenance=f"{d.provenance}+smote",
    )


class UnderBaggingModel:
    """Members trained on independent downsampled bags.

    ``predict_proba`` averages member probabilities; ``predict`` is an
    unweighted majority vote (a tie goes to the negative class).
    """

    def __init__(self, members, threshold: float = 0.5):
        self.members = tuple(members)
        self.threshold = threshold

    @property
    def n_features(self) -> int:
        return self.members[0].n_features

    def member_votes(self, X) -> np.ndarray:
        return np.array([m.predict_proba(X) >= self.threshold for m in self.members], dtype=np.int8)

    def predict_proba(self, X) -> np.ndarray:
        return np.mean([m.predict_proba(X) for m in self.members], axis=0)

    def predict(self, X) -> np.ndarray:
        votes = self.member_votes(X).sum(axis=0)
        return (2 * votes > len(self.members)).astype(np.int8)

    def to_json(self) -> dict:
        return {"kind": "under_bagging", "threshold": self.threshold,
                "members": [model_to_json(m) for m in self.members]}

    @classmethod
    def from_json(cls, obj: dict) -> "UnderBaggingModel":
        return cls([model_from_json(m) for m in obj["members"]], obj["threshold"])

    def dumps(self) -> str:
        return dumps(self.to_json())


def under_bagging(d: Dataset, n_bags: int, learner: LearnerSpec, seed: int) -> UnderBaggingModel:
    if n_bags < 1:
        raise ValidationError("n_bags must be >= 1")
    members = []
    for b in range(n_bags):
        bag = downsample(d, derive_seed(seed, "bag", b))
        members.append(train(learner.with_seed(derive_seed(seed, "bag-model", b)), bag))
    return UnderBaggingModel(members)


def majority_draw_count(n_min_draw: int, p_target: float) -> int:
    return round_half_up(n_min_draw * (1.0 - p_target) / p_target)


def balance_subsampling(d: Dataset, p_target: float, n_min_draw: int, count: int,
                        seed: int) -> list[Dataset]:
    """``count`` independent subsets with minority proportion ~``p_target``.

    Each draws ``n_min_draw`` minority and ``round(n_min_draw*(1-p)/p)``
    majority rows, both uniformly with replacement.
    """
    mino, majo = _split_classes(d)
    if not 0.0 < p_target <= 0.5:
        raise BadCounts(f"p_target must be in (0, 0.5], got {p_target}")
    if not 1 <= n_min_draw <= mino.size:
        raise BadCounts(f"n_min_draw={n_min_draw} must be in [1, {mino.size}]")
    if count < 1:
        raise BadCounts(f"count must be >= 1, got {count}")
    n_maj_draw = majority_draw_count(n_min_draw, p_target)
    subsets = []
    for i in range(count):
        rng = make_rng(derive_seed(seed, "subset", i))
        idx = np.concatenate([rng.choice(mino, size=n_min_draw, replace=True),
                              rng.choice(majo, size=n_maj_draw, replace=True)])
        subsets.append(d.subset(idx, provenance=f"{d.provenance}+subset{i}"))
    return subsets
