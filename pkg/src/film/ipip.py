"""IPIP: an ensemble of ensembles grown on balanced resamples.

Training splits off a stratified holdout, draws ``b_s`` balanced subsets of the
remaining data and, for each subset, greedily grows an ensemble of at most
``b_E`` models. A candidate model is kept only if the ensemble including it
scores strictly better on the holdout. The subset count and the ensemble cap
come from binomial coverage bounds so that, with probability ``alpha``, every
minority row is drawn at least once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .dataset import Dataset, class_stats, stratified_holdout
from .errors import ValidationError, WidthMismatch
from .learners import LearnerSpec, dumps, model_from_json, model_to_json, train
from .metrics import evaluate
from .resampling import balance_subsampling
from .seeding import derive_seed

log = logging.getLogger(__name__)

IPIP_FORMAT = "film-ipip"
IPIP_VERSION = 1


def _strict_ceiling(x: float) -> int:
    """Smallest integer strictly greater than ``x``."""
    return math.floor(x) + 1


def min_subsets(alpha: float, n: int, n_min: int) -> int:
    """Number of balanced subsets ``b_s`` so each of ``n`` minority rows is drawn
    with probability > ``alpha`` when every subset draws ``n_min`` rows with
    replacement."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    if n < 2 or n_min < 1:
        raise ValidationError(f"need n >= 2 and n_min >= 1, got n={n}, n_min={n_min}")
    return _strict_ceiling(math.log1p(-alpha) / (n_min * math.log1p(-1.0 / n)))


def max_ensemble_models(alpha: float, n_min: int) -> int:
    """Ensemble cap ``b_E``: the subset bound with the population equal to the draw size."""
    if n_min < 2:
        raise ValidationError(f"n_min must be >= 2, got {n_min}")
    return min_subsets(alpha, n_min, n_min)


def tries_budget(b_e: int, size: int) -> int:
    """Consecutive failed attempts allowed while the ensemble holds ``size`` models."""
    if not 0 <= size <= b_e:
        raise ValidationError(f"ensemble size {size} outside [0, {b_e}]")
    return -(-(b_e - size) // 3)


@dataclass(frozen=True)
class IpipConfig:
    alpha: float = 0.99
    n_min_fraction: float = 0.75
    p_subset: float = 0.45
    p_inner: float = 0.5
    p_holdout: float = 0.75
    b_s_override: int | None = None
    b_e_override: int | None = None
    intra_vote_threshold: float = 0.75
    inter_vote_threshold: float = 0.5
    selection_metric: str = "kappa"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must be in (0, 1)")
        for name in ("n_min_fraction", "p_holdout"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValidationError(f"{name} must be in (0, 1)")
        for name in ("p_subset", "p_inner"):
            if not 0.0 < getattr(self, name) <= 0.5:
                raise ValidationError(f"{name} must be in (0, 0.5]")
        for name in ("intra_vote_threshold", "inter_vote_threshold"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must be in (0, 1]")
        for name in ("b_s_override", "b_e_override"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValidationError(f"{name} must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "IpipConfig":
        return cls(**obj)


@dataclass(frozen=True)
class VoteTally:
    labels: np.ndarray  # final labels, 1 = positive (minority)
    model_votes: list[np.ndarray]  # per ensemble: positive votes per row
    ensemble_sizes: tuple[int, ...]
    ensemble_votes: np.ndarray  # positive-voting ensembles per row


def ensemble_vote(pos_votes: np.ndarray, size: int, intra: float) -> np.ndarray:
    """Ensemble says majority (0) iff at least ``intra`` of its models vote majority."""
    return ((size - pos_votes) / size < intra).astype(np.int8)


def final_vote(ensemble_labels: np.ndarray, inter: float) -> np.ndarray:
    """Final majority (0) iff at least ``inter`` of the ensembles vote majority."""
    b = ensemble_labels.shape[0]
    neg = b - ensemble_labels.sum(axis=0)
    return (neg / b < inter).astype(np.int8)


@dataclass(eq=False)
class IpipModel:
    ensembles: list[list]
    config: IpipConfig
    histories: list[list[float]]
    b_s: int
    b_e: int
    n_features: int
    threshold: float = 0.5
    forced: list[bool] = field(default_factory=list)

    def vote(self, X) -> VoteTally:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise WidthMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        model_votes, ens_labels = [], []
        for ens in self.ensembles:
            votes = np.sum([m.predict_proba(X) >= self.threshold for m in ens], axis=0).astype(np.int64)
            model_votes.append(votes)
            ens_labels.append(ensemble_vote(votes, len(ens), self.config.intra_vote_threshold))
        ens_labels = np.array(ens_labels)
        labels = final_vote(ens_labels, self.config.inter_vote_threshold)
        return VoteTally(labels, model_votes, tuple(len(e) for e in self.ensembles), ens_labels.sum(axis=0))

    def predict(self, X) -> np.ndarray:
        return self.vote(X).labels

    def predict_proba(self, X) -> np.ndarray:
        """Mean over ensembles of the mean member probability (a ranking score for curve metrics)."""
        return np.mean([np.mean([m.predict_proba(X) for m in ens], axis=0) for ens in self.ensembles], axis=0)

    @property
    def n_models(self) -> int:
        return sum(len(e) for e in self.ensembles)

    def to_json(self) -> dict:
        return {
            "format": IPIP_FORMAT, "version": IPIP_VERSION,
            "config": self.config.to_json(), "b_s": self.b_s, "b_e": self.b_e,
            "n_features": self.n_features, "threshold": self.threshold,
            "histories": self.histories, "forced": self.forced,
            "ensembles": [[model_to_json(m) for m in ens] for ens in self.ensembles],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IpipModel":
        if obj.get("format") != IPIP_FORMAT or obj.get("version") != IPIP_VERSION:
            raise ValidationError(f"not a {IPIP_FORMAT} v{IPIP_VERSION} document")
        return cls(
            ensembles=[[model_from_json(m) for m in ens] for ens in obj["ensembles"]],
            config=IpipConfig.from_json(obj["config"]),
            histories=[list(h) for h in obj["histories"]],
            b_s=obj["b_s"], b_e=obj["b_e"], n_features=obj["n_features"],
            threshold=obj["threshold"], forced=list(obj["forced"]),
        )

    def dumps(self) -> str:
        return dumps(self.to_json())


def _ensemble_score(prob_cols: list[np.ndarray], truth: np.ndarray, cfg: IpipConfig, threshold: float) -> float:
    probs = np.array(prob_cols)
    votes = (probs >= threshold).sum(axis=0)
    labels = ensemble_vote(votes, probs.shape[0], cfg.intra_vote_threshold)
    return evaluate(truth, labels, probs.mean(axis=0)).get(cfg.selection_metric)


def train_ipip(d: Dataset, learner: LearnerSpec, cfg: IpipConfig | None = None, seed: int = 0,
               observer: Callable[[Dataset], None] | None = None) -> IpipModel:
    """Fit an IPIP model.

    ``observer``, if given, is called with every dataset a member model is
    trained on (for auditing; it does not affect the result).
    """
    cfg = cfg or IpipConfig()
    if class_stats(d).n_min < 2:
        raise ValidationError("IPIP needs at least 2 minority rows")
    split = stratified_holdout(d, cfg.p_holdout, derive_seed(seed, "holdout"))
    d_train, d_test = split.train, split.test
    n_min_train = class_stats(d_train).n_min
    n_min_draw = min(n_min_train, math.ceil(cfg.n_min_fraction * n_min_train))
    n_min_draw = max(n_min_draw, 2)
    b_s_bound = min_subsets(cfg.alpha, max(n_min_train, 2), n_min_draw)
    b_e_bound = max_ensemble_models(cfg.alpha, n_min_draw)
    b_s = cfg.b_s_override or b_s_bound
    b_e = cfg.b_e_override or b_e_bound
    if b_s < b_s_bound or b_e < b_e_bound:
        log.warning("IPIP overrides b_s=%d, b_E=%d are below the coverage bounds (%d, %d)",
                    b_s, b_e, b_s_bound, b_e_bound)

    subsets = balance_subsampling(d_train, cfg.p_subset, n_min_draw, b_s, derive_seed(seed, "subsets"))
    threshold = 0.5
    ensembles, histories, forced = [], [], []
    for s, subset in enumerate(subsets):
        members, probs, history = [], [], []
        first = None
        best = 0.0
        tries = 0
        attempt = 0
        n_inner = class_stats(subset).n_min
        while len(members) < b_e and tries < tries_budget(b_e, len(members)):
            inner_seed = derive_seed(seed, "inner", s, attempt)
            inner = balance_subsampling(subset, cfg.p_inner, n_inner, 1, inner_seed)[0]
            if observer is not None:
                observer(inner)
            model = train(learner.with_seed(derive_seed(seed, "model", s, attempt)), inner)
            attempt += 1
            p_test = model.predict_proba(d_test.X)
            score = _ensemble_score(probs + [p_test], d_test.y, cfg, threshold)
            if first is None:
                first = (model, p_test, score)
            if score > best:
                members.append(model)
                probs.append(p_test)
                history.append(score)
                best = score
                tries = 0
            else:
                tries += 1
        is_forced = not members
        if is_forced:
            # keep the first candidate so the ensemble can vote
            members, history = [first[0]], [first[2]]
        ensembles.append(members)
        histories.append(history)
        forced.append(is_forced)
    return IpipModel(ensembles, cfg, histories, b_s, b_e, d.n_features, threshold, forced)


def predict_ipip(m: IpipModel, rows) -> VoteTally:
    return m.vote(rows)
