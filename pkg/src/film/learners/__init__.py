"""Base learners behind one train/predict contract, plus Kappa-driven grid search.

``LearnerSpec`` names the learner kind, its hyperparameters and a seed;
``train`` returns an immutable fitted model exposing ``predict_proba``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import DegenerateData, InvalidDataset, ValidationError
from ..seeding import derive_seed
from .forest import ForestModel, fit_forest, forest_from_json
from .logistic import LogisticModel, fit_logistic, logistic_from_json

KINDS = ("logistic", "random_forest")

DEFAULTS = {
    "logistic": {"max_iterations": 100, "convergence_tolerance": 1e-8, "l2_penalty": 0.0},
    "random_forest": {"n_trees": 100, "max_depth": 16, "min_leaf_size": 1,
                      "features_per_split": None, "bootstrap_fraction": 1.0},
}

MODEL_FORMAT = "film-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    params: Mapping = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValidationError(f"unknown {self.kind} hyperparameter(s): {sorted(unknown)}")
        merged = dict(DEFAULTS[self.kind])
        merged.update(self.params)
        for name, value in merged.items():
            if value is None:
                continue
            if value < 0 or (value == 0 and name != "l2_penalty"):
                raise ValidationError(f"hyperparameter {name} must be positive, got {value}")
        object.__setattr__(self, "params", merged)

    def with_params(self, **params) -> "LearnerSpec":
        merged = dict(self.params)
        merged.update(params)
        return LearnerSpec(self.kind, merged, self.seed)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(self.kind, self.params, seed)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "LearnerSpec":
        return cls(obj["kind"], obj.get("params", {}), int(obj.get("seed", 0)))


TrainedModel = LogisticModel | ForestModel


def fit_arrays(spec: LearnerSpec, X, y) -> TrainedModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise InvalidDataset(f"cannot train on X{X.shape} with {y.shape[0]} labels")
    if y.min() == y.max():
        raise DegenerateData("training labels are constant")
    if spec.kind == "logistic":
        return fit_logistic(spec, X, y)
    k = spec.params.get("features_per_split")
    if k is not None and k > X.shape[1]:
        raise ValidationError(f"features_per_split={k} exceeds the {X.shape[1]} available features")
    return fit_forest(spec, X, y)


def train(spec: LearnerSpec, d) -> TrainedModel:
    """Fit ``spec`` on a :class:`~film.dataset.Dataset`."""
    return fit_arrays(spec, d.X, d.y)


def predict_proba(model: TrainedModel, rows) -> np.ndarray:
    return model.predict_proba(rows)


def predict(model: TrainedModel, rows, threshold: float = 0.5) -> np.ndarray:
    return (model.predict_proba(rows) >= threshold).astype(np.int8)


# ---------------------------------------------------------------- persistence

def model_to_json(model: TrainedModel) -> dict:
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
            "spec": model.spec.to_json(), "state": model.state_json()}


def model_from_json(obj: dict) -> TrainedModel:
    if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_VERSION:
        raise ValidationError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
    spec = LearnerSpec.from_json(obj["spec"])
    if spec.kind == "logistic":
        return logistic_from_json(spec, obj["state"])
    return forest_from_json(spec, obj["state"])


def dumps(obj) -> str:
    """Canonical JSON text used for every persisted artifact."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(dumps(model_to_json(model)), encoding="utf-8")


def load_model(path) -> TrainedModel:
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- tuning

def default_grid(kind: str, n_features: int) -> dict:
    if kind == "logistic":
        return {"l2_penalty": [0.0, 1e-3, 1e-1]}
    return {"n_trees": [100], "max_depth": [8, 16], "min_leaf_size": [1, 5],
            "features_per_split": [math.ceil(math.sqrt(n_features))]}


def grid_points(grid: Mapping) -> list[dict]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValidationError("hyperparameter grid must be non-empty")
    names = list(grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


def grid_search(kind: str, grid: Mapping, d, k: int = 5, seed: int = 0,
                base: LearnerSpec | None = None):
    """Pick the grid point with the highest mean stratified-CV Cohen's Kappa.

    Returns ``(best_spec, table)`` where ``table`` lists ``(params, mean_kappa)``
    in cross-product order; ties keep the earliest point.
    """
    from ..dataset import stratified_kfold
    from ..metrics import confusion, threshold_metrics

    base = base or LearnerSpec(kind, seed=seed)
    folds = stratified_kfold(d, k, derive_seed(seed, "grid-folds"))
    table = []
    best, best_score = None, -math.inf
    for i, point in enumerate(grid_points(grid)):
        kappas = []
        for f, split in enumerate(folds):
            spec = base.with_params(**point).with_seed(derive_seed(seed, "grid", i, f))
            model = train(spec, split.train)
            cm = confusion(predict(model, split.test.X), split.test.y)
            kappas.append(threshold_metrics(cm).kappa)
        score = float(np.mean(kappas))
        table.append((point, score))
        if score > best_score:
            best, best_score = point, score
    return base.with_params(**best), table
