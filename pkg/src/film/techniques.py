"""One entry point for every imbalance-aware approach compared by experiments.

Each fitted technique exposes ``predict`` (hard labels) and ``predict_proba``
(a ranking score used for the curve metrics).
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, class_stats
from .errors import ValidationError
from .ipip import IpipConfig, train_ipip
from .learners import LearnerSpec, train
from .resampling import downsample, smote, under_bagging, upsample
from .seeding import derive_seed

TECHNIQUES = ("none", "upsample", "downsample", "smote", "under_bagging", "ipip")


class SingleModel:
    def __init__(self, model, threshold: float = 0.5):
        self.model = model
        self.threshold = threshold

    def predict_proba(self, X) -> np.ndarray:
        return self.model.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return (self.model.predict_proba(X) >= self.threshold).astype(np.int8)


def fit_technique(kind: str, learner: LearnerSpec, d: Dataset, seed: int,
                  params: dict | None = None, ipip_config: IpipConfig | None = None):
    params = params or {}
    model_seed = derive_seed(seed, "model")
    data_seed = derive_seed(seed, "data")
    if kind == "none":
        return SingleModel(train(learner.with_seed(model_seed), d))
    if kind == "upsample":
        return SingleModel(train(learner.with_seed(model_seed), upsample(d, data_seed)))
    if kind == "downsample":
        return SingleModel(train(learner.with_seed(model_seed), downsample(d, data_seed)))
    if kind == "smote":
        k = min(int(params.get("k_neighbors", 5)), class_stats(d).n_min - 1)
        resampled = smote(d, k_neighbors=k, oversample_ratio=params.get("oversample_ratio"), seed=data_seed)
        return SingleModel(train(learner.with_seed(model_seed), resampled))
    if kind == "under_bagging":
        return under_bagging(d, int(params.get("n_bags", 10)), learner, seed)
    if kind == "ipip":
        return train_ipip(d, learner, ipip_config or IpipConfig(), seed)
    raise ValidationError(f"unknown technique {kind!r}; expected one of {TECHNIQUES}")
