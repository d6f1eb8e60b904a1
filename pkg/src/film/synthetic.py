"""Synthetic two-Gaussian binary datasets for demos and desk-scale checks."""

from __future__ import annotations

import numpy as np

from .dataset import Column, Dataset, round_half_up
from .seeding import make_rng


def two_gaussians(n: int = 2000, p_min: float = 0.15, n_features: int = 4, separation: float = 1.0,
                  seed: int = 0) -> Dataset:
    """Majority rows ~ N(0, I); minority rows are the same shifted along the diagonal.

    ``separation`` is the Euclidean distance between the class means.
    """
    rng = make_rng(seed)
    n_pos = round_half_up(n * p_min)
    shift = separation / np.sqrt(n_features)
    X = rng.standard_normal((n, n_features))
    X[:n_pos] += shift
    y = np.zeros(n, dtype=np.int8)
    y[:n_pos] = 1
    perm = rng.permutation(n)
    names = tuple(f"x{j}" for j in range(n_features))
    return Dataset(X[perm], y[perm], names, "pos", "neg", provenance=f"two_gaussians(seed={seed})",
                   columns=tuple(Column(c) for c in names))
