"""Random forest of CART trees with Gini splits.

Trees are stored as flat node arrays. Tree ``t`` draws its bootstrap sample
and feature subsets from a seed derived from ``(seed, t)``, so the first ``n``
trees of a larger forest are identical to an ``n``-tree forest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import WidthMismatch
from ..seeding import derive_seed, make_rng

LEAF = -1


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # positive-class frequency
    depth: int

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        return _apply(self.feature, self.threshold, self.left, self.right,
                      np.ascontiguousarray(X, dtype=np.float64))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(v) for v in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
            "depth": self.depth,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Tree":
        return cls(
            np.array(obj["feature"], dtype=np.int64),
            np.array(obj["threshold"], dtype=np.float64),
            np.array(obj["left"], dtype=np.int64),
            np.array(obj["right"], dtype=np.int64),
            np.array(obj["value"], dtype=np.float64),
            int(obj["depth"]),
        )


@njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def _splitmix(state):
    z = state[0] + np.uint64(0x9E3779B97F4A7C15)
    state[0] = z
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _grow(X, y, max_depth, min_leaf, n_split_features, rng_state):
    """Grow one CART tree depth-first; returns the flat node arrays and the depth reached.

    At each node a random subset of ``n_split_features`` columns is searched
    for the split minimizing ``sum(pos*neg/size)`` over the two children (the
    size-weighted Gini). Nodes stop at ``max_depth``, when pure, when they
    cannot hold two leaves of ``min_leaf`` rows, or when no split lowers the
    impurity.
    """
    n, p = X.shape
    cap = 2 * n - 1
    if max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1) - 1)
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)

    samples = np.arange(n)
    cols = np.arange(p)
    vals = np.empty(n)
    stack = np.empty((cap, 4), dtype=np.int64)  # node, start, end, depth
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, 0, n, 0
    top = 1
    n_nodes = 1
    depth_seen = 0
    pos_total = 0
    for i in range(n):
        pos_total += y[i]
    value[0] = pos_total / n

    while top > 0:
        top -= 1
        node, start, end, depth = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        if depth > depth_seen:
            depth_seen = depth
        m = end - start
        pos = 0
        for i in range(start, end):
            pos += y[samples[i]]
        if depth >= max_depth or pos == 0 or pos == m or m < 2 * min_leaf:
            continue
        # partial Fisher-Yates: the first n_split_features entries of cols
        for a in range(n_split_features):
            b = a + np.int64(_splitmix(rng_state) % np.uint64(p - a))
            cols[a], cols[b] = cols[b], cols[a]
        best = np.inf
        best_f = -1
        best_thr = 0.0
        for c in range(n_split_features):
            f = cols[c]
            for i in range(m):
                vals[i] = X[samples[start + i], f]
            order = np.argsort(vals[:m])
            cum = 0
            for r in range(m - 1):
                cum += y[samples[start + order[r]]]
                lo = vals[order[r]]
                hi = vals[order[r + 1]]
                if not lo < hi:
                    continue
                nl = r + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                pr = pos - cum
                score = cum * (nl - cum) / nl + pr * (nr - pr) / nr
                if score < best:
                    best = score
                    best_f = f
                    thr = lo + (hi - lo) / 2.0
                    if not (lo <= thr and thr < hi):
                        thr = lo
                    best_thr = thr
        if best_f < 0 or best >= pos * (m - pos) / m - 1e-12:
            continue
        # partition samples[start:end] around the threshold
        i, j = start, end - 1
        while i <= j:
            if X[samples[i], best_f] <= best_thr:
                i += 1
            else:
                samples[i], samples[j] = samples[j], samples[i]
                j -= 1
        mid = i
        lnode, rnode = n_nodes, n_nodes + 1
        n_nodes += 2
        feature[node], threshold[node] = best_f, best_thr
        left[node], right[node] = lnode, rnode
        lpos = 0
        for k in range(start, mid):
            lpos += y[samples[k]]
        value[lnode] = lpos / (mid - start)
        value[rnode] = (pos - lpos) / (end - mid)
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = rnode, mid, end, depth + 1
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = lnode, start, mid, depth + 1
        top += 1
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes], depth_seen


def build_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, max_depth: int,
               min_leaf: int, n_split_features: int) -> Tree:
    state = np.array([rng.integers(0, 2 ** 63)], dtype=np.uint64)
    out = _grow(np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(y, dtype=np.int64),
                int(max_depth), int(min_leaf), int(n_split_features), state)
    return Tree(*(a.copy() for a in out[:5]), int(out[5]))


@dataclass(frozen=True, eq=False)
class ForestModel:
    spec: object
    trees: tuple[Tree, ...]
    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise WidthMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        X = np.ascontiguousarray(X)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.value[_apply(tree.feature, tree.threshold, tree.left, tree.right, X)]
        return total / len(self.trees)

    def state_json(self) -> dict:
        return {"n_features": self.n_features, "trees": [t.to_json() for t in self.trees]}


def split_features(hp: dict, p: int) -> int:
    k = hp.get("features_per_split")
    if k is None:
        k = math.ceil(math.sqrt(p))
    return max(1, min(int(k), p))


def fit_forest(spec, X: np.ndarray, y: np.ndarray) -> ForestModel:
    hp = spec.params
    n_trees = int(hp["n_trees"])
    max_depth = int(hp["max_depth"])
    min_leaf = int(hp["min_leaf_size"])
    frac = float(hp["bootstrap_fraction"])
    k = split_features(hp, X.shape[1])
    n = X.shape[0]
    n_boot = max(1, int(round(frac * n)))
    y = y.astype(np.int64)
    trees = []
    for t in range(n_trees):
        rng = make_rng(derive_seed(spec.seed, "tree", t))
        boot = rng.integers(0, n, size=n_boot)
        trees.append(build_tree(X[boot], y[boot], rng, max_depth, min_leaf, k))
    return ForestModel(spec, tuple(trees), X.shape[1])


def forest_from_json(spec, state: dict) -> ForestModel:
    return ForestModel(spec, tuple(Tree.from_json(t) for t in state["trees"]), int(state["n_features"]))
