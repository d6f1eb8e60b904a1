import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset, write_text
from film.dataset import class_stats, from_arrays, load_csv
from film.errors import BadCounts, TooFewMinority, ValidationError
from film.learners import LearnerSpec, train
from film.resampling import (
    IaaSpec,
    UnderBaggingModel,
    balance_subsampling,
    downsample,
    majority_draw_count,
    smote,
    smote_samples,
    under_bagging,
    upsample,
)
from film.seeding import derive_seed


def source_rows(d):
    return {tuple(r) + (int(c),) for r, c in zip(d.X.tolist(), d.y)}


# ---------------------------------------------------------------- up/down

def test_upsample_counts_and_membership():
    d = make_dataset(10, 40)
    out = upsample(d, seed=1)
    assert (out.n_pos, out.n_neg) == (40, 40)
    assert source_rows(out) <= source_rows(d)
    # majority untouched
    assert np.array_equal(np.sort(out.row_ids[out.y == 0]), np.sort(d.row_ids[d.y == 0]))


def test_upsample_balanced_identity():
    d = make_dataset(20, 20)
    assert upsample(d, 0) is d and downsample(d, 0) is d


def test_upsample_single_positive():
    d = make_dataset(1, 5)
    out = upsample(d, 3)
    pos = out.row_ids[out.y == 1]
    assert pos.tolist() == [d.row_ids[d.y == 1][0]] * 5


def test_downsample_counts_and_membership():
    d = make_dataset(10, 40)
    out = downsample(d, seed=1)
    assert (out.n_pos, out.n_neg) == (10, 10)
    assert len(set(out.row_ids.tolist())) == 20
    assert set(out.row_ids.tolist()) <= set(d.row_ids.tolist())


def test_downsample_single_minority():
    out = downsample(make_dataset(1, 9), seed=0)
    assert (out.n_pos, out.n_neg) == (1, 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 80), st.integers(0, 2**32))
def test_up_down_properties(a, b, seed):
    d = make_dataset(a, b)
    for f in (upsample, downsample):
        out = f(d, seed)
        s = class_stats(out)
        assert s.n_min == s.n_maj
        assert set(out.row_ids.tolist()) <= set(d.row_ids.tolist())
        assert np.array_equal(out.X, d.X[out.row_ids])
        assert np.array_equal(f(d, seed).row_ids, out.row_ids)


# ---------------------------------------------------------------- smote

class ZeroLambda:
    """Generator wrapper that forces lam = 0."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def permutation(self, m):
        return self.rng.permutation(m)

    def integers(self, *a, **kw):
        return self.rng.integers(*a, **kw)

    def random(self, n):
        return np.zeros(n)


def test_smote_lambda_zero_returns_seed_point():
    X_min = np.array([[0.0, 0.0], [1.0, 1.0]])
    X_new, trace = smote_samples(X_min, 1, 6, ZeroLambda(0))
    assert np.array_equal(X_new, X_min[trace.base])


def test_smote_on_segment():
    d = from_arrays(np.array([[0, 0], [1, 1], [5, 0], [6, 1], [5, 2], [7, 7]]), [1, 1, 0, 0, 0, 0])
    out = smote(d, k_neighbors=1, seed=4)
    synth = out.X[out.row_ids == -1]
    assert synth.shape == (2, 2)
    assert np.all(synth[:, 0] == synth[:, 1])
    assert np.all((synth >= 0) & (synth <= 1))
    assert (out.n_pos, out.n_neg) == (4, 4)


def test_smote_too_few():
    with pytest.raises(TooFewMinority):
        smote(make_dataset(1, 10), k_neighbors=1)


def test_smote_k_too_large():
    with pytest.raises(ValidationError):
        smote(make_dataset(3, 10), k_neighbors=3)


def test_smote_ratio():
    out = smote(make_dataset(10, 100), k_neighbors=3, oversample_ratio=2.0, seed=0)
    assert (out.row_ids == -1).sum() == 20


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 25), st.integers(30, 80), st.integers(1, 5), st.integers(0, 2**32))
def test_smote_geometry(n_pos, n_neg, k, seed):
    k = min(k, n_pos - 1)
    d = make_dataset(n_pos, n_neg, n_features=3, seed=seed % 1000)
    X_min = d.X[d.y == 1]
    X_new, tr = smote_samples(X_min, k, 50, np.random.default_rng(seed))
    lo, hi = X_min.min(axis=0), X_min.max(axis=0)
    assert np.all(X_new >= lo - 1e-12) and np.all(X_new <= hi + 1e-12)
    recon = X_min[tr.base] + tr.lam[:, None] * (X_min[tr.neighbor] - X_min[tr.base])
    assert np.allclose(recon, X_new, atol=0)
    assert np.all((tr.lam >= 0) & (tr.lam <= 1))
    # every neighbour is among the k nearest by brute force
    dist = np.linalg.norm(X_min[:, None] - X_min[None], axis=2)
    np.fill_diagonal(dist, np.inf)
    kth = np.sort(dist, axis=1)[:, k - 1]
    assert np.all(dist[tr.base, tr.neighbor] <= kth[tr.base] + 1e-12)


def test_smote_snaps_one_hot(tmp_path):
    rows = ["num,color,class"]
    colors = ["red", "blue", "green"]
    for i in range(12):
        rows.append(f"{i},{colors[i % 3]},{'b' if i < 5 else 'a'}")
    rows += [f"{i},red,a" for i in range(20, 40)]
    d = load_csv(write_text(tmp_path / "c.csv", "\n".join(rows) + "\n"), "class", positive_label="b")
    out = smote(d, k_neighbors=2, seed=0)
    block = out.X[out.row_ids == -1][:, d.onehot_groups()[0]]
    assert block.shape[0] > 0
    assert np.all(block.sum(axis=1) == 1) and set(np.unique(block)) <= {0.0, 1.0}


def test_iaa_spec_validation():
    with pytest.raises(ValidationError):
        IaaSpec("rose")
    with pytest.raises(ValidationError):
        IaaSpec("smote", {"k_neighbors": 0})
    with pytest.raises(ValidationError):
        IaaSpec("under_bagging", {"n_bags": 0})


# ---------------------------------------------------------------- under bagging

class Fixed:
    def __init__(self, p):
        self.p = np.asarray(p, dtype=float)

    def predict_proba(self, X):
        return self.p


def test_under_bagging_single_bag(blobs):
    spec = LearnerSpec("logistic")
    m = under_bagging(blobs, 1, spec, seed=9)
    bag = downsample(blobs, derive_seed(9, "bag", 0))
    single = train(spec.with_seed(derive_seed(9, "bag-model", 0)), bag)
    assert np.array_equal(m.predict_proba(blobs.X), single.predict_proba(blobs.X))
    assert np.array_equal(m.predict(blobs.X), (single.predict_proba(blobs.X) >= 0.5).astype(np.int8))


def test_under_bagging_vote_and_mean():
    m = UnderBaggingModel([Fixed([0.2]), Fixed([0.4]), Fixed([0.9])])
    assert m.predict_proba(None)[0] == pytest.approx(0.5, abs=1e-15)
    m = UnderBaggingModel([Fixed([0.8]), Fixed([0.7]), Fixed([0.1])])
    assert m.predict(None).tolist() == [1]


def test_under_bagging_deterministic(blobs):
    spec = LearnerSpec("random_forest", {"n_trees": 5, "max_depth": 3})
    a, b = under_bagging(blobs, 3, spec, 2), under_bagging(blobs, 3, spec, 2)
    assert a.dumps() == b.dumps()
    assert UnderBaggingModel.from_json(a.to_json()).dumps() == a.dumps()


# ---------------------------------------------------------------- balance subsampling

def test_majority_draw_counts():
    assert majority_draw_count(75, 0.45) == 92
    assert majority_draw_count(40, 0.5) == 40


def test_balance_subsampling_counts():
    d = make_dataset(100, 400)
    subs = balance_subsampling(d, 0.45, 75, 4, seed=0)
    assert len(subs) == 4
    for s in subs:
        assert (s.n_pos, s.n_neg) == (75, 92)
        assert abs(s.n_pos / s.n - 0.45) <= 1 / s.n


def test_balance_subsampling_bad_counts():
    d = make_dataset(10, 40)
    for args in ((0.45, 11, 2), (0.0, 5, 2), (0.6, 5, 2), (0.45, 5, 0)):
        with pytest.raises(BadCounts):
            balance_subsampling(d, *args, seed=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(60, 200), st.floats(0.05, 0.5), st.integers(0, 2**32))
def test_balance_subsampling_properties(n_pos, n_neg, p, seed):
    d = make_dataset(n_pos, n_neg)
    n_draw = max(1, n_pos // 2)
    subs = balance_subsampling(d, p, n_draw, 3, seed)
    for s in subs:
        assert abs(s.n_pos / s.n - p) <= 1 / s.n + 1e-12
        assert set(s.row_ids.tolist()) <= set(d.row_ids.tolist())
    again = balance_subsampling(d, p, n_draw, 3, seed)
    assert all(np.array_equal(a.row_ids, b.row_ids) for a, b in zip(subs, again))
    # subset i does not depend on how many subsets were asked for
    assert np.array_equal(balance_subsampling(d, p, n_draw, 1, seed)[0].row_ids, subs[0].row_ids)
