import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset, write_text
from film.dataset import (
    Column,
    class_stats,
    ir_from_p_min,
    load_csv,
    load_features,
    p_min_from_ir,
    proportion_grid,
    resample_to_proportion,
    stratified_holdout,
    stratified_kfold,
)
from film.errors import (
    BadN,
    ClassTooSmall,
    EmptyAfterCleaning,
    MissingTargetColumn,
    NotBinaryTarget,
    NotImbalanced,
    WidthMismatch,
)


# ---------------------------------------------------------------- load_csv

def test_load_csv_four_rows(tmp_path):
    p = write_text(tmp_path / "d.csv", "x,y,class\n1,2,a\n3,4,a\n5,6,a\n7,8,b\n")
    d = load_csv(p, "class", positive_label="b")
    s = class_stats(d)
    assert d.n == 4
    assert (s.n_min, s.n_maj) == (1, 3)
    assert d.y.tolist() == [0, 0, 0, 1]


def test_load_csv_three_labels(tmp_path):
    p = write_text(tmp_path / "d.csv", "x,class\n1,a\n2,b\n3,c\n")
    with pytest.raises(NotBinaryTarget):
        load_csv(p, "class")


def test_load_csv_missing_target(tmp_path):
    p = write_text(tmp_path / "d.csv", "x,class\n1,a\n2,b\n")
    with pytest.raises(MissingTargetColumn):
        load_csv(p, "label")


def test_load_csv_one_hot(tmp_path):
    p = write_text(tmp_path / "d.csv", "num,color,class\n1,red,a\n2,blue,b\n3,green,a\n4,red,a\n")
    d = load_csv(p, "class")
    assert d.feature_names == ("num", "color=blue", "color=green", "color=red")
    assert d.X.tolist() == [[1, 0, 0, 1], [2, 1, 0, 0], [3, 0, 1, 0], [4, 0, 0, 1]]
    assert d.onehot_groups() == [[1, 2, 3]]
    # minority label b is positive by default
    assert d.positive_label == "b" and d.y.tolist() == [0, 1, 0, 0]


def test_load_csv_drops_missing_rows(tmp_path):
    p = write_text(tmp_path / "d.csv", "x,class\n1,a\n,b\nNA,a\n4,b\n5,a\n")
    d = load_csv(p, "class")
    assert d.n == 3 and d.n_dropped == 2
    assert d.summary()["rows_dropped"] == 2


def test_load_csv_all_missing(tmp_path):
    p = write_text(tmp_path / "d.csv", "x,class\n,a\n?,b\n")
    with pytest.raises(EmptyAfterCleaning):
        load_csv(p, "class")


def test_load_features_width_mismatch(tmp_path):
    p = write_text(tmp_path / "d.csv", "x,z,class\n1,2,a\n")
    with pytest.raises(WidthMismatch):
        load_features(p, [Column("x")], "class")


# ---------------------------------------------------------------- class stats

@pytest.mark.parametrize("n_pos,n_neg,ir,p", [(50, 50, 1.0, 0.5), (100, 300, 3.0, 0.25)])
def test_class_stats(n_pos, n_neg, ir, p):
    s = class_stats(make_dataset(n_pos, n_neg))
    assert s.ir == pytest.approx(ir, abs=1e-12)
    assert s.p_min == pytest.approx(p, abs=1e-12)


def test_sms_ir_to_p_min():
    # IR 75.34 is the imbalance of a published SMS spam corpus
    assert p_min_from_ir(75.34) == pytest.approx(1 / 76.34, abs=1e-15)
    assert abs(p_min_from_ir(75.34) - 0.013099) < 1e-6


@given(st.integers(1, 500), st.integers(0, 500))
def test_ir_round_trip(n_min, extra):
    n_maj = n_min + extra
    ir = n_maj / n_min
    p = p_min_from_ir(ir)
    assert abs(p - n_min / (n_min + n_maj)) < 1e-12
    assert abs(ir_from_p_min(p) - ir) < 1e-12 * max(1.0, ir)


# ---------------------------------------------------------------- splits

def test_holdout_counts():
    d = make_dataset(100, 300)
    split = stratified_holdout(d, 0.75, seed=1)
    assert (split.train.n_pos, split.train.n_neg) == (75, 225)
    assert (split.test.n_pos, split.test.n_neg) == (25, 75)
    ids = np.r_[split.train.row_ids, split.test.row_ids]
    assert sorted(ids.tolist()) == list(range(400))


def test_holdout_class_too_small():
    with pytest.raises(ClassTooSmall):
        stratified_holdout(make_dataset(1, 10), 0.75, seed=0)


def test_holdout_deterministic():
    d = make_dataset(30, 70)
    a, b = stratified_holdout(d, 0.6, 5), stratified_holdout(d, 0.6, 5)
    assert np.array_equal(a.train.row_ids, b.train.row_ids)


def test_kfold_counts():
    folds = stratified_kfold(make_dataset(10, 40), 5, seed=3)
    for f in folds:
        assert (f.test.n_pos, f.test.n_neg) == (2, 8)
    test_ids = np.concatenate([f.test.row_ids for f in folds])
    assert sorted(test_ids.tolist()) == list(range(50))


def test_kfold_balanced_four_rows():
    for f in stratified_kfold(make_dataset(2, 2), 2, seed=0):
        assert (f.test.n_pos, f.test.n_neg) == (1, 1)


def test_kfold_too_many_folds():
    with pytest.raises(ClassTooSmall):
        stratified_kfold(make_dataset(3, 30), 4, seed=0)


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 60), st.integers(2, 200), st.integers(2, 6), st.floats(0.1, 0.9), st.integers(0, 2**32))
def test_stratification_bound(a, b, k, p_hold, seed):
    d = make_dataset(a, b)
    n_min = class_stats(d).n_min
    p = class_stats(d).p_min
    parts = []
    if n_min >= k:
        parts += [s.test for s in stratified_kfold(d, k, seed)] + [s.train for s in stratified_kfold(d, k, seed)]
    try:
        split = stratified_holdout(d, p_hold, seed)
        parts += [split.train, split.test]
    except ClassTooSmall:
        pass
    for part in parts:
        # parts smaller than n_min cannot always meet the bound under
        # per-class rounding; see the counterexample below
        if part.n >= n_min:
            assert abs(class_stats(part).p_min - p) <= 1 / n_min + 1e-12


def test_stratification_small_part_counterexample():
    # 60 pos + 59 neg in 5 folds: per-class counts force a 12+11 fold, and
    # |11/23 - 59/119| exceeds 1/59
    d = make_dataset(60, 59)
    odd = [s.test for s in stratified_kfold(d, 5, 0) if s.test.n == 23]
    assert len(odd) == 1
    assert abs(class_stats(odd[0]).p_min - 59 / 119) > 1 / 59


# ---------------------------------------------------------------- resampling to a proportion

def test_resample_raises_proportion():
    out = resample_to_proportion(make_dataset(100, 900), 0.2, seed=0)
    assert (out.n_pos, out.n_neg) == (100, 400)


def test_resample_identity():
    d = make_dataset(100, 900)
    out = resample_to_proportion(d, 0.1, seed=0)
    assert np.array_equal(out.row_ids, d.row_ids)


def test_resample_rounding():
    d = make_dataset(2, 1000)
    out = resample_to_proportion(d, 0.45, seed=0)
    # round(2 * 0.55 / 0.45) = 2 majority rows kept
    assert (out.n_pos, out.n_neg) == (2, 2)
    assert abs(class_stats(out).p_min - 0.45) <= 1 / out.n


@settings(max_examples=100, deadline=None)
@given(st.integers(5, 80), st.integers(100, 400), st.floats(0.02, 0.45), st.integers(0, 2**32))
def test_resample_properties(n_pos, n_neg, p_target, seed):
    d = make_dataset(n_pos, n_neg)
    out = resample_to_proportion(d, p_target, seed)
    ids = out.row_ids
    assert len(set(ids.tolist())) == ids.size  # no duplicates
    assert set(ids.tolist()) <= set(d.row_ids.tolist())
    assert np.array_equal(out.X, d.X[ids])
    assert abs(class_stats(out).p_min - p_target) <= 1 / out.n + 1e-12
    assert np.array_equal(resample_to_proportion(d, p_target, seed).row_ids, ids)


# ---------------------------------------------------------------- grid

def test_grid_above_floor():
    g = proportion_grid(0.2, 6)
    assert np.allclose(g.targets, [0.05, 0.10, 0.15, 0.8 / 3, 1 / 3, 0.4], atol=1e-12)


def test_grid_below_floor():
    g = proportion_grid(0.03, 6)
    assert np.allclose(g.targets, np.linspace(0.03, 0.4, 7)[1:], atol=0)


def test_grid_not_imbalanced():
    with pytest.raises(NotImbalanced):
        proportion_grid(0.45)


@pytest.mark.parametrize("n", [5, 4, 7])
def test_grid_bad_n(n):
    with pytest.raises(BadN):
        proportion_grid(0.2, n)


@given(st.floats(0.001, 0.399), st.sampled_from([6, 8, 10, 12]))
def test_grid_properties(p_d, n):
    g = proportion_grid(p_d, n)
    assert g.n == n
    assert p_d not in g.targets
    assert all(b > a for a, b in zip(g.targets, g.targets[1:]))
    assert len(set(g.with_original())) == n + 1
    assert math.isclose(g.targets[-1], 0.4)
