import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from visa_skill.evalkit import (
    UndefinedCorrelationError,
    fisher_z_average,
    format_report,
    mae,
    make_splits,
    parse_report,
    parse_scheme,
    spearman,
)


def test_spearman_identity_and_reverse():
    xs = [0.1, 2.0, 3.5, 9.0]
    assert spearman(xs, [1, 2, 3, 4]) == 1.0
    assert spearman(xs, [4, 3, 2, 1]) == -1.0


def test_spearman_hand_value():
    assert spearman((1, 2, 3, 4), (1, 3, 2, 4)) == 0.8


def test_spearman_constant_input():
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 2, 3], [5, 5, 5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=3, max_size=12))
def test_spearman_matches_scipy_with_ties(pairs):
    xs, ys = zip(*pairs)
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        with pytest.raises(UndefinedCorrelationError):
            spearman(xs, ys)
        return
    assert spearman(xs, ys) == pytest.approx(stats.spearmanr(xs, ys).statistic, abs=1e-12)


def test_mae_examples():
    assert mae([1, 2, 3], [1, 2, 3]) == 0.0
    assert mae((1, 3), (2, 5)) == 1.5


def test_fisher_z_examples():
    assert fisher_z_average([0.37, 0.37, 0.37]) == pytest.approx(0.37, abs=1e-15)
    assert fisher_z_average((0.0, 0.761594)) == pytest.approx(0.462117, abs=1e-5)
    assert fisher_z_average((0.0, math.tanh(1.0))) == pytest.approx(math.tanh(0.5), abs=1e-15)


def test_fisher_z_boundary():
    with pytest.raises(ValueError):
        fisher_z_average([1.0, 0.5])
    assert fisher_z_average([1.0, 0.5], strict=False) == 1.0
    with pytest.raises(ValueError):
        fisher_z_average([1.0, -1.0], strict=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=8))
def test_fisher_z_within_range(rhos):
    z = fisher_z_average(rhos)
    assert min(rhos) - 1e-12 <= z <= max(rhos) + 1e-12


def manifest(users, trials):
    return [{"user_id": u, "supertrial_id": r} for u in range(users) for r in range(trials)]


def test_kfold_sizes():
    split = make_splits(manifest(2, 4), "kfold:4", seed=0)
    assert sorted(Counter(split.folds).values()) == [2, 2, 2, 2]


def test_louo():
    split = make_splits(manifest(4, 5), "louo")
    assert split.n_folds == 4
    for f in range(4):
        assert len(split.fold_members(f)) == 5
        assert {i // 5 for i in split.fold_members(f)} == {f}


def test_loso():
    split = make_splits(manifest(4, 5), "loso")
    assert split.n_folds == 5
    assert all(len(split.fold_members(f)) == 4 for f in range(5))


def test_kfold_deterministic():
    assert make_splits(manifest(3, 7), "kfold:4", 9) == make_splits(manifest(3, 7), "kfold:4", 9)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(2, 5), st.integers(0, 1000))
def test_splits_are_partitions(users, trials, k, seed):
    m = manifest(users, trials)
    k = min(k, len(m))
    for scheme in ("louo", "loso", f"kfold:{k}"):
        split = make_splits(m, scheme, seed)
        members = [split.fold_members(f) for f in range(split.n_folds)]
        flat = sorted(i for block in members for i in block)
        assert flat == list(range(len(m)))
        for f in range(split.n_folds):
            assert set(split.train_members(f)).isdisjoint(split.fold_members(f))
    sizes = Counter(make_splits(m, f"kfold:{k}", seed).folds).values()
    assert max(sizes) - min(sizes) <= 1
    assert make_splits(m, "louo").n_folds == users
    assert make_splits(m, "loso").n_folds == trials


def test_scheme_parsing():
    assert parse_scheme("LOUO") == ("louo", None)
    assert parse_scheme("kfold:5") == ("kfold", 5)
    with pytest.raises(ValueError):
        parse_scheme("bootstrap")
    with pytest.raises(ValueError):
        parse_scheme("kfold:1")
    with pytest.raises(ValueError):
        make_splits(manifest(1, 3), "kfold:4")


def test_report_roundtrip():
    text = format_report([(0.5, 1.25), (0.2, 2.0)])
    parsed = parse_report(text)
    assert parsed["folds"] == [(0, 0.5, 1.25), (1, 0.2, 2.0)]
    agg_corr, agg_mae = parsed["aggregate"]
    assert agg_corr == pytest.approx(fisher_z_average([0.5, 0.2]), abs=1e-6)
    assert agg_mae == pytest.approx(1.625)
