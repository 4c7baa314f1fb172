from __future__ import annotations

import logging

import numpy as np
import pytest

from conftest import random_feature
from vocab_squeeze.allocator import (
    BudgetError,
    allocate_global_submodular,
    allocate_mi_proportional,
    allocate_uniform,
    average_mi_loss,
    feature_rankings,
)
from vocab_squeeze.boundary_index import BoundaryIndex
from vocab_squeeze.greedy import GreedyConfig, classic_greedy
from vocab_squeeze.ingest import SortedFeature
from vocab_squeeze.mi import evaluate_partition, mutual_information


def _feat(rng, n, name, **kw):
    f = random_feature(rng, n, **kw)
    return SortedFeature.from_probabilities(f.p_x, f.cond, name=name)


def _const(n, name):
    return SortedFeature.from_probabilities(np.full(n, 1 / n), np.full(n, 0.3), name=name)


def test_uniform_even_split(rng):
    feats = [_feat(rng, 50, f"f{i}") for i in range(4)]
    assert allocate_uniform(feats, 40) == {f"f{i}": 10 for i in range(4)}


def test_uniform_remainder_to_largest_vocab(rng):
    feats = [_feat(rng, 20, "a"), _feat(rng, 30, "b"), _feat(rng, 25, "c")]
    assert allocate_uniform(feats, 10) == {"a": 3, "b": 4, "c": 3}


def test_uniform_clamps_small_vocab(rng):
    feats = [_feat(rng, 3, "tiny")] + [_feat(rng, 50, f"f{i}") for i in range(3)]
    alloc = allocate_uniform(feats, 40)
    assert alloc["tiny"] == 3
    assert sum(alloc.values()) == 40
    assert sorted(alloc[f"f{i}"] for i in range(3)) == [12, 12, 13]


def test_budget_conservation(rng):
    for _ in range(50):
        feats = [_feat(rng, int(rng.integers(2, 30)), f"f{i}") for i in range(int(rng.integers(1, 6)))]
        total = int(rng.integers(len(feats), 120))
        cap = sum(f.n for f in feats)
        for alloc in (allocate_uniform(feats, total), allocate_mi_proportional(feats, total)):
            assert sum(alloc.values()) == min(total, cap)
            assert all(1 <= alloc[f.name] <= f.n for f in feats)


def test_budget_below_feature_count(rng):
    feats = [_feat(rng, 5, "a"), _feat(rng, 5, "b")]
    with pytest.raises(BudgetError):
        allocate_uniform(feats, 1)
    with pytest.raises(BudgetError):
        allocate_global_submodular(feats, 1)


def test_mi_proportional_ratio(rng):
    feats = [_feat(rng, 50, "a"), _feat(rng, 50, "b")]
    assert allocate_mi_proportional(feats, 8, mi=[0.3, 0.1]) == {"a": 6, "b": 2}


def test_mi_equal_is_uniform(rng):
    feats = [_feat(rng, 50, f"f{i}") for i in range(3)]
    assert allocate_mi_proportional(feats, 10, mi=[0.2] * 3) == allocate_uniform(feats, 10)


def test_mi_zero_falls_back(caplog):
    feats = [_const(10, "a"), _const(12, "b")]
    with caplog.at_level(logging.WARNING):
        alloc = allocate_mi_proportional(feats, 7)
    assert "falling back" in caplog.text
    assert alloc == allocate_uniform(feats, 7)


def test_average_loss_examples():
    assert average_mi_loss([0.4, 0.1], [0.4, 0.1]) == 0.0
    assert average_mi_loss([0.4, 0.1], [0.0, 0.0]) == 1.0
    assert average_mi_loss([0.4, 0.1], [0.3, 0.1]) == pytest.approx(0.2, abs=1e-15)
    with pytest.raises(ValueError):
        average_mi_loss([0.0], [0.0])


def test_global_single_feature_is_classic(rng):
    feat = _feat(rng, 80, "a")
    chosen, report = allocate_global_submodular([feat], 12)
    ref = classic_greedy(BoundaryIndex.build(feat), GreedyConfig(12, mode="classic"))
    np.testing.assert_array_equal(chosen["a"], ref.boundaries)
    assert report.features[0].mi_after == pytest.approx(ref.objective, abs=1e-12)


def test_global_identical_features_split_evenly(rng):
    f = random_feature(rng, 40)
    a = SortedFeature.from_probabilities(f.p_x, f.cond, name="a")
    b = SortedFeature.from_probabilities(f.p_x, f.cond, name="b")
    chosen, report = allocate_global_submodular([a, b], 20)
    assert chosen["a"].size == chosen["b"].size == 9
    assert report.allocated == 20


def test_global_skips_uninformative_feature(rng):
    a = _const(30, "a")
    b = _feat(rng, 30, "b")
    chosen, report = allocate_global_submodular([a, b], 8)
    assert chosen["a"].size == 0 and chosen["b"].size == 6
    assert report.by_name()["a"].m == 1


def test_global_report_and_loss_bounds(rng):
    for _ in range(20):
        feats = [_feat(rng, int(rng.integers(2, 40)), f"f{i}") for i in range(4)]
        total = int(rng.integers(4, 60))
        chosen, report = allocate_global_submodular(feats, total)
        assert report.allocated == min(total, sum(f.n for f in feats))
        for f in feats:
            r = report.by_name()[f.name]
            assert r.mi_before == pytest.approx(mutual_information(f), abs=1e-15)
            assert r.mi_after == pytest.approx(evaluate_partition(f, chosen[f.name].tolist()), abs=1e-15)
        assert -1e-12 <= report.avg_mi_loss <= 1 + 1e-12


def test_global_beats_uniform_on_average(rng):
    diffs = []
    for _ in range(50):
        feats = [_feat(rng, int(rng.integers(5, 60)), f"f{i}", counts=True) for i in range(4)]
        total = int(rng.integers(8, 40))
        _, report = allocate_global_submodular(feats, total)
        uni = allocate_uniform(feats, total)
        before, after = [], []
        for f in feats:
            res = classic_greedy(BoundaryIndex.build(f), GreedyConfig(uni[f.name], mode="classic"))
            before.append(mutual_information(f))
            after.append(res.objective)
        diffs.append(average_mi_loss(before, after) - report.avg_mi_loss)
    assert np.mean(diffs) >= -1e-12


def test_rankings_parallel_equal_serial(rng):
    feats = [_feat(rng, 200, f"f{i}") for i in range(5)]
    assert feature_rankings(feats, 50, workers=1) == feature_rankings(feats, 50, workers=4)
