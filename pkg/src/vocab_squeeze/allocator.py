"""Splitting one vocabulary budget across many features."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._parallel import ordered_map
from .boundary_index import BoundaryIndex
from .greedy import marginal_ranking
from .ingest import SortedFeature
from .mi import evaluate_partition, mutual_information

logger = logging.getLogger(__name__)


class BudgetError(ValueError):
    pass


@dataclass
class FeatureReport:
    name: str
    n: int
    m: int
    mi_before: float
    mi_after: float


@dataclass
class AllocationReport:
    features: list = field(default_factory=list)
    total_budget: Optional[int] = None

    @property
    def allocated(self) -> int:
        return sum(f.m for f in self.features)

    @property
    def avg_mi_loss(self) -> float:
        return average_mi_loss([f.mi_before for f in self.features], [f.mi_after for f in self.features])

    def by_name(self) -> dict:
        return {f.name: f for f in self.features}


def average_mi_loss(before: Sequence[float], after: Sequence[float]) -> float:
    """``sum(X_i - Z_i) / sum(X_j)`` over features."""
    x = np.asarray(before, dtype=np.float64)
    z = np.asarray(after, dtype=np.float64)
    denom = float(x.sum())
    if denom <= 0.0:
        raise ValueError("average MI loss is undefined when no feature carries information")
    return float((x - z).sum() / denom)


def _check_budget(features: Sequence[SortedFeature], total_budget: int) -> None:
    if not features:
        raise BudgetError("no features to allocate to")
    if total_budget < len(features):
        raise BudgetError(f"budget {total_budget} is below one cluster per feature ({len(features)})")


def _tie_order(features: Sequence[SortedFeature]) -> np.ndarray:
    # remainder / surplus priority: largest vocabulary first, then name
    return np.array(sorted(range(len(features)), key=lambda i: (-features[i].n, features[i].name)))


def _proportional(weights: np.ndarray, caps: np.ndarray, budget: int, prio: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment of ``budget`` by ``weights`` under per-item caps.

    Items hitting their cap are frozen and the rest re-apportioned, so the
    result sums to ``min(budget, caps.sum())``.
    """
    out = np.zeros(weights.size, dtype=np.int64)
    free = np.ones(weights.size, dtype=bool)
    left = int(min(budget, caps.sum()))
    rank = np.empty(weights.size, dtype=np.int64)
    rank[prio] = np.arange(weights.size)
    while left > 0 and free.any():
        w = np.where(free, weights, 0.0)
        if w.sum() <= 0:
            w = free.astype(np.float64)
        quota = left * w / w.sum()
        base = np.floor(quota).astype(np.int64)
        rem = left - int(base.sum())
        frac = quota - base
        order = sorted(np.flatnonzero(free), key=lambda i: (-frac[i], rank[i]))
        for i in order[:rem]:
            base[i] += 1
        trial = out + base
        over = free & (trial > caps)
        if not over.any():
            out = trial
            left = 0
            break
        out[over] = caps[over]
        free &= ~over
        left = int(min(budget, caps.sum())) - int(out.sum())
    return out


def _enforce_floor(alloc: np.ndarray, caps: np.ndarray, prio: np.ndarray) -> np.ndarray:
    alloc = alloc.copy()
    for i in np.flatnonzero(alloc < 1):
        donors = [j for j in prio if alloc[j] > 1]
        if not donors:
            break
        d = max(donors, key=lambda j: alloc[j])
        alloc[d] -= 1
        alloc[i] = 1
    return np.minimum(alloc, caps)


def allocate_uniform(features: Sequence[SortedFeature], total_budget: int) -> dict[str, int]:
    """Equal shares, remainder to the largest vocabularies, capped at each vocabulary size."""
    _check_budget(features, total_budget)
    caps = np.array([f.n for f in features], dtype=np.int64)
    prio = _tie_order(features)
    alloc = _proportional(np.ones(len(features)), caps, total_budget, prio)
    alloc = _enforce_floor(alloc, caps, prio)
    return {f.name: int(a) for f, a in zip(features, alloc)}


def allocate_mi_proportional(
    features: Sequence[SortedFeature],
    total_budget: int,
    log_base: float = 2.0,
    mi: Optional[Sequence[float]] = None,
) -> dict[str, int]:
    """Shares proportional to each feature's ``I(X;C)``; at least one cluster each."""
    _check_budget(features, total_budget)
    weights = np.array(
        mi if mi is not None else [mutual_information(f, log_base) for f in features], dtype=np.float64
    )
    if weights.sum() <= 0:
        logger.warning("no feature carries mutual information; falling back to uniform allocation")
        return allocate_uniform(features, total_budget)
    caps = np.array([f.n for f in features], dtype=np.int64)
    prio = _tie_order(features)
    alloc = _proportional(weights, caps, total_budget, prio)
    alloc = _enforce_floor(alloc, caps, prio)
    # the floor may have freed budget from capped features; hand it back by weight
    spare = int(min(total_budget, caps.sum())) - int(alloc.sum())
    if spare > 0:
        alloc += _proportional(weights, caps - alloc, spare, prio)
    return {f.name: int(a) for f, a in zip(features, alloc)}


def feature_rankings(
    features: Sequence[SortedFeature],
    limit: int,
    log_base: float = 2.0,
    workers: Optional[int] = None,
) -> dict[str, list]:
    """Greedy insertion order (with gains) of each feature's first ``limit`` splits."""

    def rank(f: SortedFeature):
        return marginal_ranking(BoundaryIndex.build(f, log_base), min(limit, f.n - 1))

    return dict(zip((f.name for f in features), ordered_map(rank, features, workers)))


def select_global(rankings: dict, names: Sequence[str], extra: int) -> dict[str, np.ndarray]:
    """Top ``extra`` splits across all rankings by greedy gain.

    Each feature's gains are made non-increasing (running minimum) before the
    merge so the selection is always a prefix of that feature's ranking.
    """
    keys, owners, ranks = [], [], []
    for j, name in enumerate(names):
        gains = np.array([g for _, g in rankings[name]], dtype=np.float64)
        if gains.size:
            gains = np.minimum.accumulate(gains)
        keys.append(gains)
        owners.append(np.full(gains.size, j, dtype=np.int64))
        ranks.append(np.arange(gains.size))
    if keys:
        g = np.concatenate(keys)
        o = np.concatenate(owners)
        r = np.concatenate(ranks)
        order = np.lexsort((r, o, -g))[: max(extra, 0)]
        counts = np.bincount(o[order], minlength=len(names))
    else:
        counts = np.zeros(len(names), dtype=np.int64)
    return {
        name: np.sort(np.array([s for s, _ in rankings[name][: counts[j]]], dtype=np.int64))
        for j, name in enumerate(names)
    }


def allocate_global_submodular(
    features: Sequence[SortedFeature],
    total_budget: int,
    log_base: float = 2.0,
    rankings: Optional[dict] = None,
    workers: Optional[int] = None,
) -> tuple[dict[str, np.ndarray], AllocationReport]:
    """Pick the globally best ``total_budget - #features`` splits across features.

    The objective summed over features is separable, so merging per-feature
    greedy rankings by gain is the same as one greedy run over all splits.
    """
    _check_budget(features, total_budget)
    feats = sorted(features, key=lambda f: f.name)
    names = [f.name for f in feats]
    extra = total_budget - len(feats)
    if rankings is None:
        rankings = feature_rankings(feats, extra, log_base, workers)
    chosen = select_global(rankings, names, extra)
    report = AllocationReport(total_budget=total_budget)
    for f in feats:
        S = chosen[f.name]
        report.features.append(
            FeatureReport(f.name, f.n, int(S.size) + 1, mutual_information(f, log_base), evaluate_partition(f, S, log_base))
        )
    return chosen, report
