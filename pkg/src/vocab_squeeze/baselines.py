"""Heuristic compressors and exact small-instance optima.

The heuristics (bucketing, frequency filtering, divisive KL clustering) are
what the submodular method is compared against.  ``dp_optimal`` and
``brute_force_optimal`` give the true optimum over consecutive partitions and
are meant for tests, not production inputs.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ingest import FeatureTable, SortedFeature
from .mi import (
    CompressionMap,
    MiContext,
    binary_kl,
    evaluate_partition,
    f_div,
    partition_mi,
)

logger = logging.getLogger(__name__)

DP_MAX_N = 5000
BRUTE_FORCE_MAX_COMBINATIONS = 10**6
# divisive iterations stop once I(Z;C) improves by no more than this (relative)
STALL_RTOL = 1e-12


# -- bucketing ---------------------------------------------------------------


@dataclass
class BucketingResult:
    k_buckets: int
    cmap: CompressionMap
    realized: int
    delta_max: Optional[float]


def bucket_of(cond, k_buckets: int) -> np.ndarray:
    """Interval index ``floor(t k)``; the last interval is closed at 1."""
    idx = np.floor(np.asarray(cond, dtype=np.float64) * k_buckets).astype(np.int64)
    return np.minimum(idx, k_buckets - 1)


def bucketing_loss_bound(k_buckets: int, ctx: MiContext) -> float:
    """Largest oscillation of ``f`` over one of the ``k`` equal-width intervals.

    ``f`` is convex with its minimum 0 at ``p0``, so on each interval its sup
    is at an endpoint and its inf is either 0 (``p0`` inside) or the smaller
    endpoint value.
    """
    if k_buckets < 1:
        raise ValueError("k_buckets must be positive")
    edges = np.arange(k_buckets + 1) / k_buckets
    f_edges = f_div(edges, ctx)
    lo, hi = f_edges[:-1], f_edges[1:]
    top = np.maximum(lo, hi)
    inside = (edges[:-1] <= ctx.p0) & (ctx.p0 <= edges[1:])
    bottom = np.where(inside, 0.0, np.minimum(lo, hi))
    return float((top - bottom).max())


def bucketing(feat: SortedFeature, k_buckets: int, log_base: float = 2.0) -> BucketingResult:
    """Group values by which of ``k`` equal-width intervals their conditional falls in."""
    if k_buckets < 1:
        raise ValueError("k_buckets must be positive")
    cmap = CompressionMap(bucket_of(feat.cond, k_buckets), k_buckets)
    ctx = MiContext.of(feat, log_base)
    bound = None if ctx.degenerate else bucketing_loss_bound(k_buckets, ctx)
    return BucketingResult(k_buckets, cmap, cmap.nonempty, bound)


# -- frequency filtering -----------------------------------------------------


@dataclass
class FrequencyResult:
    threshold: int
    cmap: CompressionMap
    retained: int

    @property
    def kept(self) -> np.ndarray:
        """Sorted positions that keep their own cluster."""
        if self.cmap.oov_cluster is None:
            return np.arange(self.cmap.n)
        return np.flatnonzero(self.cmap.cluster_of != self.cmap.oov_cluster)


def _frequency_rank(totals: np.ndarray, ids: Optional[Sequence]) -> np.ndarray:
    # descending count, then value id ascending
    if ids is None:
        tie = np.arange(totals.size)
    else:
        tie = np.empty(totals.size, dtype=np.int64)
        tie[np.argsort(np.asarray(ids, dtype=object), kind="stable")] = np.arange(totals.size)
    return np.lexsort((tie, -totals))


def _frequency_map(n: int, keep: np.ndarray) -> CompressionMap:
    keep = np.sort(keep)
    if keep.size >= n:
        return CompressionMap.identity(n)
    cluster_of = np.full(n, keep.size, dtype=np.int64)
    cluster_of[keep] = np.arange(keep.size)
    return CompressionMap(cluster_of, keep.size + 1, oov_cluster=keep.size)


def frequency_filter(feat: SortedFeature, budget: int) -> FrequencyResult:
    """Keep the ``budget`` most frequent values; pool the rest into one OOV cluster."""
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if not feat.has_counts:
        raise ValueError("frequency filtering needs a feature built from counts")
    totals = feat.count_c0 + feat.count_c1
    order = _frequency_rank(totals, feat.value_ids)
    keep = order[: min(budget, feat.n)]
    tau = int(totals[keep].min()) if keep.size else int(totals.max()) + 1
    return FrequencyResult(tau, _frequency_map(feat.n, keep), int(keep.size))


def frequency_filter_global(features: Sequence[SortedFeature], budget: int) -> dict[str, FrequencyResult]:
    """One count threshold shared by all features.

    ``budget`` is the number of retained values summed over features; ties
    at the threshold go to feature name then value id.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    feats = sorted(features, key=lambda f: f.name)
    totals, fidx, ranks = [], [], []
    for j, f in enumerate(feats):
        tot = f.count_c0 + f.count_c1
        r = np.empty(f.n, dtype=np.int64)
        r[_frequency_rank(np.zeros(f.n, dtype=np.int64), f.value_ids)] = np.arange(f.n)
        totals.append(tot)
        fidx.append(np.full(f.n, j, dtype=np.int64))
        ranks.append(r)
    totals_all = np.concatenate(totals)
    fidx_all = np.concatenate(fidx)
    rank_all = np.concatenate(ranks)
    pos_all = np.concatenate([np.arange(f.n) for f in feats])
    order = np.lexsort((rank_all, fidx_all, -totals_all))[:budget]
    out = {}
    for j, f in enumerate(feats):
        keep = pos_all[order[fidx_all[order] == j]]
        tot = totals[j]
        tau = int(tot[keep].min()) if keep.size else int(tot.max()) + 1
        out[f.name] = FrequencyResult(tau, _frequency_map(f.n, keep), int(keep.size))
    return out


# -- divisive KL clustering --------------------------------------------------


@dataclass
class DivisiveResult:
    cmap: CompressionMap
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.history[-1] if self.history else 0.0


def equal_mass_split(p_x: np.ndarray, m: int) -> np.ndarray:
    """``m - 1`` split points giving contiguous groups of roughly equal mass, none empty."""
    n = p_x.size
    if m <= 1:
        return np.empty(0, dtype=np.int64)
    cum = np.cumsum(p_x)
    cum /= cum[-1]
    targets = np.arange(1, m) / m
    b = np.searchsorted(cum, targets, side="left").astype(np.int64) + 1
    for j in range(m - 1):
        lo = b[j - 1] + 1 if j else 1
        b[j] = max(b[j], lo)
    for j in range(m - 2, -1, -1):
        hi = b[j + 1] - 1 if j < m - 2 else n - 1
        b[j] = min(b[j], hi)
    return b


def kl_assign(cond: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Cluster minimising ``D(cond_x || center_z)``; ties to the smallest cluster id.

    For fixed ``t`` the divergence decreases in the center up to ``t`` and
    increases after it, so only the two centers bracketing ``t`` need checking.
    """
    order = np.lexsort((np.arange(centers.size), centers))
    sc = centers[order]
    first = np.concatenate(([True], sc[1:] != sc[:-1]))
    uc, uid = sc[first], order[first]
    right = np.searchsorted(uc, cond, side="left")
    left = np.clip(right - 1, 0, uc.size - 1)
    right = np.clip(right, 0, uc.size - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dl = _kl_extended(cond, uc[left])
        dr = _kl_extended(cond, uc[right])
    il, ir = uid[left], uid[right]
    pick_right = (dr < dl) | ((dr == dl) & (ir < il))
    return np.where(pick_right, ir, il)


def _kl_extended(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Binary KL with ``+inf`` where ``b`` is 0 or 1 and ``a`` differs."""
    out = np.full(a.shape, np.inf)
    ok = ((b > 0) & (b < 1)) | (a == b)
    out[ok] = binary_kl(a[ok], b[ok])
    return out


def _centers(feat: SortedFeature, labels: np.ndarray, m: int):
    mass = np.bincount(labels, weights=feat.p_x, minlength=m)
    joint = np.bincount(labels, weights=feat.p_x * feat.cond, minlength=m)
    with np.errstate(invalid="ignore", divide="ignore"):
        centers = np.clip(joint / mass, 0.0, 1.0)
    return mass, centers


def divisive_cluster(
    feat: SortedFeature,
    m: int,
    max_iters: int = 50,
    seed: Optional[int] = None,
    log_base: float = 2.0,
) -> DivisiveResult:
    """KL k-means over the label conditionals.

    Starts from an equal-mass contiguous split of the sorted values, then
    alternates assignment to the closest center (KL from the value's label
    distribution to the cluster's) and mass-weighted center updates.
    ``I(Z;C)`` never decreases across iterations; iteration stops at a fixed
    point or once an iteration no longer improves it.  ``seed`` is accepted for
    interface stability; the initialisation is deterministic.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    n = feat.n
    m = min(m, n)
    labels = CompressionMap.from_boundaries(equal_mass_split(feat.p_x, m), n).cluster_of
    cmap = CompressionMap(labels, m)
    history = [partition_mi(feat, cmap, log_base)]
    if m == 1 or m == n:
        return DivisiveResult(cmap, history, 0, True)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        mass, centers = _centers(feat, labels, m)
        live = np.flatnonzero(mass > 0)
        new = _reseed_empty(feat, live[kl_assign(feat.cond, centers[live])], m)
        changed = not np.array_equal(new, labels)
        labels = new
        cmap = CompressionMap(labels, m)
        history.append(partition_mi(feat, cmap, log_base))
        prev, cur = history[-2], history[-1]
        tol = STALL_RTOL * max(1.0, abs(prev))
        assert cur >= prev - tol, "divisive objective decreased"
        # a relabelling that gains nothing is a fixed point up to rounding
        if not changed or cur <= prev + tol:
            converged = True
            break
    return DivisiveResult(cmap, history, it, converged)


def _reseed_empty(feat: SortedFeature, labels: np.ndarray, m: int) -> np.ndarray:
    # empty clusters, in id order, take the values farthest (KL) from their
    # own center; a donor cluster is never left empty
    sizes = np.bincount(labels, minlength=m)
    empty = np.flatnonzero(sizes == 0)
    if empty.size == 0:
        return labels
    labels = labels.copy()
    _, centers = _centers(feat, labels, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = _kl_extended(feat.cond, centers[labels])
    order = np.lexsort((np.arange(d.size), -d))
    j = 0
    for i in order.tolist():
        if j == empty.size:
            break
        if sizes[labels[i]] >= 2:
            sizes[labels[i]] -= 1
            labels[i] = empty[j]
            sizes[empty[j]] = 1
            j += 1
    return labels


# -- exact optima ------------------------------------------------------------


def dp_optimal(feat: SortedFeature, m: int, log_base: float = 2.0) -> tuple[np.ndarray, float]:
    """Best ``m``-cluster consecutive partition by dynamic programming, O(n^2 m).

    ``best[j][i]`` is the best value of splitting the first ``i`` sorted values
    into ``j`` blocks.  Returns ``(boundaries, F*)``; ties pick the smallest
    previous split.
    """
    n = feat.n
    if n > DP_MAX_N:
        raise ValueError(f"dp_optimal is limited to n <= {DP_MAX_N}, got {n}")
    if m < 1:
        raise ValueError("m must be at least 1")
    m = min(m, n)
    ctx = MiContext.of(feat, log_base)
    if ctx.degenerate or m == 1:
        return np.arange(1, m, dtype=np.int64), 0.0
    if feat.has_counts:
        tot = (feat.count_c0 + feat.count_c1).astype(np.float64)
        cc = np.concatenate(([0.0], np.cumsum(tot))) / tot.sum()
        c0 = np.concatenate(([0.0], np.cumsum(feat.count_c0.astype(np.float64)))) / tot.sum()
        ci = np.concatenate(([0], np.cumsum(feat.count_c0 + feat.count_c1)))
        c0i = np.concatenate(([0], np.cumsum(feat.count_c0)))
    else:
        cc = np.concatenate(([0.0], np.cumsum(feat.p_x)))
        c0 = np.concatenate(([0.0], np.cumsum(feat.p_x * feat.cond)))
        ci = c0i = None
    neg = -np.inf
    best = np.full((m + 1, n + 1), neg)
    arg = np.zeros((m + 1, n + 1), dtype=np.int64)
    best[0, 0] = 0.0
    for i in range(1, n + 1):
        t = np.arange(i)
        mass = cc[i] - cc[t]
        if ci is not None:
            cond = (c0i[i] - c0i[t]) / (ci[i] - ci[t])
        else:
            cond = np.clip((c0[i] - c0[t]) / mass, 0.0, 1.0)
        w = mass * binary_kl(cond, ctx.p0) * ctx.scale
        for j in range(1, min(i, m) + 1):
            cand = best[j - 1, :i] + w
            k = int(np.argmax(cand))
            best[j, i] = cand[k]
            arg[j, i] = k
    bounds = []
    i = n
    for j in range(m, 0, -1):
        i = int(arg[j, i])
        if j > 1:
            bounds.append(i)
    bounds = np.array(sorted(bounds), dtype=np.int64)
    return bounds, float(best[m, n])


def brute_force_optimal(feat: SortedFeature, m: int, log_base: float = 2.0) -> tuple[np.ndarray, float]:
    """Exhaustive search over all ``C(n-1, m-1)`` boundary sets.

    Returns ``(boundaries, F*)``; ties go to the lexicographically smallest set.
    """
    n = feat.n
    if m < 1:
        raise ValueError("m must be at least 1")
    m = min(m, n)
    if math.comb(n - 1, m - 1) > BRUTE_FORCE_MAX_COMBINATIONS:
        raise ValueError("too many boundary sets for brute force")
    best_s: tuple = tuple(range(1, m))
    best_v = -np.inf
    for S in itertools.combinations(range(1, n), m - 1):
        v = evaluate_partition(feat, S, log_base)
        if v > best_v:
            best_v, best_s = v, S
    return np.array(best_s, dtype=np.int64), float(best_v)


def constrained_brute_force(
    feat: SortedFeature, k: int, forced: Sequence[int], log_base: float = 2.0
) -> tuple[np.ndarray, float]:
    """Best set of at most ``k`` interior boundaries that contains ``forced``."""
    n = feat.n
    forced = sorted(set(int(s) for s in forced))
    free = [s for s in range(1, n) if s not in forced]
    extra = max(0, min(k, n - 1) - len(forced))
    if math.comb(len(free), extra) > BRUTE_FORCE_MAX_COMBINATIONS:
        raise ValueError("too many boundary sets for brute force")
    best_s: tuple = tuple(forced)
    best_v = -np.inf
    for add in itertools.combinations(free, extra):
        S = tuple(sorted(forced + list(add)))
        v = evaluate_partition(feat, S, log_base)
        if v > best_v:
            best_v, best_s = v, S
    return np.array(best_s, dtype=np.int64), float(best_v)
