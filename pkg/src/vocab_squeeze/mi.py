"""Mutual-information kernel for a binary label.

With ``p0 = P(C=0)`` the divergence kernel

    f(t) = t log(t / p0) + (1 - t) log((1 - t) / (1 - p0))

is the binary KL divergence ``D(t || p0)``.  For any clustering Z of the
values, ``I(Z;C) = sum_z P(z) f(P(C=0 | z))``, and splitting one cluster in two
gains ``p f(a) + q f(b) - (p + q) f(mean)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ingest import SortedFeature

LN2 = math.log(2.0)


class DegenerateLabelError(ValueError):
    """Raised when ``P(C=0)`` is 0 or 1 and the kernel is undefined."""


def log_scale(log_base: float) -> float:
    """Multiplier turning nats into ``log_base`` units."""
    if log_base == 2 or log_base == 2.0:
        return 1.0 / LN2
    if log_base <= 0 or log_base == 1:
        raise ValueError(f"invalid log base {log_base}")
    return 1.0 / math.log(log_base)


@dataclass(frozen=True)
class MiContext:
    p0: float
    log_base: float = 2.0

    def __post_init__(self):
        if not (0.0 <= self.p0 <= 1.0):
            raise ValueError(f"p0={self.p0} outside [0, 1]")

    @property
    def degenerate(self) -> bool:
        return self.p0 <= 0.0 or self.p0 >= 1.0

    @property
    def scale(self) -> float:
        return log_scale(self.log_base)

    @classmethod
    def of(cls, feat: SortedFeature, log_base: float = 2.0) -> "MiContext":
        return cls(feat.p0, log_base)


def _xlog_ratio(a, b):
    """``a * log(a / b)`` with ``0 log 0 = 0``; ``b`` must be positive where ``a`` is."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pos = a > 0
    safe_a = np.where(pos, a, 1.0)
    safe_b = np.where(pos, b, 1.0)
    return np.where(pos, a * np.log(safe_a / safe_b), 0.0)


def binary_kl(a, b):
    """``D(a || b)`` in nats for Bernoulli parameters, elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return _xlog_ratio(a, b) + _xlog_ratio(1.0 - a, 1.0 - b)


def f_div(t, ctx: MiContext):
    """The divergence kernel ``f(t) = D(t || p0)`` in ``ctx.log_base`` units.

    Finite on all of ``[0, 1]``: ``f(0) = log 1/(1-p0)`` and ``f(1) = log 1/p0``.
    """
    if ctx.degenerate:
        raise DegenerateLabelError("f is undefined when P(C=0) is 0 or 1")
    t_arr = np.asarray(t, dtype=np.float64)
    if ((t_arr < 0) | (t_arr > 1)).any():
        raise ValueError("t must lie in [0, 1]")
    out = binary_kl(t_arr, ctx.p0) * ctx.scale
    return float(out) if out.ndim == 0 else out


def mutual_information(feat: SortedFeature, log_base: float = 2.0) -> float:
    """``I(X;C) = sum_i P(x_i) f(P(C=0|x_i))``; zero for a degenerate label."""
    ctx = MiContext.of(feat, log_base)
    if ctx.degenerate:
        return 0.0
    return float(np.dot(feat.p_x, binary_kl(feat.cond, ctx.p0))) * ctx.scale


def check_boundaries(S: Sequence[int], n: int) -> np.ndarray:
    """Validate a boundary set against vocabulary size ``n``; returns it sorted."""
    arr = np.asarray(sorted(int(s) for s in S), dtype=np.int64)
    if arr.size:
        if arr[0] < 1 or arr[-1] > n - 1:
            raise ValueError(f"boundaries must lie in [1, {n - 1}], got {arr.tolist()}")
        if (np.diff(arr) <= 0).any():
            raise ValueError("boundaries must be distinct")
    return arr


def _block_sums(feat: SortedFeature, edges: np.ndarray):
    """Total mass and label-0 mass of the consecutive blocks ``(edges[j], edges[j+1]]``."""
    starts = edges[:-1]
    if feat.has_counts:
        tot = feat.count_c0 + feat.count_c1
        mass = np.add.reduceat(tot, starts).astype(np.float64)
        joint = np.add.reduceat(feat.count_c0, starts).astype(np.float64)
        scale = float(tot.sum())
        return mass / scale, joint / mass
    mass = np.add.reduceat(feat.p_x, starts)
    joint = np.add.reduceat(feat.p_x * feat.cond, starts)
    return mass, np.clip(joint / mass, 0.0, 1.0)


def evaluate_partition(feat: SortedFeature, S: Sequence[int], log_base: float = 2.0) -> float:
    """``F(S) = I(Z;C)`` where Z groups the sorted values at the split points ``S``.

    Split point ``s`` separates sorted values ``s`` and ``s + 1`` (1-based), so
    ``S = {}`` is one cluster and ``S = {1..n-1}`` is the identity.
    """
    n = feat.n
    bounds = check_boundaries(S, n)
    ctx = MiContext.of(feat, log_base)
    if ctx.degenerate:
        return 0.0
    edges = np.concatenate(([0], bounds, [n]))
    mass, cond = _block_sums(feat, edges)
    return float(np.dot(mass, binary_kl(cond, ctx.p0))) * ctx.scale


def marginal_gain(p, q, alpha, beta, ctx: MiContext):
    """Gain of splitting a cluster into parts of mass ``p`` and ``q``.

    Evaluates ``p f(alpha) + q f(beta) - (p+q) f(mu)`` with ``mu`` the pooled
    conditional, written as ``p D(alpha||mu) + q D(beta||mu)``: the two are
    equal for every ``p0`` and the latter is non-negative term by term.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64)
    if (p_arr <= 0).any() or (q_arr <= 0).any():
        raise ValueError("cluster masses p and q must be positive")
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    mu = (p_arr * a + q_arr * b) / (p_arr + q_arr)
    mu = np.clip(mu, np.minimum(a, b), np.maximum(a, b))
    out = (p_arr * binary_kl(a, mu) + q_arr * binary_kl(b, mu)) * ctx.scale
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class CompressionMap:
    """Value -> cluster assignment over the sorted value positions.

    Unlike a boundary set this allows non-consecutive clusters (frequency
    filtering) and empty clusters (bucketing).
    """

    cluster_of: np.ndarray
    num_clusters: int
    oov_cluster: Optional[int] = None

    def __post_init__(self):
        self.cluster_of = np.asarray(self.cluster_of, dtype=np.int64)
        if self.cluster_of.size and (
            self.cluster_of.min() < 0 or self.cluster_of.max() >= self.num_clusters
        ):
            raise ValueError("cluster id out of range")

    @property
    def n(self) -> int:
        return int(self.cluster_of.size)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.num_clusters)

    @property
    def nonempty(self) -> int:
        return int((self.sizes() > 0).sum())

    @property
    def empty_clusters(self) -> list[int]:
        return np.flatnonzero(self.sizes() == 0).tolist()

    def is_consecutive(self) -> bool:
        """True when every cluster is a contiguous run in sorted order."""
        if self.n == 0:
            return True
        change = np.flatnonzero(np.diff(self.cluster_of) != 0)
        runs = change.size + 1
        return runs == self.nonempty

    def boundaries(self) -> np.ndarray:
        """Split points of a consecutive map."""
        if not self.is_consecutive():
            raise ValueError("map is not consecutive in sorted order")
        return np.flatnonzero(np.diff(self.cluster_of) != 0).astype(np.int64) + 1

    def densified(self) -> "CompressionMap":
        """Relabel to ``0..k-1`` dropping empty clusters, order preserved; OOV stays last."""
        used = np.flatnonzero(self.sizes() > 0)
        if self.oov_cluster is not None and self.oov_cluster in used:
            used = np.concatenate((used[used != self.oov_cluster], [self.oov_cluster]))
        relabel = np.full(self.num_clusters, -1, dtype=np.int64)
        relabel[used] = np.arange(used.size)
        oov = None
        if self.oov_cluster is not None and relabel[self.oov_cluster] >= 0:
            oov = int(relabel[self.oov_cluster])
        return CompressionMap(relabel[self.cluster_of], int(used.size), oov)

    @classmethod
    def identity(cls, n: int) -> "CompressionMap":
        return cls(np.arange(n), n)

    @classmethod
    def single(cls, n: int) -> "CompressionMap":
        return cls(np.zeros(n, dtype=np.int64), 1)

    @classmethod
    def from_boundaries(cls, S: Sequence[int], n: int) -> "CompressionMap":
        bounds = check_boundaries(S, n)
        # value at sorted position i (0-based) lies after every split < i+1
        cluster_of = np.searchsorted(bounds, np.arange(1, n + 1), side="left")
        return cls(cluster_of, int(bounds.size) + 1)


def partition_mi(feat: SortedFeature, cmap: CompressionMap, log_base: float = 2.0) -> float:
    """``I(Z;C)`` for an arbitrary assignment of the sorted values to clusters."""
    if cmap.n != feat.n:
        raise ValueError(f"map covers {cmap.n} values, feature has {feat.n}")
    ctx = MiContext.of(feat, log_base)
    if ctx.degenerate:
        return 0.0
    k = cmap.num_clusters
    if feat.has_counts:
        tot = (feat.count_c0 + feat.count_c1).astype(np.float64)
        mass = np.bincount(cmap.cluster_of, weights=tot, minlength=k)
        joint = np.bincount(cmap.cluster_of, weights=feat.count_c0.astype(np.float64), minlength=k)
        scale = float(tot.sum())
    else:
        mass = np.bincount(cmap.cluster_of, weights=feat.p_x, minlength=k)
        joint = np.bincount(cmap.cluster_of, weights=feat.p_x * feat.cond, minlength=k)
        scale = 1.0
    used = mass > 0
    cond = np.clip(joint[used] / mass[used], 0.0, 1.0)
    return float(np.dot(mass[used] / scale, binary_kl(cond, ctx.p0))) * ctx.scale
