"""Sharded threshold greedy.

Forced boundaries at regular positions cut the sorted values into
independent shards.  Every split's neighbours then lie in its own shard, so
each worker only needs its slice of the prefix tables.  A coordinator sends
a decreasing threshold each round; workers insert every local split whose
gain clears it and report back.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from . import _kernels as K
from ._parallel import ordered_map
from .boundary_index import BoundaryIndex
from .greedy import GreedyResult
from .ingest import SortedFeature
from .mi import log_scale

logger = logging.getLogger(__name__)

# relative slack when comparing a gain against the round threshold
THRESHOLD_RTOL = 1e-12


@dataclass(frozen=True)
class ShardPlan:
    n: int
    budget: int
    epsilon: float
    num_shards: int
    forced: tuple
    edges: tuple

    @property
    def ranges(self) -> list[tuple[int, int]]:
        """Half-open 1-based value ranges ``[lo, hi)`` owned by each shard."""
        return [(lo + 1, hi + 1) for lo, hi in zip(self.edges[:-1], self.edges[1:])]

    @property
    def shard_size(self) -> int:
        return math.ceil(self.n / self.num_shards)

    @property
    def max_rounds(self) -> int:
        return round_limit(self.n, self.epsilon)


def round_limit(n: int, epsilon: float) -> int:
    """``ceil(log_{1/(1-eps)} n) + 1`` thresholds ``w_0 .. w_R``."""
    if n <= 1:
        return 1
    return math.ceil(math.log(n) / -math.log1p(-epsilon)) + 1


def plan_shards(
    feat: SortedFeature | int,
    budget: int,
    epsilon: float,
    num_shards: Optional[int] = None,
) -> ShardPlan:
    """Choose ``ceil(eps k)`` shards and the forced boundaries between them.

    Forced boundaries sit at multiples of ``ceil(n / shards)`` and count
    against the budget ``k``.  If they would use it all, a single shard is
    used instead.
    """
    n = feat if isinstance(feat, int) else feat.n
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if budget > n - 1:
        raise ValueError(f"budget {budget} exceeds the {n - 1} possible boundaries")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if num_shards is None:
        num_shards = max(1, math.ceil(epsilon * budget - 1e-9))
    num_shards = max(1, min(int(num_shards), n))
    size = math.ceil(n / num_shards)
    forced = [j * size for j in range(1, num_shards) if j * size < n]
    if len(forced) >= budget:
        logger.warning(
            "%d forced boundaries would exhaust budget %d; using one shard", len(forced), budget
        )
        forced = []
    edges = (0, *forced, n)
    return ShardPlan(n, budget, epsilon, len(forced) + 1, tuple(forced), edges)


@dataclass(frozen=True)
class RoundRequest:
    round: int
    threshold: float
    remaining: int


@dataclass(frozen=True)
class RoundReply:
    shard: int
    inserted: tuple  # ((global position, gain), ...) in insertion order


class Shard:
    """Worker state: prefix tables of one shard only, rebased to its start."""

    def __init__(self, shard_id: int, lo: int, cc: np.ndarray, c0: np.ndarray, base: tuple, total: float, log_base: float):
        self.shard_id = shard_id
        self.lo = lo
        self.base = base
        self.index = BoundaryIndex(cc, c0, total, log_base)
        self.length = self.index.n
        self.log: list[tuple[int, float]] = []

    @property
    def prefix_entries(self) -> int:
        return self.index.prefix_entries

    def max_gain(self) -> float:
        if self.length < 2:
            return 0.0
        return self.index.block_argmax(0, self.length)[1]

    def handle(self, req: RoundRequest) -> RoundReply:
        idx = self.index
        limit = max(0, min(req.remaining, self.length - 1 - len(idx)))
        out_s = np.empty(limit, dtype=np.int64)
        out_g = np.empty(limit, dtype=np.float64)
        thr = req.threshold * (1.0 - THRESHOLD_RTOL) / idx.scale
        cnt = K.threshold_scan(idx._cc, idx._c0, idx.total, idx._words, idx._offs, idx._in_set, thr, limit, out_s, out_g)
        idx._size += cnt
        gains = out_g[:cnt] * idx.scale
        idx.objective += float(gains.sum())
        inserted = tuple((self.lo + int(s), float(g)) for s, g in zip(out_s[:cnt], gains))
        self.log.extend(inserted)
        return RoundReply(self.shard_id, inserted)

    def replay(self, keep: set) -> list[tuple[int, float]]:
        """Gains of the kept insertions re-applied in order on a fresh local index."""
        fresh = BoundaryIndex(self.index._cc, self.index._c0, self.index.total, self.index.log_base)
        out = []
        for s, _ in self.log:
            if s in keep:
                out.append((s, fresh.insert(s - self.lo)))
        return out


def make_shards(plan: ShardPlan, feat: SortedFeature, log_base: float = 2.0) -> list[Shard]:
    full = BoundaryIndex.build(feat, log_base)
    cc, c0 = full._cc, full._c0
    shards = []
    for j, (lo, hi) in enumerate(zip(plan.edges[:-1], plan.edges[1:])):
        base = (cc[lo], c0[lo])
        shards.append(
            Shard(j, lo, cc[lo : hi + 1] - cc[lo], c0[lo : hi + 1] - c0[lo], base, full.total, log_base)
        )
    return shards


def _forced_gains(plan: ShardPlan, shards: Sequence[Shard], total: float, log_base: float) -> list[float]:
    # forced boundaries inserted left to right: neighbours are the previous forced edge and n
    if not plan.forced:
        return []
    starts = [(s.base[0], s.base[1]) for s in shards]
    last = shards[-1]
    end = (last.base[0] + last.index._cc[-1], last.base[1] + last.index._c0[-1])
    cc = np.array([v[0] for v in starts] + [end[0]])
    c0 = np.array([v[1] for v in starts] + [end[1]])
    scale = log_scale(log_base)
    out = []
    for j in range(1, len(starts)):
        out.append(K.split_gain(cc, c0, j - 1, j, len(starts), total) * scale)
    return out


def trim(
    selected: Sequence[tuple[int, float]],
    budget: int,
    forced: Sequence[int] = (),
) -> list[tuple[int, float]]:
    """Drop the lowest-gain selections until ``forced + selected`` fits ``budget``.

    Ties drop the later insertion.  Forced boundaries are never removed.
    """
    room = budget - len(forced)
    if room < 0:
        raise ValueError("forced boundaries exceed the budget")
    excess = len(selected) - room
    if excess <= 0:
        return list(selected)
    ranked = sorted(range(len(selected)), key=lambda i: (selected[i][1], -i))
    drop = set(ranked[:excess])
    return [x for i, x in enumerate(selected) if i not in drop]


def run_threshold_rounds(
    plan: ShardPlan,
    feat: SortedFeature,
    log_base: float = 2.0,
    trace: Optional[TextIO] = None,
    workers: Optional[int] = None,
    transport: Optional[Callable[[Shard, RoundRequest], RoundReply]] = None,
) -> GreedyResult:
    """Threshold greedy across shards, ``(1 - 1/e - 2 eps)``-optimal.

    ``w_0`` is the largest single-split gain given the forced boundaries; round
    ``i`` uses ``(1 - eps)^i w_0``.  Rounds stop once the budget is met, the
    threshold drops below ``eps w_0 / n``, or ``ceil(log_{1/(1-eps)} n) + 1``
    thresholds have been tried.  Overshoot is trimmed by lowest insertion gain.
    """
    if plan.n != feat.n:
        raise ValueError("plan was made for a different vocabulary size")
    t0 = time.perf_counter()
    send = transport or (lambda shard, req: shard.handle(req))
    shards = make_shards(plan, feat, log_base)
    for sh in shards:
        assert sh.prefix_entries <= plan.shard_size + 1, "shard holds more than its slice"
    total = shards[0].index.total
    forced = list(plan.forced)
    k, eps, n = plan.budget, plan.epsilon, plan.n

    w0 = max(ordered_map(lambda sh: sh.max_gain(), shards, workers))
    selected: list[tuple[int, float]] = []
    rounds = 0
    if w0 > 0.0:
        floor = w0 * eps / n
        for i in range(plan.max_rounds):
            remaining = k - len(forced) - len(selected)
            if remaining <= 0:
                break
            w = w0 * (1.0 - eps) ** i
            if w < floor:
                break
            req = RoundRequest(i, w, remaining)
            replies = ordered_map(lambda sh: send(sh, req), shards, workers)
            rounds += 1
            for rep in replies:
                selected.extend(rep.inserted)
            if trace is not None:
                trace.write(
                    json.dumps(
                        {"round": i, "threshold": w, "inserted_per_shard": [len(r.inserted) for r in replies]}
                    )
                    + "\n"
                )
    assert rounds <= plan.max_rounds
    kept = trim(selected, k, forced)
    keep_set = {s for s, _ in kept}
    steps = list(zip(forced, _forced_gains(plan, shards, total, log_base)))
    for sh in shards:
        steps.extend(sh.replay(keep_set))
    chosen = np.array([s for s, _ in steps], dtype=np.int64)
    gains = np.array([g for _, g in steps], dtype=np.float64)
    return GreedyResult(
        boundaries=np.sort(chosen),
        chosen=chosen,
        gains=gains,
        objective=float(gains.sum()),
        elapsed=time.perf_counter() - t0,
        rounds=rounds,
        extra={"w0": w0, "selected_before_trim": len(selected), "num_shards": plan.num_shards},
    )
