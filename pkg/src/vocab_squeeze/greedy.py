"""Single-machine maximisers of the split objective F(S)."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .boundary_index import BoundaryIndex

logger = logging.getLogger(__name__)

_UNIFORM_CHUNK = 1 << 16


@dataclass(frozen=True)
class GreedyConfig:
    m: int
    epsilon: float = 0.05
    seed: int = 0
    mode: str = "stochastic"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.mode not in ("stochastic", "classic"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class GreedyResult:
    """Chosen boundaries with the gain each one realised when inserted."""

    boundaries: np.ndarray
    chosen: np.ndarray
    gains: np.ndarray
    objective: float
    elapsed: float = 0.0
    rounds: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def steps(self) -> list[tuple[int, float]]:
        return list(zip(self.chosen.tolist(), self.gains.tolist()))

    @property
    def m(self) -> int:
        return int(self.boundaries.size) + 1


def _steps_for(index: BoundaryIndex, m: int) -> int:
    if m > index.n:
        logger.warning("m=%d exceeds vocabulary size %d; using the identity mapping", m, index.n)
        m = index.n
    return max(min(m - 1, index.n - 1), 0)


def _require_fresh(index: BoundaryIndex) -> None:
    if len(index):
        raise ValueError("optimizer expects an index with no interior boundaries")


def sample_size(n: int, m: int, epsilon: float) -> int:
    """Candidates drawn per stochastic-greedy step: ``ceil((n / m) ln(1/eps))``."""
    return max(1, math.ceil((n / m) * math.log(1.0 / epsilon)))


def stochastic_greedy(
    index: BoundaryIndex,
    cfg: GreedyConfig,
    rng: Optional[np.random.Generator] = None,
) -> GreedyResult:
    """Stochastic greedy: each step scores a random subset of the unchosen splits.

    Every step draws ``sample_size(n, m, eps)`` candidates uniformly without
    replacement (all of them once fewer remain) and inserts the best.  The
    result is ``(1 - 1/e - eps)``-optimal in expectation.
    """
    _require_fresh(index)
    t0 = time.perf_counter()
    steps = _steps_for(index, cfg.m)
    m = min(cfg.m, index.n)
    if rng is None:
        rng = np.random.Generator(np.random.Philox(cfg.seed))
    n = index.n
    t_full = sample_size(n, m, cfg.epsilon)
    remaining = np.arange(1, n, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    pos[1:] = np.arange(n - 1)
    chosen = np.empty(steps, dtype=np.int64)
    gains = np.empty(steps, dtype=np.float64)
    # uniforms are drawn in chunks; the stream consumed is chunk-size independent
    u = np.empty(0)
    it, n_rem, u_pos = 0, n - 1, 0
    while it < steps:
        it, n_rem, u_pos = K.stochastic_run(
            index._cc, index._c0, index.total, index._words, index._offs, index._in_set,
            remaining, pos, n_rem, t_full, u, u_pos, chosen, gains, it,
        )
        if it < steps:
            u = np.concatenate((u[u_pos:], rng.random(max(_UNIFORM_CHUNK, t_full))))
            u_pos = 0
    gains *= index.scale
    index._size += steps
    index.objective += float(gains.sum())
    return GreedyResult(
        boundaries=np.sort(chosen),
        chosen=chosen,
        gains=gains,
        objective=index.objective,
        elapsed=time.perf_counter() - t0,
        extra={"sample_size": t_full},
    )


def _classic_run(index: BoundaryIndex, steps: int) -> tuple[np.ndarray, np.ndarray]:
    # Inserting s only changes gains inside the block it splits, so one heap
    # entry per block (its best split) reproduces a full rescan exactly.
    chosen = np.empty(steps, dtype=np.int64)
    gains = np.empty(steps, dtype=np.float64)
    heap: list = []

    def push(a: int, b: int) -> None:
        if b - a < 2:
            return
        if index.block_is_constant(a, b):
            heapq.heappush(heap, (-0.0, a + 1, a, b, True))
            return
        s, g = index.block_argmax(a, b)
        heapq.heappush(heap, (-g, s, a, b, False))

    members = np.concatenate(([0], index.boundaries(), [index.n]))
    for a, b in zip(members[:-1], members[1:]):
        push(int(a), int(b))
    for it in range(steps):
        neg_g, s, a, b, constant = heapq.heappop(heap)
        g = index.insert(s)
        chosen[it] = s
        gains[it] = g
        if constant:
            # every split of a constant block gains nothing; keep taking the leftmost
            if b - s >= 2:
                heapq.heappush(heap, (-0.0, s + 1, s, b, True))
        else:
            push(a, s)
            push(s, b)
    return chosen, gains


def classic_greedy(index: BoundaryIndex, cfg: GreedyConfig) -> GreedyResult:
    """Deterministic greedy: each step inserts the best remaining split (smallest on ties)."""
    _require_fresh(index)
    t0 = time.perf_counter()
    steps = _steps_for(index, cfg.m)
    chosen, gains = _classic_run(index, steps)
    return GreedyResult(
        boundaries=np.sort(chosen),
        chosen=chosen,
        gains=gains,
        objective=index.objective,
        elapsed=time.perf_counter() - t0,
    )


def marginal_ranking(index: BoundaryIndex, limit: int) -> list[tuple[int, float]]:
    """Greedy insertion order of up to ``limit`` splits with their realised gains.

    Gains come out non-increasing, so any prefix is the greedy solution for
    that many clusters.
    """
    steps = max(0, min(int(limit), index.n - 1 - len(index)))
    chosen, gains = _classic_run(index, steps)
    return list(zip(chosen.tolist(), gains.tolist()))


def optimize(index: BoundaryIndex, cfg: GreedyConfig, rng: Optional[np.random.Generator] = None) -> GreedyResult:
    if cfg.mode == "classic":
        return classic_greedy(index, cfg)
    return stochastic_greedy(index, cfg, rng)
