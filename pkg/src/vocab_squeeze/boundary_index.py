"""Incremental marginal-gain index over a growing boundary set.

Prefix tables of total and label-0 mass make the gain of any split a
constant-time expression once its two neighbouring boundaries are known; the
neighbours come from an ordered set with logarithmic predecessor/successor.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .ingest import SortedFeature
from .mi import log_scale


class BoundaryError(ValueError):
    pass


class BoundaryIndex:
    """Ordered boundary set ``S`` (always containing ``0`` and ``n``) plus prefix tables.

    Parameters
    ----------
    cum_count, cum_c0 : np.ndarray
        Length ``n + 1`` prefix sums of value mass and label-0 mass.  Integer
        counts give exact block sums; floats are accepted as a fallback.
    total : float
        Normaliser turning prefix differences into probabilities.
    log_base : float
        Units of every gain and of :attr:`objective`.
    """

    def __init__(self, cum_count, cum_c0, total, log_base: float = 2.0):
        cc = np.ascontiguousarray(cum_count)
        c0 = np.ascontiguousarray(cum_c0)
        if cc.shape != c0.shape or cc.ndim != 1 or cc.size < 2:
            raise BoundaryError("prefix tables must be 1-D of length n + 1 >= 2")
        if cc.dtype.kind != c0.dtype.kind:
            c0 = c0.astype(cc.dtype)
        self._cc = cc
        self._c0 = c0
        self.total = float(total)
        self.n = int(cc.size - 1)
        self.log_base = log_base
        self.scale = log_scale(log_base)
        self._in_set = np.zeros(self.n + 1, dtype=np.bool_)
        self._in_set[0] = self._in_set[self.n] = True
        self._offs = K.level_offsets(self.n + 1)
        self._words = np.zeros(int(self._offs[-1]), dtype=np.int64)
        K.set_add(self._words, self._offs, 0)
        K.set_add(self._words, self._offs, self.n)
        self._size = 0
        self.objective = 0.0

    @classmethod
    def build(cls, feat: SortedFeature, log_base: float = 2.0) -> "BoundaryIndex":
        if feat.n == 0:
            raise BoundaryError("empty feature")
        if feat.has_counts:
            tot = feat.count_c0 + feat.count_c1
            cc = np.concatenate(([0], np.cumsum(tot)))
            c0 = np.concatenate(([0], np.cumsum(feat.count_c0)))
            total = float(cc[-1])
        else:
            cc = np.concatenate(([0.0], np.cumsum(feat.p_x)))
            c0 = np.concatenate(([0.0], np.cumsum(feat.p_x * feat.cond)))
            total = float(cc[-1])
        return cls(cc, c0, total, log_base)

    # -- prefix tables -------------------------------------------------------

    @property
    def cum_mass(self) -> np.ndarray:
        """``P(X <= x_i)`` for ``i = 0..n`` (``p_{<i+1}`` in 1-based terms)."""
        return self._cc / self.total

    @property
    def cum_c0_mass(self) -> np.ndarray:
        """``P(X <= x_i, C = 0)`` for ``i = 0..n``."""
        return self._c0 / self.total

    @property
    def prefix_entries(self) -> int:
        return int(self._cc.size)

    # -- ordered set ---------------------------------------------------------

    def __len__(self) -> int:
        """Number of interior boundaries."""
        return self._size

    def __contains__(self, s: int) -> bool:
        return 0 <= s <= self.n and bool(self._in_set[s])

    def boundaries(self) -> np.ndarray:
        """Interior boundaries in increasing order."""
        return np.flatnonzero(self._in_set[1 : self.n]).astype(np.int64) + 1

    def neighbors(self, s: int) -> tuple[int, int]:
        """Closest members strictly below and strictly above ``s``."""
        s = int(s)
        if not 0 < s < self.n:
            if s == 0:
                return 0, int(K.successor(self._words, self._offs, 0))
            if s == self.n:
                return int(K.predecessor(self._words, self._offs, s)), self.n
            raise BoundaryError(f"position {s} outside [0, {self.n}]")
        return int(K.predecessor(self._words, self._offs, s)), int(K.successor(self._words, self._offs, s))

    def _check_candidate(self, s: int) -> int:
        s = int(s)
        if not 1 <= s <= self.n - 1:
            raise BoundaryError(f"candidate {s} outside [1, {self.n - 1}]")
        if self._in_set[s]:
            raise BoundaryError(f"boundary {s} already present")
        return s

    def query_gain(self, s: int) -> float:
        """``F(S + {s}) - F(S)``; leaves the index untouched."""
        s = self._check_candidate(s)
        return K.query_gain(self._cc, self._c0, self.total, self._words, self._offs, s) * self.scale

    def insert(self, s: int) -> float:
        """Add ``s`` to ``S`` and return the gain it realised."""
        s = self._check_candidate(s)
        g = K.query_gain(self._cc, self._c0, self.total, self._words, self._offs, s) * self.scale
        K.set_add(self._words, self._offs, s)
        self._in_set[s] = True
        self._size += 1
        self.objective += g
        return g

    def block_gains(self, a: int, b: int) -> np.ndarray:
        """Gains of all splits strictly between adjacent members ``a < b``."""
        return K.block_gains(self._cc, self._c0, self.total, int(a), int(b)) * self.scale

    def block_argmax(self, a: int, b: int) -> tuple[int, float]:
        s, g = K.block_argmax(self._cc, self._c0, self.total, int(a), int(b))
        return int(s), g * self.scale

    def block_is_constant(self, a: int, b: int) -> bool:
        """True when every value in ``(a, b]`` has the same conditional (within ``EQUAL_TOL``)."""
        cc, c0 = self._cc, self._c0
        first = (c0[a + 1] - c0[a]) / (cc[a + 1] - cc[a])
        last = (c0[b] - c0[b - 1]) / (cc[b] - cc[b - 1])
        return abs(first - last) <= K.EQUAL_TOL
