"""Compiled inner loops.

The ordered boundary set is a 32-ary bitset tree over positions ``0..n``:
level ``l + 1`` has a bit per non-empty word of level ``l``.  Predecessor and
successor walk up to the first level with a candidate bit and back down, so
both cost O(log_32 n), and level 0 is only n/8 bytes.  Prefix arrays may be
int64 counts or float64 masses; numba specialises each.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)

# conditionals closer than this are treated as equal
EQUAL_TOL = 1e-12


_DEBRUIJN = np.array(
    [0, 1, 28, 2, 29, 14, 24, 3, 30, 22, 20, 15, 25, 17, 4, 8,
     31, 27, 13, 23, 21, 19, 16, 7, 26, 12, 18, 6, 11, 5, 10, 9],
    dtype=np.int64,
)


def level_offsets(size: int) -> np.ndarray:
    """Word offsets of each level of a 32-ary bitset tree over ``size`` positions."""
    sizes = [max(1, -(-size // 32))]
    while sizes[-1] > 1:
        sizes.append(-(-sizes[-1] // 32))
    return np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)


@njit(**_JIT)
def _low_bit(x):
    return _DEBRUIJN[(((x & -x) * 0x077CB531) & 0xFFFFFFFF) >> 27]


@njit(**_JIT)
def _high_bit(x):
    r = 0
    if x >= 1 << 16:
        x >>= 16
        r += 16
    if x >= 1 << 8:
        x >>= 8
        r += 8
    if x >= 1 << 4:
        x >>= 4
        r += 4
    if x >= 1 << 2:
        x >>= 2
        r += 2
    if x >= 1 << 1:
        r += 1
    return r


@njit(**_JIT)
def set_add(words, offs, i):
    for lv in range(offs.shape[0] - 1):
        w = i >> 5
        words[offs[lv] + w] |= 1 << (i & 31)
        i = w


@njit(**_JIT)
def successor(words, offs, i):
    """Smallest member strictly greater than ``i``, or -1."""
    nlev = offs.shape[0] - 1
    lv = 0
    idx = i
    found = False
    while lv < nlev:
        w = idx >> 5
        word = words[offs[lv] + w] & ~((2 << (idx & 31)) - 1)
        if word != 0:
            idx = (w << 5) + _low_bit(word)
            found = True
            break
        idx = w
        lv += 1
    if not found:
        return -1
    while lv > 0:
        lv -= 1
        idx = (idx << 5) + _low_bit(words[offs[lv] + idx])
    return idx


@njit(**_JIT)
def predecessor(words, offs, i):
    """Largest member strictly smaller than ``i``, or -1."""
    nlev = offs.shape[0] - 1
    lv = 0
    idx = i
    found = False
    while lv < nlev:
        w = idx >> 5
        word = words[offs[lv] + w] & ((1 << (idx & 31)) - 1)
        if word != 0:
            idx = (w << 5) + _high_bit(word)
            found = True
            break
        idx = w
        lv += 1
    if not found:
        return -1
    while lv > 0:
        lv -= 1
        idx = (idx << 5) + _high_bit(words[offs[lv] + idx])
    return idx


@njit(**_JIT)
def _kl(a, b):
    r = 0.0
    if a > 0.0:
        r += a * math.log(a / b)
    if a < 1.0:
        r += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return r


@njit(**_JIT)
def _entropy(t):
    r = 0.0
    if t > 0.0:
        r -= t * math.log(t)
    if t < 1.0:
        r -= (1.0 - t) * math.log(1.0 - t)
    return r


@njit(**_JIT)
def split_gain(cc, c0, a, s, b, total):
    """Nats gained by splitting block ``(a, b]`` at ``s``; prefixes ``cc`` (all) and ``c0`` (label 0)."""
    pm = cc[s] - cc[a]
    qm = cc[b] - cc[s]
    pj = c0[s] - c0[a]
    qj = c0[b] - c0[s]
    alpha = min(max(pj / pm, 0.0), 1.0)
    beta = min(max(qj / qm, 0.0), 1.0)
    # float prefixes leave rounding noise in equal conditionals
    if abs(alpha - beta) <= EQUAL_TOL:
        return 0.0
    mu = (pj + qj) / (pm + qm)
    lo = min(alpha, beta)
    hi = max(alpha, beta)
    if mu < lo:
        mu = lo
    elif mu > hi:
        mu = hi
    if mu <= 0.0 or mu >= 1.0:
        # one side is negligibly light; the entropy form stays finite
        g = ((pm + qm) * _entropy(mu) - pm * _entropy(alpha) - qm * _entropy(beta)) / total
    else:
        g = (pm * _kl(alpha, mu) + qm * _kl(beta, mu)) / total
    if g < 0.0:
        return 0.0
    return g


@njit(**_JIT)
def query_gain(cc, c0, total, words, offs, s):
    a = predecessor(words, offs, s)
    b = successor(words, offs, s)
    return split_gain(cc, c0, a, s, b, total)


@njit(**_JIT)
def block_gains(cc, c0, total, a, b):
    """Gains of every split strictly inside block ``(a, b]`` with no other members."""
    out = np.empty(max(b - a - 1, 0), dtype=np.float64)
    for s in range(a + 1, b):
        out[s - a - 1] = split_gain(cc, c0, a, s, b, total)
    return out


@njit(**_JIT)
def block_argmax(cc, c0, total, a, b):
    """Best split inside ``(a, b]``; ties go to the smallest position."""
    best = -1
    best_g = -1.0
    for s in range(a + 1, b):
        g = split_gain(cc, c0, a, s, b, total)
        if g > best_g:
            best_g = g
            best = s
    return best, best_g


@njit(**_JIT)
def stochastic_run(cc, c0, total, words, offs, in_set, remaining, pos, n_rem, t_full, u, u_pos, chosen, gains, it):
    """Stochastic-greedy iterations ``it .. len(chosen) - 1``.

    Each iteration draws ``min(t_full, n_rem)`` candidates without replacement
    from ``remaining[:n_rem]`` by a partial Fisher-Yates shuffle driven by the
    uniforms in ``u`` (none are consumed when every candidate is taken), then
    inserts the best, smallest position on ties.  Returns early with the
    current ``(it, n_rem, u_pos)`` when ``u`` runs short.
    """
    steps = chosen.shape[0]
    while it < steps:
        t = min(t_full, n_rem)
        if t < n_rem:
            if u_pos + t > u.shape[0]:
                break
            for i in range(t):
                j = i + int(u[u_pos + i] * (n_rem - i))
                if j >= n_rem:
                    j = n_rem - 1
                vi = remaining[i]
                vj = remaining[j]
                remaining[i] = vj
                remaining[j] = vi
                pos[vj] = i
                pos[vi] = j
            u_pos += t
        best = -1
        best_g = -1.0
        for i in range(t):
            s = remaining[i]
            g = query_gain(cc, c0, total, words, offs, s)
            if g > best_g or (g == best_g and s < best):
                best_g = g
                best = s
        set_add(words, offs, best)
        in_set[best] = True
        k = pos[best]
        last = remaining[n_rem - 1]
        remaining[k] = last
        pos[last] = k
        remaining[n_rem - 1] = best
        pos[best] = n_rem - 1
        n_rem -= 1
        chosen[it] = best
        gains[it] = best_g
        it += 1
    return it, n_rem, u_pos


@njit(**_JIT)
def threshold_scan(cc, c0, total, words, offs, in_set, threshold, limit, out_s, out_g):
    """Ascending pass inserting every split whose current gain clears ``threshold``.

    Stops after ``limit`` insertions.  Gains are in nats.  Returns the number
    inserted; positions and gains are written to ``out_s`` / ``out_g``.
    """
    n = cc.shape[0] - 1
    a = 0
    b = successor(words, offs, 0)
    count = 0
    s = 1
    while s < n and count < limit:
        if in_set[s]:
            a = s
            b = successor(words, offs, s)
            s += 1
            continue
        assert 0 <= a < s < b <= n
        g = split_gain(cc, c0, a, s, b, total)
        if g >= threshold:
            set_add(words, offs, s)
            in_set[s] = True
            out_s[count] = s
            out_g[count] = g
            count += 1
            a = s
        s += 1
    return count
