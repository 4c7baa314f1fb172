"""Zipfian multi-feature count tables for benchmarks and tests.

Every simulated instance carries one value of every feature, so each
feature's counts add up to the same sample size.  Value frequencies follow
a Zipf law and each value's ``P(C=0 | x)`` is drawn from a two-component
Beta mixture: a concentrated bulk near the label prior plus a broad tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ingest import FeatureCounts, FeatureTable


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of :func:`generate_table`.

    Attributes
    ----------
    n : int
        Total vocabulary size summed over features.
    num_features : int
        Number of categorical features; vocabulary sizes decay geometrically
        over three orders of magnitude from the first to the last.
    zipf_exponent : float
        Exponent ``a`` of value frequencies ``~ rank^-a``.
    samples : int or None
        Instances per feature.  Defaults to ``10 * n``.
    seed : int
        Root seed; feature ``j`` uses an independent child stream.
    """

    n: int
    num_features: int = 1
    zipf_exponent: float = 1.1
    samples: int | None = None
    seed: int = 0
    bulk_weight: float = 0.7
    bulk_ab: tuple = (30.0, 10.0)
    tail_ab: tuple = (2.0, 2.0)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.num_features < 1:
            raise ValueError("num_features must be at least 1")
        if self.n < self.num_features:
            raise ValueError("n must be at least num_features (one value per feature)")
        if self.zipf_exponent < 0:
            raise ValueError("zipf_exponent must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.samples is not None and self.samples < max(self.vocab_sizes()):
            raise ValueError("samples must cover every value at least once")

    @property
    def sample_size(self) -> int:
        return self.samples if self.samples is not None else 10 * self.n

    def vocab_sizes(self) -> list[int]:
        f = self.num_features
        if f == 1:
            return [self.n]
        decay = math.log(1000.0) / (f - 1)
        w = np.exp(-decay * np.arange(f))
        extra = self.n - f
        sizes = 1 + np.floor(extra * w / w.sum()).astype(np.int64)
        sizes[0] += self.n - int(sizes.sum())
        return sizes.tolist()


def feature_name(j: int, num_features: int) -> str:
    width = max(2, len(str(num_features - 1)))
    return f"f{j:0{width}d}"


def _one_feature(rng: np.random.Generator, size: int, samples: int, cfg: SyntheticConfig):
    ranks = np.arange(1, size + 1, dtype=np.float64)
    w = ranks ** -cfg.zipf_exponent
    totals = 1 + rng.multinomial(samples - size, w / w.sum())
    # shuffle so frequency and conditional are independent of id order
    perm = rng.permutation(size)
    totals = totals[perm]
    bulk = rng.random(size) < cfg.bulk_weight
    cond = np.where(bulk, rng.beta(*cfg.bulk_ab, size=size), rng.beta(*cfg.tail_ab, size=size))
    c0 = rng.binomial(totals, cond)
    return c0.astype(np.int64), (totals - c0).astype(np.int64)


def generate_table(cfg: SyntheticConfig) -> FeatureTable:
    """Deterministic synthetic :class:`FeatureTable` for ``cfg``."""
    sizes = cfg.vocab_sizes()
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.num_features)
    features = {}
    for j, (size, ss) in enumerate(zip(sizes, children)):
        rng = np.random.Generator(np.random.Philox(ss))
        c0, c1 = _one_feature(rng, size, cfg.sample_size, cfg)
        name = feature_name(j, cfg.num_features)
        width = len(format(size - 1, "x"))
        ids = [format(i, f"0{width}x") for i in range(size)]
        features[name] = FeatureCounts(name, ids, c0, c1)
    return FeatureTable(features, dense=True)
