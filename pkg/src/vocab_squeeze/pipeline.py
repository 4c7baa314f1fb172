"""End-to-end compression runs: counts in, value-to-cluster mappings and reports out.

Each method yields one :class:`~vocab_squeeze.mi.CompressionMap` per feature
over its sorted values.  Values removed by ``min_count`` are sent to an OOV
cluster in the written mapping; all MI figures refer to the surviving values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from ._parallel import ordered_map
from .allocator import (
    BudgetError,
    allocate_global_submodular,
    allocate_mi_proportional,
    allocate_uniform,
    average_mi_loss,
    feature_rankings,
)
from .baselines import bucketing, divisive_cluster, frequency_filter, frequency_filter_global
from .boundary_index import BoundaryIndex
from .distributed import plan_shards, run_threshold_rounds
from .greedy import GreedyConfig, stochastic_greedy
from .ingest import FeatureTable, SortedFeature, estimate_distribution
from .mi import CompressionMap, mutual_information, partition_mi

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

METHODS = ("submodular", "submodular-distributed", "bucketing", "frequency", "divisive")
ALLOCATIONS = ("global", "uniform", "mi")
GLOBAL_METHODS = ("submodular", "frequency")
DEFAULT_ALLOCATION = {
    "submodular": "global",
    "submodular-distributed": "uniform",
    "bucketing": "uniform",
    "frequency": "global",
    "divisive": "uniform",
}
LOG_BASES = {"2": 2.0, "e": math.e}


class ConfigError(ValueError):
    pass


def parse_log_base(token: str) -> float:
    try:
        return LOG_BASES[str(token)]
    except KeyError:
        raise ConfigError(f"log base must be one of {sorted(LOG_BASES)}, got {token!r}") from None


def log_base_name(base: float) -> str:
    return "e" if base == math.e else format(base, "g")


@dataclass(frozen=True)
class RunConfig:
    method: str
    budget: int
    allocation: Optional[str] = None
    epsilon: float = 0.05
    seed: int = 0
    log_base: float = 2.0
    min_count: int = 1
    shards: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.allocation is not None and self.allocation not in ALLOCATIONS:
            raise ConfigError(f"unknown allocation {self.allocation!r}; choose from {', '.join(ALLOCATIONS)}")
        if self.resolved_allocation == "global" and self.method not in GLOBAL_METHODS:
            raise ConfigError(f"method {self.method!r} has no global allocation; use uniform or mi")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.min_count < 0:
            raise ConfigError("min_count must be non-negative")
        if self.shards is not None and self.shards < 1:
            raise ConfigError("shards must be at least 1")
        if self.log_base not in LOG_BASES.values():
            raise ConfigError("log base must be 2 or e")

    @property
    def resolved_allocation(self) -> str:
        return self.allocation or DEFAULT_ALLOCATION[self.method]

    def params(self) -> dict:
        return {
            "allocation": self.resolved_allocation,
            "budget": self.budget,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "log_base": log_base_name(self.log_base),
            "min_count": self.min_count,
            "shards": "auto" if self.shards is None else self.shards,
        }


@dataclass
class LoadedFeature:
    """A feature's surviving values plus the ids ``min_count`` removed."""

    feature: SortedFeature
    dropped: list
    n_input: int


def load_features(table: FeatureTable, min_count: int = 1) -> list[LoadedFeature]:
    out = []
    for name in table.feature_names:
        fc = table[name]
        feat = estimate_distribution(table, name, min_count)
        keep = fc.totals >= max(min_count, 1)
        dropped = [v for v, k in zip(fc.value_ids, keep.tolist()) if not k]
        out.append(LoadedFeature(feat, dropped, fc.n))
    return out


def feature_rng(seed: int, name: str) -> np.random.Generator:
    """Counter-based stream for one feature, independent of processing order."""
    key = int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "little")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,))))


@dataclass
class FeatureResult:
    loaded: LoadedFeature
    cmap: CompressionMap
    mi_before: float
    mi_after: float
    extra: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.loaded.feature.name

    @property
    def num_clusters(self) -> int:
        """Cluster ids in the written mapping, including a ``min_count`` OOV cluster."""
        extra = 1 if self.loaded.dropped and self.cmap.oov_cluster is None else 0
        return self.cmap.num_clusters + extra


@dataclass
class CompressionResult:
    config: RunConfig
    features: list
    elapsed: float = 0.0

    @property
    def avg_mi_loss(self) -> Optional[float]:
        before = [f.mi_before for f in self.features]
        if sum(before) <= 0:
            return None
        return average_mi_loss(before, [f.mi_after for f in self.features])

    @property
    def vocab_size(self) -> int:
        return sum(f.num_clusters for f in self.features)

    def report(self, record_time: bool = False) -> dict:
        rep = {
            "method": self.config.method,
            "params": self.config.params(),
            "avg_mi_loss": self.avg_mi_loss,
            "per_feature": {
                f.name: {
                    "n": f.loaded.n_input,
                    "m": f.num_clusters,
                    "mi_before_bits": f.mi_before,
                    "mi_after_bits": f.mi_after,
                }
                for f in self.features
            },
        }
        if record_time:
            rep["wall_time_ms"] = round(self.elapsed * 1000.0, 3)
        return rep


# -- per-feature methods ----------------------------------------------------


def _trivial(feat: SortedFeature, m: int) -> Optional[CompressionMap]:
    if m >= feat.n:
        return CompressionMap.identity(feat.n)
    if m <= 1 or feat.degenerate:
        # no label information to keep: one cluster is optimal
        return CompressionMap.single(feat.n)
    return None


def _submodular(feat: SortedFeature, m: int, cfg: RunConfig) -> CompressionMap:
    cmap = _trivial(feat, m)
    if cmap is not None:
        return cmap
    res = stochastic_greedy(
        BoundaryIndex.build(feat, cfg.log_base),
        GreedyConfig(m, cfg.epsilon, cfg.seed),
        rng=feature_rng(cfg.seed, feat.name),
    )
    return CompressionMap.from_boundaries(res.boundaries, feat.n)


def _distributed(feat: SortedFeature, m: int, cfg: RunConfig, trace: Optional[TextIO]) -> CompressionMap:
    cmap = _trivial(feat, m)
    if cmap is not None:
        return cmap
    plan = plan_shards(feat, m - 1, cfg.epsilon, cfg.shards)
    res = run_threshold_rounds(plan, feat, cfg.log_base, trace=trace, workers=1)
    return CompressionMap.from_boundaries(res.boundaries, feat.n)


def _bucketing(feat: SortedFeature, m: int, cfg: RunConfig) -> CompressionMap:
    cmap = _trivial(feat, m)
    if cmap is not None:
        return cmap
    return bucketing(feat, m, cfg.log_base).cmap.densified()


def _frequency(feat: SortedFeature, m: int, cfg: RunConfig) -> CompressionMap:
    if m >= feat.n:
        return CompressionMap.identity(feat.n)
    # m - 1 retained values plus the OOV cluster
    return frequency_filter(feat, m - 1).cmap


def _divisive(feat: SortedFeature, m: int, cfg: RunConfig) -> CompressionMap:
    cmap = _trivial(feat, m)
    if cmap is not None:
        return cmap
    return divisive_cluster(feat, m, seed=cfg.seed, log_base=cfg.log_base).cmap.densified()


def per_feature_budgets(feats: Sequence[SortedFeature], cfg: RunConfig, mi: Sequence[float]) -> dict[str, int]:
    if cfg.resolved_allocation == "uniform":
        return allocate_uniform(feats, cfg.budget)
    return allocate_mi_proportional(feats, cfg.budget, cfg.log_base, mi=mi)


def compress(
    loaded: Sequence[LoadedFeature],
    cfg: RunConfig,
    rankings: Optional[dict] = None,
    workers: Optional[int] = None,
    trace: Optional[TextIO] = None,
) -> CompressionResult:
    """Run ``cfg.method`` under ``cfg``'s allocation across all features.

    ``rankings`` (from :func:`~vocab_squeeze.allocator.feature_rankings`) may
    be passed to reuse greedy orders across budgets; they must cover at least
    ``budget - #features`` splits per feature.
    """
    t0 = time.perf_counter()
    loaded = sorted(loaded, key=lambda lf: lf.feature.name)
    feats = [lf.feature for lf in loaded]
    if len({f.name for f in feats}) != len(feats):
        raise ConfigError("feature names must be unique")
    if cfg.budget < len(feats):
        raise BudgetError(f"budget {cfg.budget} is below one cluster per feature ({len(feats)})")
    mi = ordered_map(lambda f: mutual_information(f, cfg.log_base), feats, workers)
    alloc = cfg.resolved_allocation
    maps: list[CompressionMap]
    if alloc == "global" and cfg.method == "submodular":
        chosen, _ = allocate_global_submodular(feats, cfg.budget, cfg.log_base, rankings, workers)
        maps = [CompressionMap.from_boundaries(chosen[f.name], f.n) for f in feats]
    elif alloc == "global":
        maps = _global_frequency(feats, cfg.budget)
    else:
        budgets = per_feature_budgets(feats, cfg, mi)
        if cfg.method == "submodular-distributed":
            maps = _run_distributed(feats, budgets, cfg, trace, workers)
        else:
            fn = {"submodular": _submodular, "bucketing": _bucketing, "frequency": _frequency, "divisive": _divisive}[
                cfg.method
            ]
            maps = ordered_map(lambda f: fn(f, budgets[f.name], cfg), feats, workers)
    after = ordered_map(lambda fm: partition_mi(fm[0], fm[1], cfg.log_base), list(zip(feats, maps)), workers)
    to_bits = math.log2(cfg.log_base)
    results = [
        FeatureResult(lf, cmap, float(b * to_bits), float(a * to_bits))
        for lf, cmap, b, a in zip(loaded, maps, mi, after)
    ]
    return CompressionResult(cfg, results, time.perf_counter() - t0)


def _global_frequency(feats: Sequence[SortedFeature], budget: int) -> list[CompressionMap]:
    total = sum(f.n for f in feats)
    if budget >= total:
        return [CompressionMap.identity(f.n) for f in feats]
    # one slot per feature is reserved for its OOV cluster
    res = frequency_filter_global(feats, budget - len(feats))
    return [res[f.name].cmap for f in feats]


def _run_distributed(feats, budgets, cfg, trace, workers) -> list[CompressionMap]:
    buffers = [io.StringIO() if trace is not None else None for _ in feats]
    maps = ordered_map(
        lambda fb: _distributed(fb[0], budgets[fb[0].name], cfg, fb[1]), list(zip(feats, buffers)), workers
    )
    if trace is not None:
        # serialise per-feature traces in name order, tagging each line
        for f, buf in zip(feats, buffers):
            for line in buf.getvalue().splitlines():
                rec = json.loads(line)
                trace.write(json.dumps({"feature": f.name, **rec}) + "\n")
    return maps


# -- mapping files ----------------------------------------------------------


def mapping_rows(result: CompressionResult) -> Iterable[tuple[str, str, int]]:
    """``(feature, value, cluster_id)`` for every input value, sorted by feature then value."""
    for fr in result.features:
        feat, cmap = fr.loaded.feature, fr.cmap
        oov = cmap.oov_cluster if cmap.oov_cluster is not None else cmap.num_clusters
        rows = {v: int(c) for v, c in zip(feat.value_ids, cmap.cluster_of.tolist())}
        for v in fr.loaded.dropped:
            rows[v] = oov
        for v in sorted(rows):
            yield fr.name, v, rows[v]


def write_mapping(result: CompressionResult, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, value, cid in mapping_rows(result):
            fh.write(f"{name}\t{value}\t{cid}\n")


def read_mapping(path: PathLike) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ConfigError(f"mapping line {lineno}: expected 3 tab-separated fields")
            name, value, cid = parts
            try:
                c = int(cid)
            except ValueError:
                raise ConfigError(f"mapping line {lineno}: cluster id {cid!r} is not an integer") from None
            if c < 0:
                raise ConfigError(f"mapping line {lineno}: negative cluster id")
            feat = out.setdefault(name, {})
            if value in feat:
                raise ConfigError(f"mapping line {lineno}: duplicate value {value!r} for feature {name!r}")
            feat[value] = c
    return out


def write_report(report: dict, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def evaluate_mapping(
    table: FeatureTable,
    mapping: dict[str, dict[str, int]],
    min_count: int = 1,
    log_base: float = 2.0,
) -> dict:
    """Recompute per-feature MI and the average loss from a mapping file alone."""
    per = {}
    before, after = [], []
    to_bits = math.log2(log_base)
    for lf in load_features(table, min_count):
        feat = lf.feature
        fmap = mapping.get(feat.name)
        if fmap is None:
            raise ConfigError(f"mapping has no entries for feature {feat.name!r}")
        missing = [v for v in feat.value_ids if v not in fmap]
        if missing:
            raise ConfigError(f"feature {feat.name!r}: {len(missing)} values are unmapped, e.g. {missing[0]!r}")
        raw = np.array([fmap[v] for v in feat.value_ids], dtype=np.int64)
        ids, dense = np.unique(raw, return_inverse=True)
        cmap = CompressionMap(dense, int(ids.size))
        b = mutual_information(feat, log_base) * to_bits
        a = partition_mi(feat, cmap, log_base) * to_bits
        before.append(b)
        after.append(a)
        per[feat.name] = {
            "n": lf.n_input,
            "m": len(set(fmap.values())),
            "mi_before_bits": b,
            "mi_after_bits": a,
        }
    loss = average_mi_loss(before, after) if sum(before) > 0 else None
    return {"per_feature": per, "avg_mi_loss": loss}


# -- comparison sweeps ------------------------------------------------------

COMPARE_FIELDS = ("method", "allocation", "budget", "avg_mi_loss", "vocab_size", "status")


def compare(
    loaded: Sequence[LoadedFeature],
    methods: Sequence[str],
    budgets: Sequence[int],
    allocations: Optional[Sequence[str]] = None,
    base: Optional[RunConfig] = None,
    workers: Optional[int] = None,
) -> list[dict]:
    """One row per (method, allocation, budget); failing cells are recorded, not raised.

    Global submodular rankings are computed once at the largest budget and
    shared by every smaller one.
    """
    if not methods:
        raise ConfigError("at least one method is required")
    if not budgets:
        raise ConfigError("at least one budget is required")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    feats = sorted((lf.feature for lf in loaded), key=lambda f: f.name)
    base_kw = {} if base is None else {
        "epsilon": base.epsilon,
        "seed": base.seed,
        "log_base": base.log_base,
        "min_count": base.min_count,
        "shards": base.shards,
    }
    log_base = base_kw.get("log_base", 2.0)
    rankings = None
    rows = []
    for method in methods:
        for alloc in allocations or [DEFAULT_ALLOCATION[method]]:
            for budget in budgets:
                row = {"method": method, "allocation": alloc, "budget": int(budget),
                       "avg_mi_loss": None, "vocab_size": None, "status": "ok"}
                try:
                    cfg = RunConfig(method, int(budget), alloc, **base_kw)
                    cell_rankings = None
                    if method == "submodular" and cfg.resolved_allocation == "global":
                        if rankings is None:
                            limit = max(max(budgets) - len(feats), 0)
                            rankings = feature_rankings(feats, limit, log_base, workers)
                        cell_rankings = rankings
                    res = compress(loaded, cfg, rankings=cell_rankings, workers=workers)
                    row["avg_mi_loss"] = res.avg_mi_loss
                    row["vocab_size"] = res.vocab_size
                except (ValueError, KeyError) as exc:
                    logger.warning("cell %s/%s/%s failed: %s", method, alloc, budget, exc)
                    row["status"] = f"error: {exc}"
                rows.append(row)
    return rows


def write_compare_csv(rows: Sequence[dict], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            out = dict(r)
            out["avg_mi_loss"] = "" if r["avg_mi_loss"] is None else repr(float(r["avg_mi_loss"]))
            out["vocab_size"] = "" if r["vocab_size"] is None else r["vocab_size"]
            w.writerow(out)


def read_compare_csv(path: PathLike) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["budget"] = int(r["budget"])
        r["avg_mi_loss"] = float(r["avg_mi_loss"]) if r["avg_mi_loss"] else None
        r["vocab_size"] = int(r["vocab_size"]) if r["vocab_size"] else None
    return rows
