"""Count-table ingestion and maximum-likelihood estimation.

Input is aggregated per (feature, value): how often the value was seen with
label 0 and with label 1.  ``estimate_distribution`` turns one feature's
counts into a :class:`SortedFeature`, the value list ordered by
``P(C=0 | X=x)`` that every optimizer in this package works on.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np


class ParseError(ValueError):
    """A line of the count table could not be parsed."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class CountValidationError(ValueError):
    """Counts are well formed but not acceptable (e.g. negative)."""


@dataclass(frozen=True)
class LabeledCountRecord:
    feature_name: str
    value_id: str
    count_c0: int
    count_c1: int


@dataclass
class FeatureCounts:
    """All values of one feature, in first-seen order."""

    name: str
    value_ids: list
    count_c0: np.ndarray
    count_c1: np.ndarray

    @property
    def n(self) -> int:
        return len(self.value_ids)

    @property
    def totals(self) -> np.ndarray:
        return self.count_c0 + self.count_c1

    @property
    def total_instances(self) -> int:
        return int(self.totals.sum())

    def records(self) -> list[LabeledCountRecord]:
        return [
            LabeledCountRecord(self.name, v, int(a), int(b))
            for v, a, b in zip(self.value_ids, self.count_c0, self.count_c1)
        ]


@dataclass
class FeatureTable:
    """Aggregated counts grouped by feature name.

    ``total_instances`` is the sample size k.  For sparse data (not every
    instance carries every feature) each feature's own total is used as its k
    instead; see :meth:`feature_total`.
    """

    features: dict = field(default_factory=dict)
    dense: bool = False

    @property
    def feature_names(self) -> list[str]:
        return sorted(self.features)

    @property
    def total_instances(self) -> int:
        if not self.features:
            return 0
        return max(fc.total_instances for fc in self.features.values())

    def feature_total(self, name: str) -> int:
        return self[name].total_instances

    def __getitem__(self, name: str) -> FeatureCounts:
        try:
            return self.features[name]
        except KeyError:
            raise KeyError(f"unknown feature {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.features

    def __len__(self) -> int:
        return len(self.features)

    def records(self) -> list[LabeledCountRecord]:
        out = []
        for name in self.feature_names:
            out.extend(self.features[name].records())
        return out

    def validate_dense(self) -> None:
        """Check that every feature sums to the same instance count."""
        totals = {name: fc.total_instances for name, fc in self.features.items()}
        if len(set(totals.values())) > 1:
            raise CountValidationError(
                f"dense table expected but per-feature totals differ: {totals}"
            )

    @classmethod
    def from_records(cls, records: Iterable[LabeledCountRecord], dense: bool = False) -> "FeatureTable":
        merged: dict[str, dict[str, list[int]]] = {}
        for r in records:
            if r.count_c0 < 0 or r.count_c1 < 0:
                raise CountValidationError(
                    f"negative count for ({r.feature_name!r}, {r.value_id!r})"
                )
            slot = merged.setdefault(r.feature_name, {}).setdefault(r.value_id, [0, 0])
            slot[0] += r.count_c0
            slot[1] += r.count_c1
        return cls._from_merged(merged, dense)

    @classmethod
    def _from_merged(cls, merged: dict, dense: bool) -> "FeatureTable":
        features = {}
        for name, values in merged.items():
            ids = [v for v, (a, b) in values.items() if a + b > 0]
            if not ids:
                continue
            c0 = np.fromiter((values[v][0] for v in ids), dtype=np.int64, count=len(ids))
            c1 = np.fromiter((values[v][1] for v in ids), dtype=np.int64, count=len(ids))
            features[name] = FeatureCounts(name, ids, c0, c1)
        table = cls(features, dense)
        if dense:
            table.validate_dense()
        return table


def _parse_count(token: str, lineno: int) -> int:
    tok = token.strip()
    body = tok[1:] if tok[:1] in "+-" else tok
    if not body.isdigit() or not body.isascii():
        raise ParseError(lineno, f"count {token!r} is not a base-10 integer")
    return int(tok)


def parse_counts(stream: Union[TextIO, Iterable[str], str], dense: bool = False) -> FeatureTable:
    """Parse ``feature<TAB>value<TAB>count_c0<TAB>count_c1`` lines.

    Lines starting with ``#`` and blank lines are skipped.  Duplicate
    (feature, value) pairs are summed and all-zero records dropped.

    Raises
    ------
    ParseError
        A line does not have four tab-separated fields or a count is not an
        integer.
    CountValidationError
        A count is negative.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    merged: dict[str, dict[str, list[int]]] = {}
    last_feature, fmap = None, None
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line or line[0] == "#" or not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(lineno, f"expected 4 tab-separated fields, got {len(parts)}")
        feature, value, s0, s1 = parts
        if not feature:
            raise ParseError(lineno, "empty feature name")
        c0 = int(s0) if s0.isdigit() and s0.isascii() else _parse_count(s0, lineno)
        c1 = int(s1) if s1.isdigit() and s1.isascii() else _parse_count(s1, lineno)
        if c0 < 0 or c1 < 0:
            raise CountValidationError(f"line {lineno}: negative count")
        if feature != last_feature:
            fmap = merged.setdefault(feature, {})
            last_feature = feature
        slot = fmap.get(value)
        if slot is None:
            fmap[value] = [c0, c1]
        else:
            slot[0] += c0
            slot[1] += c1
    return FeatureTable._from_merged(merged, dense)


def read_counts(path: Union[str, os.PathLike], dense: bool = False) -> FeatureTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_counts(fh, dense=dense)


def write_counts(table: FeatureTable, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name in table.feature_names:
            fc = table[name]
            for v, a, b in zip(fc.value_ids, fc.count_c0.tolist(), fc.count_c1.tolist()):
                fh.write(f"{name}\t{v}\t{a}\t{b}\n")


@dataclass(frozen=True, eq=False)
class SortedFeature:
    """One feature's values sorted ascending by ``P(C=0 | X=x)``.

    Attributes
    ----------
    p_x : np.ndarray
        ``P(X = x_i)`` in sorted order; strictly positive, sums to one.
    cond : np.ndarray
        ``P(C = 0 | X = x_i)``, non-decreasing.
    order : np.ndarray
        ``order[i]`` is the position of sorted value ``i`` in the input
        sequence the feature was built from.
    count_c0, count_c1 : np.ndarray or None
        Integer counts in sorted order when the feature came from counts.
        The boundary index uses them for exact prefix sums.
    """

    name: str
    p_x: np.ndarray
    cond: np.ndarray
    order: np.ndarray
    value_ids: Optional[Sequence] = None
    count_c0: Optional[np.ndarray] = None
    count_c1: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.p_x.shape[0])

    @property
    def p0(self) -> float:
        if self.has_counts:
            return float(self.count_c0.sum()) / float(self.total_count)
        return float(np.dot(self.p_x, self.cond))

    @property
    def has_counts(self) -> bool:
        return self.count_c0 is not None

    @property
    def total_count(self) -> int:
        if not self.has_counts:
            raise AttributeError("feature was not built from counts")
        return int(self.count_c0.sum() + self.count_c1.sum())

    @property
    def degenerate(self) -> bool:
        p0 = self.p0
        return p0 <= 0.0 or p0 >= 1.0

    @classmethod
    def from_counts(
        cls,
        count_c0,
        count_c1,
        value_ids: Optional[Sequence] = None,
        name: str = "",
    ) -> "SortedFeature":
        c0 = np.asarray(count_c0, dtype=np.int64)
        c1 = np.asarray(count_c1, dtype=np.int64)
        if c0.shape != c1.shape or c0.ndim != 1:
            raise ValueError("count arrays must be 1-D and of equal length")
        if c0.size == 0:
            raise ValueError("feature has no values")
        if (c0 < 0).any() or (c1 < 0).any():
            raise CountValidationError("negative count")
        tot = c0 + c1
        if (tot <= 0).any():
            raise CountValidationError("every value needs a positive count")
        cond = c0 / tot
        order = _sort_order(cond, value_ids)
        total = float(tot.sum())
        ids = None if value_ids is None else [value_ids[i] for i in order]
        return cls(
            name=name,
            p_x=tot[order] / total,
            cond=cond[order],
            order=order,
            value_ids=ids,
            count_c0=c0[order],
            count_c1=c1[order],
        )

    @classmethod
    def from_probabilities(
        cls,
        p_x,
        cond,
        value_ids: Optional[Sequence] = None,
        name: str = "",
    ) -> "SortedFeature":
        p = np.asarray(p_x, dtype=np.float64)
        c = np.asarray(cond, dtype=np.float64)
        if p.shape != c.shape or p.ndim != 1 or p.size == 0:
            raise ValueError("p_x and cond must be non-empty 1-D arrays of equal length")
        if (p <= 0).any():
            raise ValueError("every P(X=x) must be positive")
        if (c < 0).any() or (c > 1).any():
            raise ValueError("conditionals must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            p = p / p.sum()
        order = _sort_order(c, value_ids)
        ids = None if value_ids is None else [value_ids[i] for i in order]
        return cls(name=name, p_x=p[order], cond=c[order], order=order, value_ids=ids)


def _sort_order(cond: np.ndarray, value_ids: Optional[Sequence]) -> np.ndarray:
    # ties in cond broken by value id ascending (input position when ids absent)
    if value_ids is None:
        return np.lexsort((np.arange(cond.size), cond))
    if len(value_ids) != cond.size:
        raise ValueError("value_ids length does not match counts")
    id_rank = np.empty(cond.size, dtype=np.int64)
    id_rank[np.argsort(np.asarray(value_ids, dtype=object), kind="stable")] = np.arange(cond.size)
    return np.lexsort((id_rank, cond))


def estimate_distribution(table: FeatureTable, feature: str, min_count: int = 1) -> SortedFeature:
    """MLE ``P(X=x)`` and ``P(C=0|X=x)`` for one feature, sorted by the latter.

    Values seen fewer than ``min_count`` times are dropped before
    normalisation, so the surviving total plays the role of the sample size.
    """
    if min_count < 0:
        raise ValueError("min_count must be non-negative")
    fc = table[feature]
    keep = fc.totals >= max(min_count, 1)
    if not keep.any():
        raise ValueError(f"feature {feature!r} is empty after min_count={min_count} filtering")
    idx = np.flatnonzero(keep)
    ids = [fc.value_ids[i] for i in idx]
    return SortedFeature.from_counts(fc.count_c0[idx], fc.count_c1[idx], value_ids=ids, name=feature)
