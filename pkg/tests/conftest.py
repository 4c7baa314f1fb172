from __future__ import annotations

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from vocab_squeeze.ingest import SortedFeature  # noqa: E402


def random_feature(rng: np.random.Generator, n: int, counts: bool = False, ties: bool = False) -> SortedFeature:
    """Random feature with non-degenerate label prior.

    ``counts`` builds from integer counts (exact prefix sums); otherwise from
    Dirichlet masses and uniform conditionals.  ``ties`` draws conditionals
    from a coarse grid so equal values occur.
    """
    while True:
        if counts:
            tot = rng.integers(1, 40, size=n)
            if ties:
                c0 = (tot * rng.integers(0, 3, size=n)) // 2
            else:
                c0 = rng.binomial(tot, rng.random(n))
            feat = SortedFeature.from_counts(c0, tot - c0)
        else:
            p = rng.dirichlet(np.ones(n))
            p = np.maximum(p, 1e-6)
            p /= p.sum()
            cond = rng.integers(0, 5, size=n) / 4 if ties else rng.random(n)
            feat = SortedFeature.from_probabilities(p, cond)
        if not feat.degenerate:
            return feat


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def four_value():
    """Uniform masses, conditionals 0.1, 0.2, 0.8, 0.9."""
    return SortedFeature.from_probabilities(np.full(4, 0.25), [0.1, 0.2, 0.8, 0.9])


@pytest.fixture
def frequency_trap():
    """Two frequent label-independent values and four rare deterministic ones."""
    c0 = [2, 2, 0, 0, 1, 1]
    c1 = [2, 2, 1, 1, 0, 0]
    return SortedFeature.from_counts(c0, c1, value_ids=["x1", "x2", "x3", "x4", "x5", "x6"], name="trap")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props:
                continue
            if rep.when != "call" and outcome == "passed":
                continue
            key = props["criterion"]
            prev_ok, details = results.get(key, (True, []))
            if props.get("detail"):
                details = details + [props["detail"]]
            results[key] = (prev_ok and outcome == "passed", details)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k.split()[0])):
        ok, details = results[key]
        line = f"criterion {key}: {'PASS' if ok else 'FAIL'}"
        if details:
            line += f" ({'; '.join(details)})"
        terminalreporter.write_line(line)
