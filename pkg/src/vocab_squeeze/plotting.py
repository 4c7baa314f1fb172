"""Report figures.

Figures are built on bare :class:`matplotlib.figure.Figure` objects with an
Agg canvas, so nothing touches pyplot's global state and PNG bytes depend
only on the data.
"""

from __future__ import annotations

import os
from typing import Mapping, Sequence, Union

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.ticker import NullFormatter

PathLike = Union[str, os.PathLike]

_STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

_MARKERS = "osD^vP*X"


def _save(fig: Figure, path: PathLike) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Software": None})


def figure_path(report_path: PathLike) -> str:
    """Sibling PNG path of a report file."""
    root, _ = os.path.splitext(os.fspath(report_path))
    return root + ".png"


def plot_loss_curves(rows: Sequence[Mapping], path: PathLike) -> None:
    """Average MI loss against vocabulary budget, one line per method/allocation.

    ``rows`` are comparison records with ``method``, ``allocation``,
    ``budget`` and ``avg_mi_loss`` (``None`` for failed cells).
    """
    import matplotlib

    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(7.5, 3.8))
        ax = fig.add_subplot(1, 1, 1)
        series: dict = {}
        for r in rows:
            if r.get("avg_mi_loss") is None:
                continue
            key = f"{r['method']} ({r['allocation']})"
            series.setdefault(key, []).append((int(r["budget"]), float(r["avg_mi_loss"])))
        positive = [v for pts in series.values() for _, v in pts if v > 0]
        for i, (key, pts) in enumerate(sorted(series.items())):
            pts.sort()
            x = np.array([p[0] for p in pts])
            y = np.array([p[1] for p in pts])
            ax.plot(x, y, marker=_MARKERS[i % len(_MARKERS)], ms=4, lw=1.2, label=key)
        if positive:
            ax.set_yscale("log")
            ax.set_ylim(bottom=min(positive) / 2)
        if series:
            budgets = sorted({b for pts in series.values() for b, _ in pts})
            ax.set_xscale("log")
            ax.xaxis.set_minor_formatter(NullFormatter())
            ax.set_xticks(budgets)
            ax.set_xticklabels([str(b) for b in budgets], fontsize=7)
            ax.legend(frameon=False, fontsize=7, loc="upper left", bbox_to_anchor=(1.02, 1.0))
        ax.set_xlabel("vocabulary budget")
        ax.set_ylabel("average MI loss")
        fig.tight_layout()
        _save(fig, path)


def plot_feature_report(report: Mapping, path: PathLike) -> None:
    """Per-feature MI before and after compression as paired bars."""
    import matplotlib

    per = report["per_feature"]
    names = sorted(per)
    before = np.array([per[k]["mi_before_bits"] for k in names], dtype=np.float64)
    after = np.array([per[k]["mi_after_bits"] for k in names], dtype=np.float64)
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(max(4.0, 0.35 * len(names) + 2.0), 3.6))
        ax = fig.add_subplot(1, 1, 1)
        x = np.arange(len(names))
        ax.bar(x - 0.2, before, width=0.4, label="before", color="0.7")
        ax.bar(x + 0.2, after, width=0.4, label="after", color="C0")
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("I(feature; label) [bits]")
        loss = report.get("avg_mi_loss")
        title = report.get("method", "")
        if loss is not None:
            title = f"{title}: average MI loss {loss:.3g}"
        ax.set_title(title, fontsize=9)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)
