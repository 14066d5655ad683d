"""Learning-curve statistics and static SVG plots.

SVG output is reproducible: matplotlib's id salt is fixed and no date is
embedded, so the same CSVs always render to the same bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def curve_stats(R) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and sample standard deviation over rows (sessions).

    A single row has zero spread.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.size == 0:
        raise ValueError("no curves to summarize")
    std = R.std(axis=0, ddof=1) if R.shape[0] > 1 else np.zeros(R.shape[1])
    return R.mean(axis=0), std


def read_curve(path: str | Path, column: str = "mean_policy_reward") -> np.ndarray:
    """One column of a per-session trace CSV, ordered by iteration."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: trace has no iterations")
    if column not in rows[0]:
        raise ValueError(f"{path}: no column {column!r}")
    rows.sort(key=lambda r: int(r["iteration"]))
    return np.array([float(r[column]) for r in rows])


def plot_bands(curves: Mapping[str, np.ndarray], out: str | Path, title: str = "",
               ylabel: str = "reward") -> Path:
    """Mean line with a one-std band per label; ``curves[label]`` is
    ``(sessions, iterations)``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not curves:
        raise ValueError("nothing to plot")
    with matplotlib.rc_context({"svg.hashsalt": "groupsps", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, R in curves.items():
            mean, std = curve_stats(R)
            it = np.arange(1, mean.size + 1)
            line, = ax.plot(it, mean, marker="o", ms=3, label=label)
            ax.fill_between(it, mean - std, mean + std, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out


def render_curves(series: Mapping[str, Sequence[str | Path]], out: str | Path, title: str = "",
                  column: str = "mean_policy_reward", ylabel: str = "reward") -> Path:
    """Plot one band per label from that label's per-session trace CSVs."""
    curves = {}
    for label, paths in series.items():
        if not paths:
            raise ValueError(f"series {label!r} has no traces")
        rows = [read_curve(p, column) for p in paths]
        if len({r.size for r in rows}) != 1:
            raise ValueError(f"series {label!r}: sessions differ in iteration count")
        curves[label] = np.array(rows)
    return plot_bands(curves, out, title, ylabel)
