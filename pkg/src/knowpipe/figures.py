"""Matplotlib renderings written alongside the delimited outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_method_comparison(runs: Sequence, path: str | Path) -> Path:
    """Grouped ACC/EPS bars per method, one bar pair per report row."""
    path = Path(path)
    methods = [r.method for r in runs]
    acc = [r.accuracy for r in runs]
    eps = [r.eps if r.eps is not None else 0.0 for r in runs]
    has_eps = [r.eps is not None for r in runs]

    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(methods)), 3.2))
    xs = range(len(methods))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], acc, width, label="ACC", color="#4878d0")
    ax.bar(
        [x + width / 2 for x in xs],
        eps,
        width,
        label="EPS",
        color=["#ee854a" if h else "#dddddd" for h in has_eps],
    )
    ax.set_xticks(list(xs))
    ax.set_xticklabels(methods, rotation=20, ha="right")
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("score")
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_sweep_curve(
    param: str,
    values: Sequence,
    accuracies: Sequence[float],
    path: str | Path,
) -> Path:
    """Accuracy against a swept parameter: line for numbers, bars otherwise."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    numeric = all(isinstance(v, (int, float)) for v in values)
    if numeric:
        ax.plot(list(values), list(accuracies), marker="o", color="#4878d0")
        ax.set_xticks(list(values))
    else:
        ax.bar([str(v) for v in values], list(accuracies), color="#4878d0")
    ax.set_xlabel(param)
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
