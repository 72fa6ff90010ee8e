"""Figure rendering for benchmark output.

Everything renders to a file through the Agg backend, so the toolkit stays
usable on headless machines; figures are written alongside the CSV output,
never shown interactively.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import ProfileCurve


def plot_profiles(curves: Sequence[ProfileCurve], path, metric: str = "nge") -> None:
    """Render performance-profile step curves to an image file."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for curve in curves:
        taus = np.append(curve.taus, curve.taus[-1] * 1.05 if curve.taus[-1] > 1 else 1.1)
        fractions = np.append(curve.fractions, curve.fractions[-1])
        ax.step(taus, fractions, where="post", label=curve.method, linewidth=1.4)
    ax.set_xlabel("performance ratio")
    ax.set_ylabel("fraction of problems solved")
    ax.set_title(f"performance profile ({metric})")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, loc="lower right")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_sweep_cdf(stats: Mapping[str, np.ndarray], path, memory: int | None = None) -> None:
    """Render the empirical distribution of iterations per sweep per method."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in sorted(stats):
        values = np.asarray(stats[method])
        if values.size == 0:
            continue
        fractions = np.arange(1, values.size + 1) / values.size
        ax.step(values, fractions, where="post", label=method, linewidth=1.4)
    if memory is not None:
        ax.axvline(memory, color="gray", linestyle="--", linewidth=1.0)
    ax.set_xlabel("average stepsizes used per sweep")
    ax.set_ylabel("fraction of problems")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, loc="lower right")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
