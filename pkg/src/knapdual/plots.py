"""Figure rendering for experiment runs.

Renders a small set of diagnostic figures from parsed trace files, next to
the CSV output: cumulative reward per seed, the tightest remaining budget
over time, and the first multiplier coordinate's trajectory.  The CSV files
remain the source of truth; figures are a reporting convenience.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _finish(fig, ax, title: str, xlabel: str, ylabel: str, path: Path):
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_run_figures(parsed_traces, out_dir) -> list[Path]:
    """Write the per-run figures and return their paths."""
    out_dir = Path(out_dir)
    paths = []

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for p in parsed_traces:
        ax.plot(p.t, p.reward.cumsum(), lw=1.0, label=f"seed {p.seed}")
    path = out_dir / "reward_curves.png"
    _finish(fig, ax, "Cumulative reward", "round", "reward", path)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for p in parsed_traces:
        ax.plot(p.t, p.remaining.min(axis=1), lw=1.0, label=f"seed {p.seed}")
    ax.axhline(1.0, color="k", ls="--", lw=0.8)
    path = out_dir / "budget_paths.png"
    _finish(fig, ax, "Tightest remaining budget", "round", "remaining", path)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for p in parsed_traces:
        ax.plot(p.t, p.lam[:, 0], lw=1.0, label=f"seed {p.seed}")
    path = out_dir / "dual_paths.png"
    _finish(fig, ax, "Multiplier trajectory (resource 1)", "round", "lambda", path)
    paths.append(path)
    return paths
