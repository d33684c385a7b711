"""Figure rendering for the report subcommands.

Every function writes a single PNG next to the delimited output it
illustrates and returns the path.  All rendering is headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .chains import ChainDraws  # noqa: E402
from .diagnostics import GewekeResult, SeriesSummary, iact  # noqa: E402
from .predict import GraphEdges, PredictiveSummary  # noqa: E402

__all__ = [
    "save_trace_figure",
    "save_iact_figure",
    "save_predict_figure",
    "save_graph_figure",
    "save_prior_study_figure",
    "save_geweke_figure",
]

_DPI = 120


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def save_trace_figure(draws: ChainDraws, block: str, path, max_series: int = 6) -> Path:
    """Trace plots for the first few series of one stored block."""
    arr = draws.block(block)
    labels = draws.labels[block]
    k = min(max_series, arr.shape[1])
    fig, axes = plt.subplots(k, 1, figsize=(7.0, 1.6 * k), sharex=True, squeeze=False)
    for j in range(k):
        ax = axes[j, 0]
        ax.plot(arr[:, j], lw=0.4, color="#1f5fa8")
        ax.set_ylabel(labels[j], fontsize=7)
        ax.tick_params(labelsize=7)
    axes[-1, 0].set_xlabel("stored draw", fontsize=8)
    fig.suptitle(f"trace: {block}", fontsize=9)
    return _finish(fig, path)


def save_iact_figure(summaries: list[SeriesSummary], path) -> Path:
    """Horizontal bar chart of autocorrelation times by series."""
    names = [s.name for s in summaries]
    taus = [s.iact for s in summaries]
    fig, ax = plt.subplots(figsize=(7.0, 0.25 * len(names) + 1.2))
    ax.barh(np.arange(len(names)), taus, color="#1f5fa8")
    ax.set_yticks(np.arange(len(names)))
    ax.set_yticklabels(names, fontsize=6)
    ax.invert_yaxis()
    ax.set_xlabel("IACT", fontsize=8)
    ax.tick_params(labelsize=7)
    return _finish(fig, path)


def save_predict_figure(summary: PredictiveSummary, path) -> Path:
    """Posterior mean and interval of each probability column, by individual."""
    n_cols = len(summary.columns)
    fig, axes = plt.subplots(
        n_cols, 1, figsize=(7.0, 1.8 * n_cols), sharex=True, squeeze=False
    )
    x = summary.individuals
    for c, col in enumerate(summary.columns):
        ax = axes[c, 0]
        lo = summary.mean[:, c] - summary.q_lo[:, c]
        hi = summary.q_hi[:, c] - summary.mean[:, c]
        ax.errorbar(
            x, summary.mean[:, c], yerr=[lo, hi],
            fmt="o", ms=2.5, lw=0.7, capsize=1.5, color="#1f5fa8",
        )
        ax.set_ylabel(col, fontsize=7)
        ax.set_ylim(-0.02, 1.02)
        ax.tick_params(labelsize=7)
    axes[-1, 0].set_xlabel("individual", fontsize=8)
    return _finish(fig, path)


def save_graph_figure(edges: GraphEdges, path) -> Path:
    """Circular layout; solid red positive edges, dashed blue negative."""
    n = len(edges.nodes)
    theta = 2.0 * np.pi * np.arange(n) / max(n, 1)
    xy = np.column_stack([np.cos(theta), np.sin(theta)])
    pos = {name: xy[i] for i, name in enumerate(edges.nodes)}
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    wmax = max((e.weight for e in edges.edges), default=1.0)
    for e in edges.edges:
        a, b = pos[e.node_a], pos[e.node_b]
        ax.plot(
            [a[0], b[0]], [a[1], b[1]],
            color="#c23b22" if e.sign == "pos" else "#1f5fa8",
            ls="-" if e.sign == "pos" else "--",
            lw=0.5 + 2.5 * e.weight / wmax,
            zorder=1,
        )
    ax.scatter(xy[:, 0], xy[:, 1], s=550, c="white", edgecolors="black", zorder=2)
    for i, name in enumerate(edges.nodes):
        ax.annotate(name, xy[i], ha="center", va="center", fontsize=8, zorder=3)
    ax.set_title(f"{edges.matrix}, level {edges.level:g}", fontsize=9)
    ax.set_aspect("equal")
    ax.axis("off")
    return _finish(fig, path)


def save_prior_study_figure(study: dict, path) -> Path:
    """Margin histograms and the shared-index dependence scatter."""
    r = study["corr_draws"]
    p = study["partial_draws"]
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    axes[0].hist(r[:, 0], bins=60, density=True, color="#1f5fa8")
    axes[0].axhline(0.5, color="black", lw=0.8, ls="--")
    axes[0].set_title("r21 vs Uniform(-1,1)", fontsize=8)
    axes[1].hist(p[:, 0], bins=60, density=True, color="#1f5fa8")
    axes[1].set_title("partial(2,1)", fontsize=8)
    if r.shape[1] > 1:
        m = min(4000, r.shape[0])
        axes[2].plot(np.abs(r[:m, 0]), np.abs(r[:m, 1]), ".", ms=1.5, alpha=0.4)
        axes[2].set_xlabel("|r21|", fontsize=8)
        axes[2].set_ylabel("|r31|", fontsize=8)
        axes[2].set_title("shared-index dependence", fontsize=8)
    for ax in axes:
        ax.tick_params(labelsize=7)
    fig.suptitle(
        f"correlation prior, D={study['dim']}, nu={study['nu']:g}", fontsize=9
    )
    return _finish(fig, path)


def save_geweke_figure(result: GewekeResult, path) -> Path:
    """Dot plot of z scores per combo with the usual +-4 reference band."""
    combos = list(result.combos)
    fig, ax = plt.subplots(figsize=(7.0, 0.5 * len(combos) + 1.6))
    for i, combo in enumerate(combos):
        z = np.array([row.z for row in result.combos[combo]])
        ax.plot(z, np.full(z.size, i), ".", ms=4, alpha=0.6, color="#1f5fa8")
    ax.axvline(-4, color="#c23b22", lw=0.8, ls="--")
    ax.axvline(4, color="#c23b22", lw=0.8, ls="--")
    ax.set_yticks(np.arange(len(combos)))
    ax.set_yticklabels(combos, fontsize=7)
    ax.set_xlabel("z", fontsize=8)
    ax.tick_params(labelsize=7)
    ax.set_title(f"joint-distribution test, {result.sweeps} sweeps", fontsize=9)
    return _finish(fig, path)
