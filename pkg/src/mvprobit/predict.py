"""Posterior predictive probabilities and dependence-graph extraction.

Predictions are per fitted individual: each posterior draw supplies
coefficients, an error correlation, and that individual's random effect,
so a single-outcome probability is the exact normal orthant Phi(mu) while
a bundle ("at least one of these outcomes") is averaged over fresh
latent-error draws.  Graph extraction turns a posterior sample of any
symmetric matrix (precision, correlation, partial correlation) into a
signed weighted edge list keeping the pairs whose equal-tailed interval
excludes zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .chains import ChainDraws
from .data import fmt17

__all__ = [
    "PredictiveSummary",
    "posterior_predictive",
    "GraphEdge",
    "GraphEdges",
    "extract_graph",
]


@dataclass(frozen=True)
class PredictiveSummary:
    """Per-individual posterior summaries of event probabilities."""

    individuals: np.ndarray          # 1-based ids, shape (P,)
    columns: tuple[str, ...]
    mean: np.ndarray                 # (P, C)
    q_lo: np.ndarray
    q_med: np.ndarray
    q_hi: np.ndarray
    level: float

    def to_csv_rows(self) -> list[list[str]]:
        tail = 100.0 * (1.0 - self.level) / 2.0
        header = ["individual"]
        for col in self.columns:
            header += [col, f"{col}:q{tail:g}", f"{col}:q50", f"{col}:q{100 - tail:g}"]
        rows = [header]
        for i, ind in enumerate(self.individuals):
            row = [str(int(ind))]
            for c in range(len(self.columns)):
                row += [
                    fmt17(self.mean[i, c]), fmt17(self.q_lo[i, c]),
                    fmt17(self.q_med[i, c]), fmt17(self.q_hi[i, c]),
                ]
            rows.append(row)
        return rows


def _bundle_label(labels: tuple[str, ...], bundle: tuple[int, ...]) -> str:
    return "P(" + "+".join(labels[b - 1] for b in bundle) + ">=1)"


def posterior_predictive(
    draws: ChainDraws,
    x_new,
    bundle=None,
    n_mc: int = 2000,
    rng=None,
    level: float = 0.95,
) -> PredictiveSummary:
    """Event probabilities for every fitted individual at new covariates.

    ``x_new`` is the panel covariate vector (intercept first), shared by
    all individuals, or a (K, P) matrix with one column per individual;
    when the chain was fitted with individual-level covariates those are
    taken from the stored metadata and appended automatically.  Columns
    cover each single outcome, P(y_d = 1) = Phi(mu_d) exactly per draw,
    plus an optional bundle of 1-based outcome positions scored as the
    "at least one" event by ``n_mc`` latent error draws per posterior
    draw.  Summaries are the posterior mean and equal-tailed quantiles.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if rng is None or not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(0 if rng is None else rng)

    meta = draws.meta
    d_out = int(meta["n_outcomes"])
    n_ind = int(meta["n_ind"])
    out_labels = tuple(meta.get("outcome_labels")
                       or [f"y{d + 1}" for d in range(d_out)])
    z_labels = meta.get("z_labels") or []
    k_total = int(meta["n_cov"])
    k_panel = k_total - len(z_labels)

    if "alpha" not in draws.blocks:
        raise ValueError(
            "chain did not store random effects; refit with store_alpha on"
        )

    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim == 1:
        x_new = np.repeat(x_new[:, None], n_ind, axis=1)
    if x_new.shape != (k_panel, n_ind):
        raise ValueError(
            f"covariates must be ({k_panel},) or ({k_panel}, {n_ind})"
        )
    if not np.isfinite(x_new).all():
        raise ValueError("covariates must be finite")
    if not np.all(x_new[0] == 1.0):
        raise ValueError("covariate row 0 is the intercept and must be 1")
    if z_labels:
        z = np.asarray(meta["z"], dtype=float)
        x_full = np.concatenate([x_new, z], axis=0)
    else:
        x_full = x_new

    bundle_t: tuple[int, ...] | None = None
    if bundle is not None:
        bundle_t = tuple(int(b) for b in bundle)
        if len(bundle_t) < 1 or len(set(bundle_t)) != len(bundle_t):
            raise ValueError("bundle must list distinct outcome positions")
        if not all(1 <= b <= d_out for b in bundle_t):
            raise ValueError(f"bundle positions must lie in 1..{d_out}")

    n = draws.n_draws
    beta = draws.block("beta").reshape(n, d_out, k_total)
    alpha = draws.block("alpha").reshape(n, d_out, n_ind)
    mu = np.einsum("ndk,kp->ndp", beta, x_full) + alpha

    columns = [f"P({lab}=1)" for lab in out_labels]
    prob = [ndtr(mu[:, d, :]) for d in range(d_out)]
    if bundle_t is not None:
        idx = np.array([b - 1 for b in bundle_t])
        corr = draws.corr_eps_draws()[:, idx[:, None], idx[None, :]]
        chol = np.linalg.cholesky(corr)
        mu_b = mu[:, idx, :]
        p_bundle = np.empty((n, n_ind))
        for j in range(n):
            eps = rng.standard_normal((n_mc, idx.size)) @ chol[j].T
            hit = (mu_b[j][None, :, :] + eps[:, :, None]) > 0
            p_bundle[j] = hit.any(axis=1).mean(axis=0)
        prob.append(p_bundle)
        columns.append(_bundle_label(out_labels, bundle_t))

    tail = (1.0 - level) / 2.0
    stack = np.stack(prob, axis=2)          # (n, P, C)
    qs = np.quantile(stack, [tail, 0.5, 1.0 - tail], axis=0)
    return PredictiveSummary(
        individuals=np.arange(1, n_ind + 1),
        columns=tuple(columns),
        mean=stack.mean(axis=0),
        q_lo=qs[0],
        q_med=qs[1],
        q_hi=qs[2],
        level=level,
    )


@dataclass(frozen=True)
class GraphEdge:
    node_a: str
    node_b: str
    sign: str          # "pos" | "neg"
    weight: float      # |posterior mean| of the entry
    lo: float
    hi: float


@dataclass(frozen=True)
class GraphEdges:
    nodes: tuple[str, ...]
    edges: tuple[GraphEdge, ...]
    level: float
    matrix: str = "matrix"

    def to_csv_rows(self) -> list[list[str]]:
        rows = [["node_a", "node_b", "sign", "weight", "lo", "hi"]]
        for e in self.edges:
            rows.append([
                e.node_a, e.node_b, e.sign,
                fmt17(e.weight), fmt17(e.lo), fmt17(e.hi),
            ])
        return rows

    def to_dot(self) -> str:
        lines = [f'graph "{self.matrix}" {{']
        for node in self.nodes:
            lines.append(f'  "{node}";')
        for e in self.edges:
            lines.append(
                f'  "{e.node_a}" -- "{e.node_b}" '
                f'[sign={e.sign}, weight={fmt17(e.weight)}];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"


def extract_graph(
    entry_draws: np.ndarray,
    level: float = 0.95,
    labels=None,
    matrix: str = "matrix",
) -> GraphEdges:
    """Signed weighted edges from a posterior sample of symmetric matrices.

    ``entry_draws`` is (n, D, D).  An edge (i, j) is kept when the
    equal-tailed ``level`` interval of the (i, j) series excludes zero;
    its sign is the sign of the posterior mean and its weight the mean's
    magnitude.  Identity-only draws therefore yield no edges.
    """
    arr = np.asarray(entry_draws, dtype=float)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError("entry draws must be (n, D, D)")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    dim = arr.shape[1]
    nodes = tuple(labels) if labels is not None else tuple(
        f"y{d + 1}" for d in range(dim)
    )
    if len(nodes) != dim:
        raise ValueError("need one label per node")
    tail = (1.0 - level) / 2.0
    edges = []
    for i in range(1, dim):
        for j in range(i):
            series = arr[:, i, j]
            lo, hi = np.quantile(series, [tail, 1.0 - tail])
            if lo > 0.0 or hi < 0.0:
                m = float(series.mean())
                edges.append(GraphEdge(
                    node_a=nodes[j], node_b=nodes[i],
                    sign="pos" if m > 0 else "neg",
                    weight=abs(m), lo=float(lo), hi=float(hi),
                ))
    return GraphEdges(nodes=nodes, edges=tuple(edges), level=level, matrix=matrix)
