"""Prior distributions and their conjugate or auxiliary-variable updates.

Covers the marginally uniform correlation prior (normalised inverse-Wishart
draws), inverse-Wishart and hierarchical inverse-Wishart updates for the
random-effect covariance, and the auxiliary inverse-gamma scheme for the
horseshoe prior on regression coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import kstest

from .corr import CorrelationMatrix, CovarianceMatrix

__all__ = [
    "NormalPrior",
    "HiwPrior",
    "HorseshoeState",
    "sample_corr_marg_uniform",
    "sample_inverse_wishart",
    "iw_update_sigma_alpha",
    "hiw_update_sigma_alpha",
    "horseshoe_update",
    "prior_study",
]


@dataclass(frozen=True)
class NormalPrior:
    """Mean-zero Gaussian prior with diagonal covariance."""

    var_diag: np.ndarray

    def __post_init__(self) -> None:
        var = np.atleast_1d(np.asarray(self.var_diag, dtype=float))
        if np.any(var <= 0.0) or not np.all(np.isfinite(var)):
            raise ValueError("prior variances must be positive and finite")
        object.__setattr__(self, "var_diag", var)


@dataclass(frozen=True)
class HiwPrior:
    """Hierarchical inverse-Wishart prior on a covariance matrix.

    Sigma | a ~ IW(dof + D - 1, 2 dof diag(1/a)), a_i ~ IG(1/2, 1/scale_i^2).
    The implied marginal on each standard deviation is half-t with ``dof``
    degrees of freedom and scale ``scale_i``.
    """

    dof: float
    scales: np.ndarray

    def __post_init__(self) -> None:
        scales = np.atleast_1d(np.asarray(self.scales, dtype=float))
        if self.dof <= 0.0:
            raise ValueError("dof must be positive")
        if np.any(scales <= 0.0):
            raise ValueError("scales must be positive")
        object.__setattr__(self, "scales", scales)


def _inverse_gamma(
    shape, scale, rng: np.random.Generator, size=None
) -> np.ndarray | float:
    """Draws with density proportional to x^(-shape-1) exp(-scale/x)."""
    return np.asarray(scale, dtype=float) / rng.gamma(shape, 1.0, size=size)


def _wishart_bartlett(
    dim: int, dof: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Lower-triangular Bartlett factors A with A A' ~ Wishart(dof, I)."""
    if dof <= dim - 1:
        raise ValueError("Wishart degrees of freedom must exceed dim - 1")
    a = np.zeros((size, dim, dim))
    rows, cols = np.tril_indices(dim, k=-1)
    a[:, rows, cols] = rng.standard_normal((size, rows.size))
    for i in range(dim):
        a[:, i, i] = np.sqrt(rng.chisquare(dof - i, size=size))
    return a


def sample_inverse_wishart(
    dof: float, scale: np.ndarray, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Inverse-Wishart draws with density |X|^{-(dof+D+1)/2} exp(-tr(scale X^{-1})/2).

    Mean is scale / (dof - D - 1) when dof > D + 1.  Returns (D, D) or
    (size, D, D).
    """
    scale = np.asarray(scale, dtype=float)
    dim = scale.shape[0]
    n = 1 if size is None else int(size)
    chol = np.linalg.cholesky(scale)
    bart = _wishart_bartlett(dim, dof, rng, n)
    # X^{-1} = C^{-T} A A' C^{-1}  =>  X = (C A^{-T})(C A^{-T})'
    inv_bart = np.linalg.inv(bart)
    m = np.einsum("ij,nkj->nik", chol, inv_bart)
    out = np.einsum("nik,njk->nij", m, m)
    out = 0.5 * (out + out.transpose(0, 2, 1))
    return out[0] if size is None else out


def sample_corr_marg_uniform(
    dim: int, nu: float, rng: np.random.Generator, size: int | None = None
):
    """Correlation matrices with density proportional to
    |R|^{(nu-1)(D-1)/2 - 1} prod_i |R(-i,-i)|^{-nu/2}.

    Obtained by normalising inverse-Wishart(nu, I) draws.  At nu = D + 1
    every off-diagonal entry is marginally Uniform(-1, 1).  Returns a
    CorrelationMatrix, or a (size, D, D) array when ``size`` is given.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = 1 if size is None else int(size)
    bart = _wishart_bartlett(dim, nu, rng, n)
    # IW(nu, I) draw is (A^{-1})' A^{-1}; normalise rows/cols to unit diagonal.
    inv_bart = np.linalg.inv(bart)
    sigma = np.einsum("nki,nkj->nij", inv_bart, inv_bart)
    sd = np.sqrt(np.einsum("nii->ni", sigma))
    corr = sigma / (sd[:, :, None] * sd[:, None, :])
    ii = np.arange(dim)
    corr[:, ii, ii] = 1.0
    if size is None:
        return CorrelationMatrix(corr[0])
    return corr


def iw_update_sigma_alpha(
    alphas: np.ndarray, dof: float, scale: np.ndarray, rng: np.random.Generator
) -> CovarianceMatrix:
    """Conjugate covariance update for mean-zero Gaussian rows.

    alphas is (P, D); the posterior is IW(dof + P, scale + sum_i a_i a_i').
    With P = 0 this is a draw from the prior.
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    scale = np.asarray(scale, dtype=float)
    post_dof = dof + alphas.shape[0]
    post_scale = scale + alphas.T @ alphas
    return CovarianceMatrix(sample_inverse_wishart(post_dof, post_scale, rng))


def hiw_update_sigma_alpha(
    alphas: np.ndarray,
    prior: HiwPrior,
    sigma_alpha: np.ndarray,
    rng: np.random.Generator,
) -> tuple[CovarianceMatrix, np.ndarray]:
    """One sweep of the hierarchical inverse-Wishart blocked update.

    First refreshes the auxiliary scales a_i | Sigma, then draws
    Sigma | a, alphas.  Returns the new covariance and the auxiliaries.
    """
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    sigma_alpha = np.asarray(sigma_alpha, dtype=float)
    dim = sigma_alpha.shape[0]
    lam = prior.dof
    prec_diag = np.diag(np.linalg.inv(sigma_alpha))
    a = _inverse_gamma(
        0.5 * (lam + dim), lam * prec_diag + prior.scales**-2.0, rng, size=dim
    )
    post_dof = lam + alphas.shape[0] + dim - 1.0
    post_scale = alphas.T @ alphas + 2.0 * lam * np.diag(1.0 / a)
    return CovarianceMatrix(sample_inverse_wishart(post_dof, post_scale, rng)), a


@dataclass
class HorseshoeState:
    """Auxiliary-variable state of the horseshoe prior on coefficients.

    Coefficients flagged by ``shrink_mask`` get variance tau2 * lam2_i;
    the rest (intercepts) keep the fixed ``free_variance``.  lam2 and tau2
    are the squared local and global scales; nu_aux and xi_aux are their
    inverse-gamma auxiliaries.
    """

    shrink_mask: np.ndarray
    free_variance: float = 100.0
    lam2: np.ndarray = field(default=None)
    tau2: float = 1.0
    nu_aux: np.ndarray = field(default=None)
    xi_aux: float = 1.0

    def __post_init__(self) -> None:
        mask = np.asarray(self.shrink_mask, dtype=bool)
        object.__setattr__(self, "shrink_mask", mask)
        m = int(mask.sum())
        # m == 0 is legal: intercept-only designs shrink nothing and the
        # prior degenerates to the flat variance on every coefficient.
        if self.lam2 is None:
            self.lam2 = np.ones(m)
        if self.nu_aux is None:
            self.nu_aux = np.ones(m)

    def variance_diag(self) -> np.ndarray:
        out = np.full(self.shrink_mask.size, float(self.free_variance))
        out[self.shrink_mask] = self.tau2 * self.lam2
        return out


def horseshoe_update(
    beta: np.ndarray, state: HorseshoeState, rng: np.random.Generator
) -> tuple[HorseshoeState, np.ndarray]:
    """Refresh the horseshoe scales given current coefficients.

    All four conditionals are inverse gamma:

        lam2_i | .  ~ IG(1, 1/nu_i + b_i^2 / (2 tau2))
        nu_i   | .  ~ IG(1, 1 + 1/lam2_i)
        tau2   | .  ~ IG((m+1)/2, 1/xi + sum_i b_i^2 / (2 lam2_i))
        xi     | .  ~ IG(1, 1 + 1/tau2)

    Returns the mutated state and the full prior variance diagonal.
    """
    b = np.asarray(beta, dtype=float)[state.shrink_mask]
    m = b.size
    state.lam2 = _inverse_gamma(
        1.0, 1.0 / state.nu_aux + b * b / (2.0 * state.tau2), rng, size=m
    )
    state.nu_aux = _inverse_gamma(1.0, 1.0 + 1.0 / state.lam2, rng, size=m)
    state.tau2 = float(
        _inverse_gamma(
            0.5 * (m + 1.0),
            1.0 / state.xi_aux + float(np.sum(b * b / (2.0 * state.lam2))),
            rng,
        )
    )
    state.xi_aux = float(_inverse_gamma(1.0, 1.0 + 1.0 / state.tau2, rng))
    return state, state.variance_diag()


def prior_study(
    dim: int, nu: float, n_draws: int, rng: np.random.Generator
) -> dict:
    """Monte Carlo study of the correlation prior's margins and dependence.

    Draws n_draws correlation matrices, records every off-diagonal entry
    and every pairwise partial correlation, and summarises:

    - KS statistics and p-values of r_21 against Uniform(-1, 1),
    - KS of the (2,1) partial correlation against Beta(D/2, D/2) on (-1, 1),
    - correlation of |r_21| with |r_31| (shared-index dependence),
    - correlation of r_21 with r_43 and of the matching partials
      (disjoint pairs, expected near zero), when D >= 4.
    """
    corr = sample_corr_marg_uniform(dim, nu, rng, size=n_draws)
    rows, cols = np.tril_indices(dim, k=-1)
    r = corr[:, rows, cols]

    prec = np.linalg.inv(corr)
    scale = np.sqrt(np.einsum("nii->ni", prec))
    partial = -prec / (scale[:, :, None] * scale[:, None, :])
    p = partial[:, rows, cols]

    out = {
        "dim": dim,
        "nu": nu,
        "n_draws": n_draws,
        "pair_index": list(zip((rows + 1).tolist(), (cols + 1).tolist())),
        "corr_draws": r,
        "partial_draws": p,
    }
    ks_u = kstest(r[:, 0], lambda x: (x + 1.0) / 2.0)
    out["ks_uniform_stat"] = float(ks_u.statistic)
    out["ks_uniform_pvalue"] = float(ks_u.pvalue)

    half = dim / 2.0
    ks_b = kstest(p[:, 0], lambda x: beta_dist.cdf((x + 1.0) / 2.0, half, half))
    out["ks_partial_stat"] = float(ks_b.statistic)
    out["ks_partial_pvalue"] = float(ks_b.pvalue)

    if dim >= 3:
        out["abs_corr_shared"] = float(
            np.corrcoef(np.abs(r[:, 0]), np.abs(r[:, 1]))[0, 1]
        )
    if dim >= 4:
        # r_21 vs r_43: index of (4,3) in row-major order.
        idx_43 = [tuple(ij) for ij in zip(rows + 1, cols + 1)].index((4, 3))
        out["corr_disjoint"] = float(np.corrcoef(r[:, 0], r[:, idx_43])[0, 1])
        out["partial_corr_disjoint"] = float(np.corrcoef(p[:, 0], p[:, idx_43])[0, 1])
        out["partial_corr_shared"] = float(np.corrcoef(p[:, 0], p[:, 1])[0, 1])
    return out
