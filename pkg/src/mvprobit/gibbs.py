"""Blocked Gibbs engine for the correlated-binary panel model.

Latent formulation: y*_dit = (B x_it)_d + alpha_di + eps_dit, with
alpha_i ~ N(0, Sigma_alpha), eps_it ~ N(0, R) for a correlation matrix R,
and y = 1 on positive latents.  One sweep updates, in order,

  1. the latent utilities y* (univariate truncated normals, one pass per
     outcome with the other outcomes held fixed),
  2. the stacked coefficient matrix B (one joint Gaussian draw),
  3. the error correlation R through its unit-diagonal Cholesky factor
     (a No-U-Turn transition on the unconstrained strict lower triangle),
  4. the individual random effects alpha (independent Gaussians across
     individuals), and
  5. the random-effect covariance Sigma_alpha (inverse Wishart, or the
     hierarchical variant with half-t standard deviation margins).

Steps 2 and 4 optionally switch from fresh Gaussian draws to the
deterministic reflection 2*mu - theta once past the burn-in, which leaves
each full conditional invariant and induces negative serial dependence.

A parameter-expanded variant (run_px_chain) samples an unidentified error
covariance through a conjugate matrix-normal regression and rescales back
to the correlation metric each sweep; it is included as a comparison
baseline and is known to distort the random-effect variances upward.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .chains import ChainDraws
from .corr import (
    CorrelationMatrix,
    UnitCholesky,
    cholesky_to_corr,
    corr_to_cholesky,
    grad_log_target_scatter,
    log_target_scatter,
    vech_indices,
)
from .data import PanelData
from .priors import (
    HiwPrior,
    HorseshoeState,
    hiw_update_sigma_alpha,
    horseshoe_update,
    iw_update_sigma_alpha,
    sample_inverse_wishart,
)
from .samplers import HmcConfig, nuts_sample, truncated_normal_array

__all__ = [
    "ModelSpec",
    "SamplerConfig",
    "ParamState",
    "update_latents",
    "update_beta",
    "update_corr",
    "update_alpha",
    "update_sigma_alpha",
    "run_chain",
    "run_px_chain",
]

_MODES = ("independent", "antithetic")


@dataclass(frozen=True)
class ModelSpec:
    """Model form and prior choices.

    model 2 splices the individual-level covariate block of the data into
    the coefficient design (one extra column per z covariate, constant over
    periods); model 1 ignores it.  ``beta_prior`` is "normal" (mean zero,
    fixed variance) or "horseshoe" (global-local shrinkage on every
    non-intercept column, with the intercepts kept at the fixed variance).
    ``sigma_alpha_prior`` is "iw" or "hiw".
    """

    model: int = 1
    beta_prior: str = "normal"
    beta_prior_variance: float = 100.0
    sigma_alpha_prior: str = "iw"
    iw_dof: float | None = None
    iw_scale: np.ndarray | float | None = None
    hiw_dof: float = 2.0
    hiw_scale: float = 10.0
    corr_dof: float | None = None

    def __post_init__(self) -> None:
        if self.model not in (1, 2):
            raise ValueError("model must be 1 or 2")
        if self.beta_prior not in ("normal", "horseshoe"):
            raise ValueError("beta_prior must be 'normal' or 'horseshoe'")
        if self.sigma_alpha_prior not in ("iw", "hiw"):
            raise ValueError("sigma_alpha_prior must be 'iw' or 'hiw'")
        if self.beta_prior_variance <= 0:
            raise ValueError("beta_prior_variance must be positive")

    def resolved_iw_dof(self, dim: int) -> float:
        return float(self.iw_dof) if self.iw_dof is not None else dim + 2.0

    def resolved_iw_scale(self, dim: int) -> np.ndarray:
        if self.iw_scale is None:
            return np.eye(dim)
        scale = np.asarray(self.iw_scale, dtype=float)
        if scale.ndim == 0:
            return float(scale) * np.eye(dim)
        return scale

    def resolved_corr_dof(self, dim: int) -> float:
        return float(self.corr_dof) if self.corr_dof is not None else dim + 1.0

    def hiw_prior(self, dim: int) -> HiwPrior:
        return HiwPrior(self.hiw_dof, np.full(dim, float(self.hiw_scale)))


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, proposal modes, and adaptation settings.

    ``beta_mode`` and ``alpha_mode`` select fresh conditional draws
    ("independent") or the deterministic reflection ("antithetic") for
    those blocks; the reflection switches on at ``antithetic_start``
    (default: end of burn-in) so the chain first forgets its start the
    ordinary way.  The NUTS step size adapts for ``adapt_steps`` sweeps
    (default: the burn-in) and is frozen afterwards.
    """

    iterations: int = 2000
    burn_in: int = 500
    thin: int = 1
    seed: int = 0
    beta_mode: str = "independent"
    alpha_mode: str = "independent"
    antithetic_start: int | None = None
    adapt_steps: int | None = None
    target_accept: float = 0.8
    max_depth: int = 10
    store_alpha: bool = True
    store_latent_probe: bool = True
    probe_cell: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.beta_mode not in _MODES or self.alpha_mode not in _MODES:
            raise ValueError(f"proposal modes must be one of {_MODES}")

    @property
    def antithetic_from(self) -> int:
        return self.burn_in if self.antithetic_start is None else int(
            self.antithetic_start
        )

    @property
    def adapt_until(self) -> int:
        return self.burn_in if self.adapt_steps is None else int(self.adapt_steps)


@dataclass
class ParamState:
    """Current values of every sampled block."""

    ystar: np.ndarray            # (D, P, T)
    beta: np.ndarray             # (D, K)
    chol: UnitCholesky
    alpha: np.ndarray            # (D, P)
    sigma_alpha: np.ndarray      # (D, D)
    horseshoe: HorseshoeState | None = None
    hiw_aux: np.ndarray | None = None


def update_latents(
    ystar: np.ndarray,
    y: np.ndarray,
    mean: np.ndarray,
    prec: np.ndarray,
    rng: np.random.Generator,
) -> None:
    """One truncated-normal Gibbs pass over the latent utilities, in place.

    ``mean`` is the current systematic part B x + alpha and ``prec`` the
    inverse error correlation.  Outcomes are visited in order; within an
    outcome every (individual, period) cell is independent given the other
    outcomes, so each pass is a single vectorised draw.  The sign of every
    updated latent matches its observation.
    """
    d_out = ystar.shape[0]
    flat = ystar.reshape(d_out, -1)
    flat_mu = mean.reshape(d_out, -1)
    flat_y = y.reshape(d_out, -1)
    delta = flat - flat_mu
    for d in range(d_out):
        row = prec[d]
        cross = row @ delta - row[d] * delta[d]
        cond_mu = flat_mu[d] - cross / row[d]
        cond_sd = 1.0 / np.sqrt(row[d])
        pos = flat_y[d] == 1
        lo = np.where(pos, 0.0, -np.inf)
        hi = np.where(pos, np.inf, 0.0)
        flat[d] = truncated_normal_array(cond_mu, cond_sd, lo, hi, rng)
        delta[d] = flat[d] - flat_mu[d]


def update_beta(
    resid: np.ndarray,
    x_flat: np.ndarray,
    s_xx: np.ndarray,
    prec_eps: np.ndarray,
    prior_var_diag: np.ndarray,
    beta: np.ndarray,
    rng: np.random.Generator,
    antithetic: bool = False,
) -> np.ndarray:
    """Joint Gaussian draw of the stacked coefficient matrix.

    ``resid`` is y* - alpha flattened to (D, N) and ``x_flat`` the design
    flattened to (K, N); ``s_xx`` is x_flat @ x_flat.T.  Stacking B row by
    row (outcome-major), the conditional precision is
    kron(prec_eps, s_xx) + diag(1/prior_var), and the linear term is
    (prec_eps @ resid @ x_flat.T) stacked the same way.  With
    ``antithetic`` the draw is the reflection 2*mu - beta.
    """
    d_out, k_cov = beta.shape
    cross = resid @ x_flat.T
    prec = np.kron(prec_eps, s_xx) + np.diag(1.0 / prior_var_diag)
    lin = (prec_eps @ cross).reshape(-1)
    try:
        factor = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "coefficient conditional precision is not positive definite"
        ) from exc
    mean = cho_solve((factor, True), lin)
    if antithetic:
        vec = 2.0 * mean - beta.reshape(-1)
    else:
        noise = solve_triangular(
            factor, rng.standard_normal(d_out * k_cov), lower=True, trans="T"
        )
        vec = mean + noise
    return vec.reshape(d_out, k_cov)


def update_corr(
    chol: UnitCholesky,
    scatter: np.ndarray,
    n_obs: int,
    nu: float,
    cfg: HmcConfig,
    adapting: bool,
    rng: np.random.Generator,
) -> UnitCholesky:
    """No-U-Turn transition on the unconstrained Cholesky parameters.

    The target is the error-scale residual likelihood (through its
    precomputed scatter) times the marginally uniform prior and the
    reparameterisation Jacobian, so a leapfrog step costs the same at any
    panel size.  A divergent trajectory is counted in ``cfg`` and leaves
    the state unchanged.
    """
    if chol.dim == 1:
        return chol

    def logp(vech: np.ndarray) -> float:
        return log_target_scatter(vech, scatter, n_obs, nu)

    def grad(vech: np.ndarray) -> np.ndarray:
        return grad_log_target_scatter(vech, scatter, n_obs, nu)

    vech, _ = nuts_sample(logp, grad, chol.vech, cfg, adapting, rng)
    return UnitCholesky(chol.dim, vech)


def update_alpha(
    resid_sum: np.ndarray,
    n_per: int,
    prec_eps: np.ndarray,
    sigma_alpha: np.ndarray,
    alpha: np.ndarray,
    rng: np.random.Generator,
    antithetic: bool = False,
    variance_scale: float = 1.0,
) -> np.ndarray:
    """Gaussian draw of every individual's random effect.

    ``resid_sum`` is sum_t (y* - B x) per individual, shape (D, P).  All
    individuals share the conditional covariance
    (T * prec_eps + sigma_alpha^-1)^-1, so the update is one batched
    solve.  ``variance_scale`` inflates the draw covariance only (the mean
    is untouched); it exists as a fault-injection hook for the
    joint-distribution test harness and must be 1 in real runs.
    """
    sig_f = cho_factor(sigma_alpha, lower=True)
    post_prec = n_per * prec_eps + cho_solve(sig_f, np.eye(sigma_alpha.shape[0]))
    factor = np.linalg.cholesky(post_prec)
    mean = cho_solve((factor, True), prec_eps @ resid_sum)
    if antithetic:
        return 2.0 * mean - alpha
    noise = solve_triangular(
        factor, rng.standard_normal(alpha.shape), lower=True, trans="T"
    )
    return mean + np.sqrt(variance_scale) * noise


def update_sigma_alpha(
    alpha: np.ndarray,
    spec: ModelSpec,
    sigma_alpha: np.ndarray,
    hiw_aux: np.ndarray | None,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Conjugate covariance draw for the random effects (IW or HIW)."""
    dim = alpha.shape[0]
    if spec.sigma_alpha_prior == "iw":
        cov = iw_update_sigma_alpha(
            alpha.T, spec.resolved_iw_dof(dim), spec.resolved_iw_scale(dim), rng
        )
        return cov.values, None
    cov, aux = hiw_update_sigma_alpha(alpha.T, spec.hiw_prior(dim), sigma_alpha, rng)
    return cov.values, aux


def horseshoe_mask(d_out: int, k_cov: int) -> np.ndarray:
    """Shrinkage flags for the stacked coefficient vector, outcome-major.

    Exactly one coefficient per outcome, the one multiplying the
    constant-1 column, is excluded from shrinkage and keeps the flat
    prior; every other column is shrunk.  Intercept-only designs are
    therefore not shrunk at all.
    """
    return np.tile(np.array([False] + [True] * (k_cov - 1)), d_out)


def _design(data: PanelData, spec: ModelSpec) -> tuple[np.ndarray, tuple[str, ...]]:
    if spec.model == 2:
        if data.z is None:
            raise ValueError("model 2 needs individual-level covariates")
        x = np.concatenate(
            [data.x, np.repeat(data.z[:, :, None], data.n_per, axis=2)], axis=0
        )
        labels = data.covariate_labels + data.z_labels
        return x, labels
    return data.x, data.covariate_labels


def _init_state(
    data: PanelData, spec: ModelSpec, x: np.ndarray, rng: np.random.Generator
) -> ParamState:
    d_out, n_ind, n_per = data.y.shape
    k_cov = x.shape[0]
    y_flat = data.y.reshape(d_out, -1)
    lo = np.where(y_flat == 1, 0.0, -np.inf)
    hi = np.where(y_flat == 1, np.inf, 0.0)
    ystar = truncated_normal_array(
        np.zeros_like(lo), 1.0, lo, hi, rng
    ).reshape(d_out, n_ind, n_per)
    state = ParamState(
        ystar=ystar,
        beta=np.zeros((d_out, k_cov)),
        chol=UnitCholesky.identity(d_out),
        alpha=np.zeros((d_out, n_ind)),
        sigma_alpha=np.eye(d_out),
    )
    if spec.beta_prior == "horseshoe":
        state.horseshoe = HorseshoeState(
            shrink_mask=horseshoe_mask(d_out, k_cov),
            free_variance=spec.beta_prior_variance,
        )
    return state


def _corr_and_prec(chol: UnitCholesky) -> tuple[np.ndarray, np.ndarray]:
    corr = cholesky_to_corr(chol).values
    prec = cho_solve(cho_factor(corr, lower=True), np.eye(chol.dim))
    return corr, prec


class _Recorder:
    """Accumulates kept draws block by block."""

    def __init__(
        self,
        data: PanelData,
        cov_labels: tuple[str, ...],
        config: SamplerConfig,
        n_kept: int,
    ) -> None:
        d_out, n_ind = data.n_outcomes, data.n_ind
        k_cov = len(cov_labels)
        ii, jj = vech_indices(d_out)
        out_labels = data.outcome_labels
        self.labels: dict[str, list[str]] = {
            "beta": [
                f"beta[{out_labels[d]}:{cov_labels[k]}]"
                for d in range(d_out)
                for k in range(k_cov)
            ],
            "chol_vech": [f"l_eps[{i + 1},{j + 1}]" for i, j in zip(ii, jj)],
            "corr_eps_vech": [f"r_eps[{i + 1},{j + 1}]" for i, j in zip(ii, jj)],
            "sigma_alpha_diag": [f"sigma2_alpha[{d + 1}]" for d in range(d_out)],
            "corr_alpha_vech": [f"r_alpha[{i + 1},{j + 1}]" for i, j in zip(ii, jj)],
        }
        if config.store_alpha:
            self.labels["alpha"] = [
                f"alpha[{out_labels[d]},{i + 1}]"
                for d in range(d_out)
                for i in range(n_ind)
            ]
        if config.store_latent_probe:
            pi, pt = config.probe_cell
            if not (0 <= pi < n_ind and 0 <= pt < data.n_per):
                raise ValueError("probe_cell outside the panel")
            self.labels["ystar_probe"] = [
                f"ystar[{out_labels[d]},{pi + 1},{pt + 1}]" for d in range(d_out)
            ]
        self.blocks = {
            name: np.empty((n_kept, len(cols))) for name, cols in self.labels.items()
        }
        self._ii, self._jj = ii, jj
        self._probe = config.probe_cell
        self._row = 0

    def record(self, state: ParamState, corr: np.ndarray) -> None:
        row = self._row
        self.blocks["beta"][row] = state.beta.reshape(-1)
        self.blocks["chol_vech"][row] = state.chol.vech
        self.blocks["corr_eps_vech"][row] = corr[self._ii, self._jj]
        var = np.diag(state.sigma_alpha)
        self.blocks["sigma_alpha_diag"][row] = var
        sd = np.sqrt(var)
        self.blocks["corr_alpha_vech"][row] = (
            state.sigma_alpha[self._ii, self._jj] / (sd[self._ii] * sd[self._jj])
        )
        if "alpha" in self.blocks:
            self.blocks["alpha"][row] = state.alpha.reshape(-1)
        if "ystar_probe" in self.blocks:
            pi, pt = self._probe
            self.blocks["ystar_probe"][row] = state.ystar[:, pi, pt]
        self._row += 1


def _n_kept(config: SamplerConfig) -> int:
    span = config.iterations - config.burn_in
    return (span + config.thin - 1) // config.thin


def run_chain(
    data: PanelData, spec: ModelSpec | None = None, config: SamplerConfig | None = None
) -> ChainDraws:
    """Run the blocked Gibbs sampler and return the kept draws.

    Deterministic given ``config.seed``.  Post-burn-in draws are kept every
    ``thin`` sweeps; the metadata records dimensions, modes, the frozen
    step size, divergence counts, and wall seconds per sweep.
    """
    spec = spec or ModelSpec()
    config = config or SamplerConfig()
    x, cov_labels = _design(data, spec)
    rng = np.random.default_rng(config.seed)
    d_out, n_ind, n_per = data.y.shape
    k_cov = x.shape[0]
    n_obs = n_ind * n_per
    nu = spec.resolved_corr_dof(d_out)

    x_flat = x.reshape(k_cov, -1)
    s_xx = x_flat @ x_flat.T
    y = data.y
    state = _init_state(data, spec, x, rng)
    corr, prec_eps = _corr_and_prec(state.chol)
    psi_diag = np.full(d_out * k_cov, spec.beta_prior_variance)

    hmc = HmcConfig(target_accept=config.target_accept, max_depth=config.max_depth)
    recorder = _Recorder(data, cov_labels, config, _n_kept(config))

    start = time.perf_counter()
    for it in range(config.iterations):
        anti_on = it >= config.antithetic_from
        adapting = it < config.adapt_until

        mean = np.einsum("dk,kn->dn", state.beta, x_flat).reshape(d_out, n_ind, n_per)
        mean += state.alpha[:, :, None]
        update_latents(state.ystar, y, mean, prec_eps, rng)

        resid = (state.ystar - state.alpha[:, :, None]).reshape(d_out, -1)
        if state.horseshoe is not None:
            state.horseshoe, psi_diag = horseshoe_update(
                state.beta.reshape(-1), state.horseshoe, rng
            )
        state.beta = update_beta(
            resid, x_flat, s_xx, prec_eps, psi_diag, state.beta, rng,
            antithetic=(config.beta_mode == "antithetic" and anti_on),
        )

        fitted = np.einsum("dk,kn->dn", state.beta, x_flat)
        eps_resid = (
            state.ystar.reshape(d_out, -1) - fitted
            - np.repeat(state.alpha, n_per, axis=1)
        )
        scatter = eps_resid @ eps_resid.T
        state.chol = update_corr(state.chol, scatter, n_obs, nu, hmc, adapting, rng)
        corr, prec_eps = _corr_and_prec(state.chol)

        resid_sum = (state.ystar.reshape(d_out, -1) - fitted).reshape(
            d_out, n_ind, n_per
        ).sum(axis=2)
        state.alpha = update_alpha(
            resid_sum, n_per, prec_eps, state.sigma_alpha, state.alpha, rng,
            antithetic=(config.alpha_mode == "antithetic" and anti_on),
        )

        state.sigma_alpha, state.hiw_aux = update_sigma_alpha(
            state.alpha, spec, state.sigma_alpha, state.hiw_aux, rng
        )

        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            recorder.record(state, corr)
    seconds = (time.perf_counter() - start) / config.iterations

    meta = _chain_meta(data, spec, config, cov_labels, "gibbs", seconds)
    meta["n_divergences"] = hmc.n_divergences
    meta["step_size"] = hmc.step_size
    return ChainDraws(blocks=recorder.blocks, labels=recorder.labels, meta=meta)


def _chain_meta(
    data: PanelData,
    spec: ModelSpec,
    config: SamplerConfig,
    cov_labels: tuple[str, ...],
    engine: str,
    seconds: float,
) -> dict:
    meta = {
        "engine": engine,
        "model": spec.model,
        "n_outcomes": data.n_outcomes,
        "n_ind": data.n_ind,
        "n_per": data.n_per,
        "n_cov": len(cov_labels),
        "outcome_labels": list(data.outcome_labels),
        "covariate_labels": list(cov_labels),
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "seed": config.seed,
        "beta_mode": config.beta_mode,
        "alpha_mode": config.alpha_mode,
        "antithetic_start": config.antithetic_from,
        "beta_prior": spec.beta_prior,
        "beta_prior_variance": spec.beta_prior_variance,
        "sigma_alpha_prior": spec.sigma_alpha_prior,
        "corr_dof": spec.resolved_corr_dof(data.n_outcomes),
        "probe_cell": list(config.probe_cell),
        "seconds_per_iteration": seconds,
        "n_divergences": 0,
        "step_size": None,
    }
    if spec.model == 2 and data.z is not None:
        meta["z"] = data.z.tolist()
        meta["z_labels"] = list(data.z_labels)
    return meta


def run_px_chain(
    data: PanelData, spec: ModelSpec | None = None, config: SamplerConfig | None = None
) -> ChainDraws:
    """Parameter-expanded comparison sampler.

    Each sweep updates y*, alpha, and Sigma_alpha exactly as the main
    chain (always with fresh draws), then moves to an unidentified scale:
    per-outcome expansions delta_d^2 ~ IG((D+1)/2, (R^-1)_dd / 2) scale the
    latents and random effects, a conjugate matrix-normal/inverse-Wishart
    regression draws unrestricted coefficients and error covariance, and
    the draw is mapped back by the inverse standard deviations so the
    error scale has unit diagonal exactly.  alpha and Sigma_alpha are not
    rescaled, which is the documented source of this sampler's upward bias
    on the random-effect variances.
    """
    spec = spec or ModelSpec()
    config = config or SamplerConfig()
    x, cov_labels = _design(data, spec)
    rng = np.random.default_rng(config.seed)
    d_out, n_ind, n_per = data.y.shape
    k_cov = x.shape[0]
    n_obs = n_ind * n_per

    x_flat = x.reshape(k_cov, -1)
    s_xx = x_flat @ x_flat.T
    omega0_inv = np.eye(k_cov) / 100.0
    nu_eps = d_out + 1.0
    y = data.y
    state = _init_state(data, spec, x, rng)
    corr = np.eye(d_out)
    prec_eps = np.eye(d_out)

    recorder = _Recorder(data, cov_labels, config, _n_kept(config))
    start = time.perf_counter()
    for it in range(config.iterations):
        mean = np.einsum("dk,kn->dn", state.beta, x_flat).reshape(d_out, n_ind, n_per)
        mean += state.alpha[:, :, None]
        update_latents(state.ystar, y, mean, prec_eps, rng)

        fitted = np.einsum("dk,kn->dn", state.beta, x_flat)
        resid_sum = (state.ystar.reshape(d_out, -1) - fitted).reshape(
            d_out, n_ind, n_per
        ).sum(axis=2)
        state.alpha = update_alpha(
            resid_sum, n_per, prec_eps, state.sigma_alpha, state.alpha, rng
        )
        state.sigma_alpha, state.hiw_aux = update_sigma_alpha(
            state.alpha, spec, state.sigma_alpha, state.hiw_aux, rng
        )

        # Expansion: per-outcome scale freedoms.
        shape = 0.5 * (d_out + 1.0)
        delta2 = np.diag(prec_eps) / (2.0 * rng.gamma(shape, 1.0, size=d_out))
        delta = np.sqrt(delta2)
        z_lat = delta[:, None, None] * state.ystar
        w = delta[:, None] * state.alpha

        # Conjugate matrix-normal / inverse-Wishart regression on the
        # expanded scale: responses z - w, design x.
        resp = z_lat.reshape(d_out, -1) - np.repeat(w, n_per, axis=1)
        omega_n_inv = omega0_inv + s_xx
        omega_f = np.linalg.cholesky(omega_n_inv)
        cross = resp @ x_flat.T
        m_n = cho_solve((omega_f, True), cross.T).T
        # Sum-of-PSD form of I + resp resp' - m_n omega_n_inv m_n'; the
        # subtractive version loses definiteness when resp is large.
        resid_px = resp - m_n @ x_flat
        psi_n = (
            np.eye(d_out)
            + resid_px @ resid_px.T
            + m_n @ omega0_inv @ m_n.T
        )
        psi_n = 0.5 * (psi_n + psi_n.T)
        sigma_eps = sample_inverse_wishart(nu_eps + n_obs, psi_n, rng)
        omega_chol = np.linalg.cholesky(
            cho_solve((omega_f, True), np.eye(k_cov))
        )
        gamma = m_n + np.linalg.cholesky(sigma_eps) @ rng.standard_normal(
            (d_out, k_cov)
        ) @ omega_chol.T

        # Back to the identified scale; unit diagonal exactly.
        d_star = 1.0 / np.sqrt(np.diag(sigma_eps))
        state.beta = d_star[:, None] * gamma
        corr = sigma_eps * np.outer(d_star, d_star)
        np.fill_diagonal(corr, 1.0)
        corr = 0.5 * (corr + corr.T)
        state.ystar = d_star[:, None, None] * z_lat
        state.chol = corr_to_cholesky(CorrelationMatrix(corr))
        prec_eps = cho_solve(cho_factor(corr, lower=True), np.eye(d_out))

        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            recorder.record(state, corr)
    seconds = (time.perf_counter() - start) / config.iterations

    meta = _chain_meta(data, spec, config, cov_labels, "px", seconds)
    return ChainDraws(blocks=recorder.blocks, labels=recorder.labels, meta=meta)
