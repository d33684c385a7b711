"""Chain quality measures and a joint-distribution correctness harness.

The autocorrelation time estimator is Geyer's initial-positive-sequence
rule on FFT autocovariances: sum successive autocorrelation pairs while
they stay positive.  It behaves sensibly for negatively correlated
(reflection-coupled) chains, where the time can legitimately drop below 1;
effective sample size is n / IACT by construction.

The harness at the bottom checks the whole Gibbs engine the
distribution-equality way: moments of parameters drawn iid from the prior
(with data simulated once per draw) must match moments from a chain that
alternates parameter sweeps with fresh data simulation.  Both runs see the
same probes; heavy-tailed blocks are compared through a bounded map so
every z-score has a finite variance behind it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .chains import ChainDraws
from .corr import (
    CorrelationMatrix,
    cholesky_to_corr,
    corr_to_cholesky,
    vech_indices,
)
from .data import fmt17
from .gibbs import (
    horseshoe_mask,
    update_alpha,
    update_beta,
    update_corr,
    update_latents,
    update_sigma_alpha,
    ModelSpec,
)
from .priors import (
    HiwPrior,
    HorseshoeState,
    _inverse_gamma,
    horseshoe_update,
    sample_corr_marg_uniform,
    sample_inverse_wishart,
)
from .samplers import HmcConfig

__all__ = [
    "iact",
    "ess",
    "SeriesSummary",
    "summarize",
    "summary_table",
    "rmse",
    "RmseReport",
    "IactRatioRow",
    "IactRatioReport",
    "iact_ratio_report",
    "GewekeRow",
    "GewekeResult",
    "geweke_joint_test",
]

_IACT_FLOOR = 1e-12


def iact(series) -> float:
    """Integrated autocorrelation time, initial-positive-sequence rule.

    Sums autocorrelation pairs rho_{2m} + rho_{2m+1} until the first
    non-positive pair.  Values below 1 indicate negative serial dependence
    (super-efficiency); the result is floored just above zero.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 points to estimate an IACT")
    x = x - x.mean()
    var0 = float(x @ x) / n
    if not np.isfinite(var0) or var0 <= 0.0:
        raise ValueError("constant series has no autocorrelation time")
    m = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conjugate(f), m)[:n] / (n * var0)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return max(tau, _IACT_FLOOR)


def ess(series) -> float:
    """Effective sample size n / IACT."""
    x = np.asarray(series, dtype=float).ravel()
    return x.size / iact(x)


_QUANTS = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True)
class SeriesSummary:
    """Location, spread, quantiles and mixing of one scalar series."""

    name: str
    n: int
    mean: float
    sd: float
    quantiles: tuple[float, float, float, float, float]
    iact: float
    ess: float


def summarize(series, name: str = "") -> SeriesSummary:
    x = np.asarray(series, dtype=float).ravel()
    tau = iact(x)
    qs = tuple(float(q) for q in np.quantile(x, _QUANTS))
    return SeriesSummary(
        name=name,
        n=x.size,
        mean=float(x.mean()),
        sd=float(x.std(ddof=1)),
        quantiles=qs,
        iact=tau,
        ess=x.size / tau,
    )


def summary_table(draws: ChainDraws, blocks=None) -> list[SeriesSummary]:
    """One SeriesSummary per labelled column of the requested blocks."""
    names = list(blocks) if blocks is not None else sorted(draws.blocks)
    out: list[SeriesSummary] = []
    for block in names:
        arr = draws.block(block)
        for j, label in enumerate(draws.labels[block]):
            out.append(summarize(arr[:, j], name=label))
    return out


def summary_csv_rows(summaries: list[SeriesSummary]) -> list[list[str]]:
    rows = [[
        "parameter", "n", "mean", "sd",
        "q2.5", "q25", "q50", "q75", "q97.5", "iact", "ess",
    ]]
    for s in summaries:
        rows.append(
            [s.name, str(s.n), fmt17(s.mean), fmt17(s.sd)]
            + [fmt17(q) for q in s.quantiles]
            + [fmt17(s.iact), fmt17(s.ess)]
        )
    return rows


def summary_text(summaries: list[SeriesSummary]) -> str:
    header = ["parameter", "mean", "sd", "q2.5", "q50", "q97.5", "iact", "ess"]
    body = [
        [
            s.name, "%.4g" % s.mean, "%.4g" % s.sd, "%.4g" % s.quantiles[0],
            "%.4g" % s.quantiles[2], "%.4g" % s.quantiles[4],
            "%.3g" % s.iact, "%.4g" % s.ess,
        ]
        for s in summaries
    ]
    return _aligned(header, body)


def _aligned(header: list[str], body: list[list[str]]) -> str:
    rows = [header] + body
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(c.rjust(w) if i else c.ljust(w)
                               for i, (c, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def rmse(draws, truth):
    """Root mean squared deviation of draws from a reference value.

    For (n, m) draws and an m-vector reference, one value per margin;
    invariant under permutation of the draws.
    """
    d = np.asarray(draws, dtype=float)
    t = np.asarray(truth, dtype=float)
    scalar = d.ndim == 1
    if scalar:
        d = d[:, None]
        t = t.reshape(1)
    if d.ndim != 2 or t.shape != (d.shape[1],):
        raise ValueError("draws must be (n, m) with one reference per margin")
    out = np.sqrt(np.mean((d - t[None, :]) ** 2, axis=0))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class RmseReport:
    """Per-parameter posterior RMSE against a ground truth vector."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.labels),):
            raise ValueError("one value per label required")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", tuple(self.labels))

    def to_csv_rows(self) -> list[list[str]]:
        rows = [["parameter", "rmse"]]
        rows += [[lab, fmt17(v)] for lab, v in zip(self.labels, self.values)]
        return rows

    def to_text(self) -> str:
        return _aligned(
            ["parameter", "rmse"],
            [[lab, "%.6g" % v] for lab, v in zip(self.labels, self.values)],
        )


_CANON_BLOCKS = (
    "ystar_probe",
    "alpha",
    "beta",
    "chol_vech",
    "corr_eps_vech",
    "sigma_alpha_diag",
    "corr_alpha_vech",
)


@dataclass(frozen=True)
class IactRatioRow:
    block: str
    n_series: int
    iact_a: float
    iact_b: float
    ratio: float          # iact_a / iact_b, means over the block
    ratio_min: float      # per-series extremes
    ratio_max: float


@dataclass(frozen=True)
class IactRatioReport:
    rows: tuple[IactRatioRow, ...]
    seconds_a: float | None
    seconds_b: float | None

    def row(self, block: str) -> IactRatioRow:
        for r in self.rows:
            if r.block == block:
                return r
        raise KeyError(f"no block {block!r} in report")

    def to_csv_rows(self) -> list[list[str]]:
        rows = [[
            "block", "n_series", "iact_a", "iact_b",
            "ratio_a_over_b", "ratio_min", "ratio_max",
        ]]
        for r in self.rows:
            rows.append([
                r.block, str(r.n_series), fmt17(r.iact_a), fmt17(r.iact_b),
                fmt17(r.ratio), fmt17(r.ratio_min), fmt17(r.ratio_max),
            ])
        if self.seconds_a is not None and self.seconds_b is not None:
            rows.append([
                "seconds_per_iteration", "", fmt17(self.seconds_a),
                fmt17(self.seconds_b), fmt17(self.seconds_a / self.seconds_b),
                "", "",
            ])
        return rows

    def to_text(self) -> str:
        body = [
            [
                r.block, str(r.n_series), "%.4g" % r.iact_a, "%.4g" % r.iact_b,
                "%.4g" % r.ratio, "%.4g" % r.ratio_min, "%.4g" % r.ratio_max,
            ]
            for r in self.rows
        ]
        if self.seconds_a is not None and self.seconds_b is not None:
            body.append([
                "sec/iter", "", "%.4g" % self.seconds_a, "%.4g" % self.seconds_b,
                "%.4g" % (self.seconds_a / self.seconds_b), "", "",
            ])
        return _aligned(
            ["block", "k", "iact_a", "iact_b", "a/b", "min", "max"], body
        )


def iact_ratio_report(
    draws_a: ChainDraws, draws_b: ChainDraws, blocks=None
) -> IactRatioReport:
    """Blockwise IACT comparison of two chains on the same model.

    The headline ratio per block is mean(IACT_a) / mean(IACT_b), so
    swapping the arguments inverts every ratio exactly.  The chains must
    store identical parameter layouts.
    """
    for key in ("n_outcomes", "n_ind", "n_per", "n_cov", "model"):
        va, vb = draws_a.meta.get(key), draws_b.meta.get(key)
        if va is not None and vb is not None and va != vb:
            raise ValueError(f"chains disagree on {key}: {va} vs {vb}")
    if blocks is None:
        blocks = [b for b in _CANON_BLOCKS
                  if b in draws_a.blocks and b in draws_b.blocks]
    rows = []
    for block in blocks:
        arr_a, arr_b = draws_a.block(block), draws_b.block(block)
        if draws_a.labels[block] != draws_b.labels[block]:
            raise ValueError(f"chains disagree on the layout of block {block!r}")
        tau_a = np.array([iact(arr_a[:, j]) for j in range(arr_a.shape[1])])
        tau_b = np.array([iact(arr_b[:, j]) for j in range(arr_b.shape[1])])
        per = tau_a / tau_b
        rows.append(IactRatioRow(
            block=block,
            n_series=arr_a.shape[1],
            iact_a=float(tau_a.mean()),
            iact_b=float(tau_b.mean()),
            ratio=float(tau_a.mean() / tau_b.mean()),
            ratio_min=float(per.min()),
            ratio_max=float(per.max()),
        ))
    return IactRatioReport(
        rows=tuple(rows),
        seconds_a=draws_a.meta.get("seconds_per_iteration"),
        seconds_b=draws_b.meta.get("seconds_per_iteration"),
    )


# ---------------------------------------------------------------------------
# Joint-distribution correctness harness.

_BOUND_SCALE = 3.0


def _bounded(x):
    return np.tanh(np.asarray(x, dtype=float) / _BOUND_SCALE)


@dataclass(frozen=True)
class GewekeRow:
    probe: str
    moment: int            # 1 or 2
    mean_marginal: float   # iid prior-simulator estimate
    mean_successive: float # Gibbs-chain estimate
    z: float


@dataclass
class GewekeResult:
    combos: dict[str, list[GewekeRow]] = field(default_factory=dict)
    sweeps: int = 0
    n_marginal: int = 0

    def max_abs_z(self, combo: str | None = None) -> float:
        rows = (
            self.combos[combo]
            if combo is not None
            else [r for rows in self.combos.values() for r in rows]
        )
        return max(abs(r.z) for r in rows)

    def to_csv_rows(self) -> list[list[str]]:
        rows = [["combo", "probe", "moment", "mean_marginal",
                 "mean_successive", "z"]]
        for combo, entries in self.combos.items():
            for r in entries:
                rows.append([
                    combo, r.probe, str(r.moment),
                    fmt17(r.mean_marginal), fmt17(r.mean_successive), fmt17(r.z),
                ])
        return rows

    def to_text(self) -> str:
        body = []
        for combo, entries in self.combos.items():
            for r in entries:
                body.append([
                    combo, r.probe, str(r.moment), "%.5g" % r.mean_marginal,
                    "%.5g" % r.mean_successive, "%.3g" % r.z,
                ])
        return _aligned(
            ["combo", "probe", "moment", "marginal", "successive", "z"], body
        )


class _GewekeSetup:
    """Shared dimensions, priors, probes and transforms for one combo."""

    def __init__(self, d, p, t, k, x, beta_prior, sigma_prior,
                 beta_var, iw_dof, iw_scale, hiw: HiwPrior):
        self.d, self.p, self.t, self.k = d, p, t, k
        self.x = x
        self.x_flat = x.reshape(k, -1)
        self.s_xx = self.x_flat @ self.x_flat.T
        self.beta_prior = beta_prior
        self.sigma_prior = sigma_prior
        self.beta_var = beta_var
        self.iw_dof = iw_dof
        self.iw_scale = iw_scale
        self.hiw = hiw
        self.nu = d + 1.0
        self.mask = horseshoe_mask(d, k)
        ii, jj = vech_indices(d)
        self.vech = (ii, jj)
        di, dj = np.tril_indices(d)
        self.tril = (di, dj)
        beta_tf = _bounded if beta_prior == "horseshoe" else np.asarray
        self.names: list[str] = []
        self.transforms: list = []
        self.binary: list[bool] = []
        for d_i in range(d):
            for k_i in range(k):
                self._add(f"beta[{d_i + 1},{k_i + 1}]", beta_tf)
        for i, j in zip(ii, jj):
            self._add(f"r_eps[{i + 1},{j + 1}]", np.asarray)
        for i, j in zip(di, dj):
            self._add(f"sigma_alpha[{i + 1},{j + 1}]", _bounded)
        for d_i in range(d):
            for p_i in range(p):
                self._add(f"alpha[{d_i + 1},{p_i + 1}]", _bounded)
        for d_i in range(d):
            self._add(f"ystar[{d_i + 1},1,1]", _bounded)
        for d_i in range(d):
            self._add(f"y[{d_i + 1},1,1]", np.asarray, binary=True)

    def _add(self, name, transform, binary=False):
        self.names.append(name)
        self.transforms.append(transform)
        self.binary.append(binary)

    def n_probes(self) -> int:
        return len(self.names)

    def fill_probes(self, out, beta, corr, sigma_alpha, alpha, ystar, y):
        """Write transformed probe values for a batch.

        beta (m,d,k); corr (m,d,d); sigma_alpha (m,d,d); alpha (m,d,p);
        ystar,y (m,d) at the probed cell.  out is (m, n_probes).
        """
        ii, jj = self.vech
        di, dj = self.tril
        cols = [beta.reshape(beta.shape[0], -1), corr[:, ii, jj],
                sigma_alpha[:, di, dj],
                alpha.reshape(alpha.shape[0], -1), ystar, y]
        j0 = 0
        for block in cols:
            j1 = j0 + block.shape[1]
            out[:, j0:j1] = block
            j0 = j1
        for j, tf in enumerate(self.transforms):
            if tf is not np.asarray:
                out[:, j] = tf(out[:, j])

    # -- prior draws -------------------------------------------------------

    def draw_beta(self, m, rng):
        z = rng.standard_normal((m, self.d * self.k))
        if self.beta_prior == "normal":
            return (np.sqrt(self.beta_var) * z).reshape(m, self.d, self.k)
        n_shrunk = int(self.mask.sum())
        nu_aux = _inverse_gamma(0.5, 1.0, rng, size=(m, n_shrunk))
        lam2 = _inverse_gamma(0.5, 1.0 / nu_aux, rng)
        xi = _inverse_gamma(0.5, 1.0, rng, size=(m, 1))
        tau2 = _inverse_gamma(0.5, 1.0 / xi, rng)
        sd = np.full((m, self.d * self.k), np.sqrt(self.beta_var))
        sd[:, self.mask] = np.sqrt(tau2 * lam2)
        return (sd * z).reshape(m, self.d, self.k)

    def draw_sigma_alpha(self, m, rng):
        if self.sigma_prior == "iw":
            return sample_inverse_wishart(self.iw_dof, self.iw_scale, rng, size=m)
        a = _inverse_gamma(0.5, self.hiw.scales**-2.0, rng, size=(m, self.d))
        base = sample_inverse_wishart(
            self.hiw.dof + self.d - 1.0, np.eye(self.d), rng, size=m
        )
        s = np.sqrt(2.0 * self.hiw.dof / a)
        return base * s[:, :, None] * s[:, None, :]

    def simulate(self, m, rng):
        """m iid draws of (params, data) from the generative model."""
        beta = self.draw_beta(m, rng)
        corr = sample_corr_marg_uniform(self.d, self.nu, rng, size=m)
        sigma_alpha = self.draw_sigma_alpha(m, rng)
        chol_a = np.linalg.cholesky(sigma_alpha)
        alpha = np.einsum(
            "mij,mpj->mip", chol_a, rng.standard_normal((m, self.p, self.d))
        )
        chol_r = np.linalg.cholesky(corr)
        eps = np.einsum(
            "mij,mptj->mipt", chol_r,
            rng.standard_normal((m, self.p, self.t, self.d)),
        )
        ystar = (
            np.einsum("mdk,kpt->mdpt", beta, self.x)
            + alpha[:, :, :, None]
            + eps
        )
        return beta, corr, sigma_alpha, alpha, ystar


def _marginal_moments(setup: _GewekeSetup, n: int, rng) -> np.ndarray:
    probes = np.empty((n, setup.n_probes()))
    done = 0
    while done < n:
        m = min(20000, n - done)
        beta, corr, sigma_alpha, alpha, ystar = setup.simulate(m, rng)
        setup.fill_probes(
            probes[done : done + m], beta, corr, sigma_alpha, alpha,
            ystar[:, :, 0, 0], (ystar[:, :, 0, 0] > 0).astype(float),
        )
        done += m
    return probes


def _successive_moments(
    setup: _GewekeSetup, sweeps: int, adapt_sweeps: int, mode: str,
    variance_scale: float, rng,
) -> np.ndarray:
    d, p, t, k = setup.d, setup.p, setup.t, setup.k
    beta, corr, sigma_alpha, alpha, _ = (
        a[0] for a in setup.simulate(1, rng)
    )
    chol = corr_to_cholesky(CorrelationMatrix(corr))
    prec = cho_solve(cho_factor(corr, lower=True), np.eye(d))
    spec = ModelSpec(
        beta_prior=setup.beta_prior,
        beta_prior_variance=setup.beta_var,
        sigma_alpha_prior=setup.sigma_prior,
        iw_dof=setup.iw_dof, iw_scale=setup.iw_scale,
        hiw_dof=setup.hiw.dof, hiw_scale=float(setup.hiw.scales[0]),
    )
    horseshoe = None
    psi_diag = np.full(d * k, setup.beta_var)
    if setup.beta_prior == "horseshoe":
        horseshoe = HorseshoeState(
            shrink_mask=setup.mask, free_variance=setup.beta_var
        )
    hiw_aux = None
    hmc = HmcConfig()
    anti = mode == "antithetic"
    probes = np.empty((sweeps, setup.n_probes()))
    probe_row = np.empty((1, setup.n_probes()))

    for sweep in range(adapt_sweeps + sweeps):
        adapting = sweep < adapt_sweeps
        mean = np.einsum("dk,kn->dn", beta, setup.x_flat).reshape(d, p, t)
        mean += alpha[:, :, None]
        chol_r = np.linalg.cholesky(corr)
        eps = (chol_r @ rng.standard_normal((d, p * t))).reshape(d, p, t)
        ystar = mean + eps
        y = (ystar > 0).astype(np.int8)

        update_latents(ystar, y, mean, prec, rng)

        if horseshoe is not None:
            horseshoe, psi_diag = horseshoe_update(
                beta.reshape(-1), horseshoe, rng
            )
        resid = (ystar - alpha[:, :, None]).reshape(d, -1)
        beta = update_beta(
            resid, setup.x_flat, setup.s_xx, prec, psi_diag, beta, rng,
            antithetic=anti,
        )

        fitted = np.einsum("dk,kn->dn", beta, setup.x_flat)
        eps_resid = ystar.reshape(d, -1) - fitted - np.repeat(alpha, t, axis=1)
        scatter = eps_resid @ eps_resid.T
        chol = update_corr(chol, scatter, p * t, setup.nu, hmc, adapting, rng)
        corr = cholesky_to_corr(chol).values
        prec = cho_solve(cho_factor(corr, lower=True), np.eye(d))

        resid_sum = (ystar.reshape(d, -1) - fitted).reshape(d, p, t).sum(axis=2)
        alpha = update_alpha(
            resid_sum, t, prec, sigma_alpha, alpha, rng,
            antithetic=anti, variance_scale=variance_scale,
        )

        sigma_alpha, hiw_aux = update_sigma_alpha(
            alpha, spec, sigma_alpha, hiw_aux, rng
        )

        if sweep >= adapt_sweeps:
            setup.fill_probes(
                probe_row, beta[None], corr[None], sigma_alpha[None],
                alpha[None], ystar[None, :, 0, 0],
                y[None, :, 0, 0].astype(float),
            )
            probes[sweep - adapt_sweeps] = probe_row[0]
    return probes


def geweke_joint_test(
    n_outcomes: int = 2,
    n_ind: int = 3,
    n_per: int = 2,
    n_cov: int = 1,
    sweeps: int = 20000,
    seed: int = 0,
    combos=None,
    variance_scale: float = 1.0,
    adapt_sweeps: int = 500,
    beta_prior_variance: float = 1.0,
    iw_dof: float | None = None,
    iw_scale: np.ndarray | float | None = None,
    hiw_dof: float = 2.0,
    hiw_scale: float = 2.0,
) -> GewekeResult:
    """Distribution-equality test of the full Gibbs engine.

    For each (covariance prior, coefficient prior, proposal mode) combo,
    compares probe moments between (a) iid draws of parameters from the
    prior, each with freshly simulated data, and (b) a chain alternating
    one Gibbs sweep with a fresh data simulation at the current
    parameters.  Any conditional that is off drifts the chain's stationary
    law off the prior and shows up as a large |z|.

    Probes cover every coefficient, correlation, covariance entry, random
    effect, one latent cell, and one observed cell; first and second
    moments are compared (first only for the binary probe).  Heavy-tailed
    blocks (covariances, random effects, latents, shrunk coefficients) are
    probed through tanh(x/3) so the comparison always has finite variance.
    ``variance_scale`` inflates the random-effect draw covariance and is
    the deliberate-fault hook used to confirm the test's sensitivity.

    Deterministic given ``seed``.  Total parameter count must stay small
    (< 50); the default inverse-Wishart dof is D + 10 so untransformed
    moments stay well behaved.
    """
    d, p, t, k = n_outcomes, n_ind, n_per, n_cov
    n_params = d * k + d * (d - 1) // 2 + d * (d + 1) // 2 + d * p
    if n_params >= 50:
        raise ValueError(f"harness wants < 50 parameters, got {n_params}")
    if sweeps < 100:
        raise ValueError("need at least 100 sweeps")
    if combos is None:
        combos = [
            (sp, bp, mode)
            for sp, bp, mode in product(
                ("iw", "hiw"), ("normal", "horseshoe"),
                ("independent", "antithetic"),
            )
        ]
    iw_dof = float(iw_dof) if iw_dof is not None else d + 10.0
    if iw_scale is None:
        iw_scale_arr = np.eye(d)
    else:
        iw_scale_arr = np.asarray(iw_scale, dtype=float)
        if iw_scale_arr.ndim == 0:
            iw_scale_arr = float(iw_scale_arr) * np.eye(d)
    hiw = HiwPrior(hiw_dof, np.full(d, float(hiw_scale)))

    ss = np.random.SeedSequence(seed)
    children = ss.spawn(1 + 2 * len(combos))
    rng_x = np.random.default_rng(children[0])
    x = np.ones((k, p, t))
    if k > 1:
        x[1:] = rng_x.standard_normal((k - 1, p, t))

    result = GewekeResult(sweeps=sweeps, n_marginal=sweeps)
    for idx, (sigma_prior, beta_prior, mode) in enumerate(combos):
        setup = _GewekeSetup(
            d, p, t, k, x, beta_prior, sigma_prior,
            beta_prior_variance, iw_dof, iw_scale_arr, hiw,
        )
        rng_mc = np.random.default_rng(children[1 + 2 * idx])
        rng_sc = np.random.default_rng(children[2 + 2 * idx])
        mc = _marginal_moments(setup, sweeps, rng_mc)
        sc = _successive_moments(
            setup, sweeps, adapt_sweeps, mode, variance_scale, rng_sc
        )
        rows = []
        for j, name in enumerate(setup.names):
            for moment in (1, 2):
                if moment == 2 and setup.binary[j]:
                    continue
                a = mc[:, j] if moment == 1 else mc[:, j] ** 2
                b = sc[:, j] if moment == 1 else sc[:, j] ** 2
                m_a, m_b = float(a.mean()), float(b.mean())
                se_a = float(a.std(ddof=1)) / np.sqrt(a.size)
                tau = iact(b)
                se_b = float(b.std(ddof=1)) * np.sqrt(tau / b.size)
                denom = float(np.hypot(se_a, se_b))
                if not (np.isfinite(m_a) and np.isfinite(m_b)
                        and np.isfinite(denom) and denom > 0):
                    raise ValueError(
                        f"non-finite moment for probe {name!r} (moment {moment})"
                    )
                rows.append(GewekeRow(
                    probe=name, moment=moment,
                    mean_marginal=m_a, mean_successive=m_b,
                    z=(m_a - m_b) / denom,
                ))
        result.combos[f"{sigma_prior}+{beta_prior}+{mode}"] = rows
    return result
