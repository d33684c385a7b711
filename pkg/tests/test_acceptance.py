"""Battery of end-to-end acceptance checks.

Each test prints one PASS or FAIL verdict line with its measured
quantities, so a full run (``pytest tests/test_acceptance.py -s``) reads
as a checklist.  The checks cover the correlation reparameterisation and
its gradients, the prior's marginal laws, the elementary sampler
identities, truncated-normal accuracy, joint-distribution correctness of
the Gibbs engine, the variance-reduction and shrinkage claims at study
scale, the parameter-expanded comparison, and diagnostic calibration.
All randomness is seeded; the chain-based checks dominate the roughly
twenty minute runtime.
"""

from __future__ import annotations

import functools
import time

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import ks_2samp, kstest

from mvprobit.builtin_params import gp_study_parameters
from mvprobit.corr import (
    cholesky_to_corr,
    corr_to_cholesky,
    grad_log_target_cholesky,
    log_jacobian,
    log_target_cholesky,
)
from mvprobit.data import design_covariates, gaussian_covariates, simulate_panel
from mvprobit.diagnostics import geweke_joint_test, iact, iact_ratio_report, rmse
from mvprobit.gibbs import ModelSpec, SamplerConfig, run_chain, run_px_chain
from mvprobit.priors import prior_study
from mvprobit.samplers import (
    antithetic_step,
    exact_gauss_hmc,
    over_relax_step,
    truncated_normal_array,
)

from oracles import ar1_series, fd_gradient, fd_log_jacobian, windowed_iact


def _checked(label):
    """Print one verdict line per check, also on unexpected errors."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(self):
            t0 = time.perf_counter()
            try:
                ok, detail = fn(self)
            except Exception as exc:
                print(f"{label} FAIL {exc!r}", flush=True)
                raise
            detail = f"{detail} [{time.perf_counter() - t0:.1f}s]"
            print(f"{label} {'PASS' if ok else 'FAIL'} {detail}", flush=True)
            assert ok, f"{label}: {detail}"

        return run

    return wrap


def _compound_corr(dim: int, rho: float) -> np.ndarray:
    r = np.full((dim, dim), rho)
    np.fill_diagonal(r, 1.0)
    return r


def _bivariate_gibbs(scheme: str, n_iter: int = 10_000, rho: float = 0.99,
                     seed: int = 0) -> np.ndarray:
    """Two-block Gibbs on a bivariate normal, started away from the mode.

    The over-relaxed scheme applies kappa = 0.9 to both coordinates; the
    coupled scheme keeps one stochastic over-relaxed block and reflects
    the other deterministically, which preserves ergodicity.
    """
    rng = np.random.default_rng(seed)
    sd = np.sqrt(1.0 - rho ** 2)
    th = np.array([2.0, 2.0])
    out = np.empty((n_iter, 2))
    for k in range(n_iter):
        mu0 = rho * th[1]
        if scheme == "independent":
            th[0] = mu0 + sd * rng.standard_normal()
        else:
            th[0] = over_relax_step(th[0], mu0, sd, 0.9, rng)
        mu1 = rho * th[0]
        if scheme == "independent":
            th[1] = mu1 + sd * rng.standard_normal()
        elif scheme == "over_relaxed":
            th[1] = over_relax_step(th[1], mu1, sd, 0.9, rng)
        else:
            th[1] = antithetic_step(th[1], mu1)
        out[k] = th
    return out


class TestAcceptance:
    @_checked("ACCEPTANCE 01")
    def test_01_reparameterisation_exactness(self):
        rng = np.random.default_rng(105)
        rt_worst = 0.0
        jac_worst = 0.0
        for case in range(100):
            dim = 2 + case % 5
            vech = rng.standard_normal(dim * (dim - 1) // 2)
            r = cholesky_to_corr(vech)
            l2 = corr_to_cholesky(r)
            r2 = cholesky_to_corr(l2)
            rt = max(
                float(np.abs(l2.vech - vech).max()),
                float(np.abs(r2.values - r.values).max()),
            )
            got = log_jacobian(vech)
            ref = fd_log_jacobian(vech)
            rel = abs(got - ref) / max(abs(ref), 1e-8)
            rt_worst = max(rt_worst, rt)
            jac_worst = max(jac_worst, rel)
        ok = rt_worst < 1e-10 and jac_worst < 1e-6
        return ok, f"round-trip max {rt_worst:.2e}, jacobian rel max {jac_worst:.2e}"

    @_checked("ACCEPTANCE 02")
    def test_02_gradient_exactness(self):
        rng = np.random.default_rng(205)
        worst = 0.0
        for case in range(50):
            dim = 2 + case % 4
            n = int(rng.integers(5, 25))
            vech = rng.standard_normal(dim * (dim - 1) // 2)
            res = rng.standard_normal((n, dim))
            nu = dim + 1.0
            grad = grad_log_target_cholesky(vech, res, nu)
            ref = fd_gradient(lambda v: log_target_cholesky(v, res, nu), vech)
            rel = np.abs(grad - ref) / np.maximum(1.0, np.abs(ref))
            worst = max(worst, float(rel.max()))
        ok = worst < 1e-5
        return ok, f"componentwise rel max {worst:.2e} over 50 instances"

    @_checked("ACCEPTANCE 03")
    def test_03_prior_marginals(self):
        rng = np.random.default_rng(0)
        out = prior_study(4, 5.0, 100_000, rng)
        r = out["corr_draws"]
        p = out["partial_draws"]
        p_r = min(
            kstest(r[:, k], lambda x: (x + 1.0) / 2.0).pvalue
            for k in range(r.shape[1])
        )
        p_p = min(
            kstest(p[:, k], lambda x: beta_dist.cdf((x + 1.0) / 2.0, 2.0, 2.0)).pvalue
            for k in range(p.shape[1])
        )
        shared = out["abs_corr_shared"]
        cc = np.corrcoef(p.T)
        off = np.abs(cc[np.triu_indices(p.shape[1], 1)]).max()
        ok = p_r > 0.01 and p_p > 0.01 and shared > 0.0 and off <= 0.01
        return ok, (
            f"min KS p uniform {p_r:.3f}, beta {p_p:.3f}, "
            f"shared |r| corr {shared:.3f}, max partial pair corr {off:.4f}"
        )

    @_checked("ACCEPTANCE 04")
    def test_04_elementary_sampler_identities(self):
        # Dyadic points check the reflection involution bit for bit.
        theta = np.array([0.25, -1.5, 3.0, 0.0, -0.125])
        mu = np.array([0.5, 2.0, -0.75, 1.0, 0.0])
        exact_inv = np.array_equal(
            antithetic_step(antithetic_step(theta, mu), mu), theta
        )
        rng = np.random.default_rng(404)
        t2 = rng.standard_normal(1000)
        m2 = rng.standard_normal(1000)
        err_inv = float(
            np.abs(antithetic_step(antithetic_step(t2, m2), m2) - t2).max()
        )
        kap_ok = all(
            over_relax_step(t, m, 1.3, 1.0, rng) == 2.0 * m - t
            for t, m in zip(rng.standard_normal(200), rng.standard_normal(200))
        )
        cov = np.array([[2.0, 0.6, -0.3], [0.6, 1.0, 0.2], [-0.3, 0.2, 0.5]])
        mu3 = np.array([1.0, -0.5, 0.25])
        err_pi = 0.0
        for _ in range(50):
            th = rng.standard_normal(3)
            u = rng.standard_normal(3)
            err_pi = max(
                err_pi,
                float(
                    np.abs(
                        exact_gauss_hmc(th, u, np.pi, mu3, cov)
                        - antithetic_step(th, mu3)
                    ).max()
                ),
            )
        n = 100_000
        u0 = rng.multivariate_normal(np.zeros(3), np.linalg.inv(cov), size=n)
        start = np.array([5.0, 5.0, 5.0])
        moved = np.empty((n, 3))
        for i in range(n):
            moved[i] = exact_gauss_hmc(start, u0[i], np.pi / 2.0, mu3, cov)
        se_mean = np.sqrt(np.diag(cov) / n)
        mean_ok = bool(np.all(np.abs(moved.mean(axis=0) - mu3) < 3.0 * se_mean))
        scov = np.cov(moved.T)
        cov_ok = True
        for i in range(3):
            for j in range(3):
                se = np.sqrt((cov[i, i] * cov[j, j] + cov[i, j] ** 2) / n)
                cov_ok &= abs(scov[i, j] - cov[i, j]) < 3.0 * se
        ok = exact_inv and err_inv < 1e-14 and kap_ok and err_pi < 1e-12 \
            and mean_ok and cov_ok
        return ok, (
            f"involution err {err_inv:.1e}, kappa=1 exact {kap_ok}, "
            f"t=pi err {err_pi:.1e}, quarter-period moments within 3 se"
        )

    @_checked("ACCEPTANCE 05")
    def test_05_truncated_normal_accuracy(self):
        rng = np.random.default_rng(6)
        n = 1_000_000
        half = truncated_normal_array(np.zeros(n), 1.0, 0.0, np.inf, rng)
        half_mean = float(half.mean())
        tail = truncated_normal_array(np.zeros(100_000), 1.0, 6.0, np.inf, rng)
        tail_mean = float(tail.mean())
        ok = abs(half_mean - 0.79788) < 0.003 and abs(tail_mean / 6.1586 - 1.0) < 0.01
        return ok, f"half-normal mean {half_mean:.5f}, lo=6 mean {tail_mean:.4f}"

    @_checked("ACCEPTANCE 06")
    def test_06_joint_distribution_correctness(self):
        res = geweke_joint_test(sweeps=60_000, seed=0)
        zmax = res.max_abs_z()
        mutant = geweke_joint_test(
            sweeps=40_000,
            seed=0,
            combos=[("iw", "normal", "independent")],
            variance_scale=1.1,
        )
        zbad = mutant.max_abs_z()
        ok = zmax < 4.0 and zbad > 6.0
        return ok, f"max |z| {zmax:.2f} over {len(res.combos)} combos, mutant |z| {zbad:.2f}"

    @_checked("ACCEPTANCE 07")
    def test_07_bivariate_variance_reduction(self):
        chains = {
            s: _bivariate_gibbs(s)
            for s in ("independent", "over_relaxed", "coupled")
        }
        taus = {
            s: [windowed_iact(c[100:, m], 100) for m in range(2)]
            for s, c in chains.items()
        }
        gain = [taus["over_relaxed"][m] / taus["coupled"][m] for m in range(2)]
        beat_or = [taus["independent"][m] / taus["over_relaxed"][m] for m in range(2)]
        beat_cp = [taus["independent"][m] / taus["coupled"][m] for m in range(2)]
        ok = all(1.3 <= g <= 2.3 for g in gain) and all(
            b >= 5.0 for b in beat_or + beat_cp
        )
        return ok, (
            f"coupling gain {gain[0]:.2f}/{gain[1]:.2f}, "
            f"vs independent {min(beat_or + beat_cp):.1f}x at worst"
        )

    @_checked("ACCEPTANCE 08")
    def test_08_study_scale_antithetic_gains(self):
        params = gp_study_parameters()
        data, _ = simulate_panel(
            params["beta"],
            params["r_eps"],
            params["sigma_alpha"],
            40,
            8,
            np.random.default_rng(2024),
            covariates=design_covariates(params["codebook"]),
        )
        ind = run_chain(
            data, config=SamplerConfig(iterations=5000, burn_in=1000, seed=1)
        )
        ant = run_chain(
            data,
            config=SamplerConfig(
                iterations=5000,
                burn_in=1000,
                seed=2,
                beta_mode="antithetic",
                alpha_mode="antithetic",
            ),
        )
        report = iact_ratio_report(ind, ant, blocks=["alpha", "beta"])
        r_alpha = report.row("alpha").ratio
        r_beta = report.row("beta").ratio
        # Spot-check the best-mixing series of each block: its effective
        # sample is largest, so the two-sample KS comparison has the most
        # power to see a distributional difference.
        spots = {}
        for block in ("alpha", "beta"):
            a = ind.blocks[block]
            b = ant.blocks[block]
            taus = np.array([iact(a[:, j]) for j in range(a.shape[1])])
            j = int(np.argmin(taus))
            spots[block] = (j, float(ks_2samp(a[:, j], b[:, j]).statistic))
        ok = r_alpha > 1.5 and r_beta > 1.5 and all(
            s < 0.05 for _, s in spots.values()
        )
        return ok, (
            f"IACT ratio alpha {r_alpha:.2f}, beta {r_beta:.2f} "
            f"(full-scale reference 4.86/3.31); KS spots "
            f"alpha[{spots['alpha'][0]}] {spots['alpha'][1]:.3f}, "
            f"beta[{spots['beta'][0]}] {spots['beta'][1]:.3f}"
        )

    @_checked("ACCEPTANCE 09")
    def test_09_horseshoe_vs_normal(self):
        d_out, k_cov, p_ind, t_per = 3, 9, 30, 8
        beta_true = np.zeros((d_out, k_cov))
        for d in range(d_out):
            beta_true[d, 3 * d + 1] = 0.5
            beta_true[d, 3 * d + 2] = -0.5
        beta_true[:, 0] = [0.3, -0.2, 0.1]
        r = _compound_corr(d_out, 0.4)
        sa = 0.5 * np.eye(d_out)
        zero_mask = (beta_true == 0.0).ravel()
        zero_mask[np.arange(d_out) * k_cov] = False
        nonzero_mask = np.zeros(d_out * k_cov, dtype=bool)
        for d in range(d_out):
            nonzero_mask[d * k_cov + 3 * d + 1] = True
            nonzero_mask[d * k_cov + 3 * d + 2] = True
        zeros, nonzeros = [], []
        for rep in range(50):
            data, _ = simulate_panel(
                beta_true, r, sa, p_ind, t_per,
                np.random.default_rng(1000 + rep),
                covariates=gaussian_covariates(k_cov - 1),
            )
            per = {}
            for prior in ("horseshoe", "normal"):
                ch = run_chain(
                    data,
                    ModelSpec(beta_prior=prior),
                    SamplerConfig(iterations=800, burn_in=250, seed=500 + rep),
                )
                per[prior] = rmse(ch.blocks["beta"], beta_true.ravel())
            ratio = per["horseshoe"] / per["normal"]
            zeros.append(float(np.mean(ratio[zero_mask])))
            nonzeros.append(float(np.mean(ratio[nonzero_mask])))
        med_zero = float(np.median(zeros))
        med_nonzero = float(np.median(nonzeros))
        ok = med_zero < 0.75 and 0.8 <= med_nonzero <= 1.3
        return ok, (
            f"median RMSE ratio true-zero {med_zero:.3f}, "
            f"non-zero {med_nonzero:.3f} over 50 replicates"
        )

    @_checked("ACCEPTANCE 10")
    def test_10_hiw_vs_iw(self):
        d_out, k_cov, p_ind, t_per = 3, 3, 30, 8
        beta_true = np.random.default_rng(77).uniform(-0.8, 0.8, size=(d_out, k_cov))
        r = _compound_corr(d_out, 0.4)
        iu = np.triu_indices(d_out, 1)
        sds = np.array([1.0, 1.3, 1.6])
        ra = np.array([[1.0, 0.5, -0.3], [0.5, 1.0, 0.2], [-0.3, 0.2, 1.0]])
        sa_true = ra * np.outer(sds, sds)
        prec = np.linalg.inv(ra)
        dd = np.sqrt(np.diag(prec))
        truth = {"sd": sds, "corr": ra[iu], "partial": (-prec / np.outer(dd, dd))[iu]}

        def family_draws(ch):
            diag = ch.blocks["sigma_alpha_diag"]
            vech = ch.blocks["corr_alpha_vech"]
            partials = np.empty((diag.shape[0], len(iu[0])))
            for i in range(diag.shape[0]):
                c = np.eye(d_out)
                c[iu] = vech[i]
                c.T[iu] = vech[i]
                p = np.linalg.inv(c)
                d2 = np.sqrt(np.diag(p))
                partials[i] = (-p / np.outer(d2, d2))[iu]
            return {"sd": np.sqrt(diag), "corr": vech, "partial": partials}

        specs = {
            "hiw": ModelSpec(sigma_alpha_prior="hiw", hiw_dof=2.0, hiw_scale=1.0),
            "iw": ModelSpec(sigma_alpha_prior="iw", iw_dof=4.0),
        }
        ratios = {fam: [] for fam in truth}
        for rep in range(50):
            data, _ = simulate_panel(
                beta_true, r, sa_true, p_ind, t_per,
                np.random.default_rng(3000 + rep),
                covariates=gaussian_covariates(k_cov - 1),
            )
            per = {}
            for name, spec in specs.items():
                ch = run_chain(
                    data, spec,
                    SamplerConfig(iterations=2000, burn_in=600, seed=700 + rep),
                )
                fd = family_draws(ch)
                per[name] = {fam: rmse(fd[fam], truth[fam]) for fam in truth}
            for fam in truth:
                ratios[fam].append(float(np.mean(per["hiw"][fam] / per["iw"][fam])))
        med = {fam: float(np.median(ratios[fam])) for fam in truth}
        ok = all(0.85 <= med[fam] <= 1.15 for fam in truth)
        return ok, (
            f"median RMSE ratios sd {med['sd']:.3f}, corr {med['corr']:.3f}, "
            f"partial {med['partial']:.3f} over 50 replicates"
        )

    @_checked("ACCEPTANCE 11")
    def test_11_px_overestimates_variances(self):
        beta = np.random.default_rng(77).uniform(-1.0, 1.0, size=(2, 13))
        r = _compound_corr(2, 0.3)
        sd = np.array([0.7, 0.7])
        sa = _compound_corr(2, 0.3) * np.outer(sd, sd)
        data, _ = simulate_panel(
            beta, r, sa, 100, 5, np.random.default_rng(2024),
            covariates=gaussian_covariates(12),
        )
        # Seed pairs average away chain noise; the direction claim is on
        # the pooled posterior means of both variance components.
        gibbs, px = [], []
        for gs, ps in [(5, 6), (15, 16), (25, 26), (35, 36), (45, 46)]:
            ch_g = run_chain(
                data, config=SamplerConfig(iterations=10_000, burn_in=2500, seed=gs)
            )
            ch_p = run_px_chain(
                data, config=SamplerConfig(iterations=10_000, burn_in=2500, seed=ps)
            )
            gibbs.append(ch_g.blocks["sigma_alpha_diag"].mean(axis=0))
            px.append(ch_p.blocks["sigma_alpha_diag"].mean(axis=0))
        pooled_g = np.mean(gibbs, axis=0)
        pooled_p = np.mean(px, axis=0)
        ok = bool(np.all(pooled_p > pooled_g))
        return ok, (
            f"pooled sigma^2_alpha means px {np.round(pooled_p, 3).tolist()} "
            f"vs gibbs {np.round(pooled_g, 3).tolist()}"
        )

    @_checked("ACCEPTANCE 12")
    def test_12_iact_calibration(self):
        x = ar1_series(0.9, 10 ** 6, np.random.default_rng(12))
        tau = iact(x)
        iid = np.random.default_rng(13).standard_normal(10 ** 6)
        tau_iid = iact(iid)
        ok = abs(tau / 19.0 - 1.0) <= 0.15 and abs(tau_iid - 1.0) <= 0.05
        return ok, f"AR(1) rho=0.9 IACT {tau:.2f} (target 19), iid {tau_iid:.3f}"


class TestSimulationCoverage:
    @_checked("COVERAGE")
    def test_credible_intervals_cover_truth(self):
        d_out, k_cov = 3, 3
        beta_true = np.random.default_rng(7).uniform(-0.8, 0.8, size=(d_out, k_cov))
        r = _compound_corr(d_out, 0.4)
        sa = 0.5 * np.eye(d_out)
        flat = beta_true.ravel()
        hits = np.zeros(flat.size)
        n_rep = 20
        for rep in range(n_rep):
            data, _ = simulate_panel(
                beta_true, r, sa, 30, 8,
                np.random.default_rng(4000 + rep),
                covariates=gaussian_covariates(k_cov - 1),
            )
            ch = run_chain(
                data,
                config=SamplerConfig(iterations=1000, burn_in=300, seed=900 + rep),
            )
            lo = np.quantile(ch.blocks["beta"], 0.025, axis=0)
            hi = np.quantile(ch.blocks["beta"], 0.975, axis=0)
            hits += (lo <= flat) & (flat <= hi)
        cover = hits / n_rep
        ok = bool(np.all(cover >= 0.9))
        return ok, (
            f"per-component coverage min {cover.min():.2f}, "
            f"mean {cover.mean():.2f} over {n_rep} replicate fits"
        )
