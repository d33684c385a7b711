"""Bayesian inference for multivariate probit panel models.

Binary outcome vectors are modelled through correlated Gaussian latent
utilities with individual random effects.  A blocked Gibbs sampler
augments the latent utilities, draws coefficients and random effects from
their Gaussian conditionals (optionally by deterministic antithetic
reflection), and moves the error correlation matrix by No-U-Turn sampling
in an unconstrained unit-diagonal Cholesky parameterisation.
"""

from .builtin_params import GP_STUDY_CODEBOOK, gp_study_parameters
from .chains import ChainDraws
from .corr import (
    CorrelationMatrix,
    CovarianceMatrix,
    UnitCholesky,
    cholesky_to_corr,
    corr_to_cholesky,
    corr_to_partial,
    grad_log_target_cholesky,
    grad_log_target_scatter,
    log_jacobian,
    log_prior_corr,
    log_target_cholesky,
    log_target_scatter,
)
from .data import (
    CodebookSpec,
    PanelData,
    design_covariates,
    encode_categoricals,
    gaussian_covariates,
    read_panel_csv,
    simulate_panel,
    write_panel_csv,
)
from .diagnostics import (
    GewekeResult,
    IactRatioReport,
    RmseReport,
    SeriesSummary,
    ess,
    geweke_joint_test,
    iact,
    iact_ratio_report,
    rmse,
    summarize,
    summary_table,
)
from .gibbs import (
    ModelSpec,
    SamplerConfig,
    run_chain,
    run_px_chain,
)
from .predict import (
    GraphEdges,
    PredictiveSummary,
    extract_graph,
    posterior_predictive,
)
from .priors import (
    HiwPrior,
    HorseshoeState,
    NormalPrior,
    hiw_update_sigma_alpha,
    horseshoe_update,
    iw_update_sigma_alpha,
    prior_study,
    sample_corr_marg_uniform,
    sample_inverse_wishart,
)
from .samplers import (
    HmcConfig,
    antithetic_step,
    conditional_normal_params,
    exact_gauss_hmc,
    find_reasonable_step_size,
    leapfrog,
    nuts_sample,
    over_relax_step,
    sample_truncated_normal,
    truncated_normal_array,
)

__version__ = "0.1.0"
