"""Unconstrained parameterisation of correlation matrices.

A correlation matrix R (unit diagonal, positive definite) is parameterised
by the strict lower triangle of a unit-diagonal lower-triangular matrix L:

    Sigma = L L'          (positive definite, |Sigma| = 1)
    Lam   = diag(Sigma)   (Lam_kk = ||l_k||^2, the squared row norms of L)
    R     = Lam^{-1/2} Sigma Lam^{-1/2}

The strict lower triangle of L is free in R^{D(D-1)/2}, so gradient-based
samplers can move in an unconstrained space while every image is a valid
correlation matrix.  Entrywise,

    r_ij = (l_i . l_j) / (||l_i|| ||l_j||),

the cosine of the angle between rows i and j of L.

The volume change of the map vechL(L) -> vechL(R) has the closed form

    log |J| = -(D + 1) * sum_{k=2}^{D} log ||l_k||,

equivalently |J| = |R|^{(D+1)/2} since |R| = prod_k ||l_k||^{-2}.

vechL vectors list the strict lower triangle row by row: (2,1), (3,1),
(3,2), (4,1), ...
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

__all__ = [
    "UnitCholesky",
    "CorrelationMatrix",
    "CovarianceMatrix",
    "vech_indices",
    "vech_to_matrix",
    "matrix_to_vech",
    "cholesky_to_corr",
    "corr_to_cholesky",
    "log_prior_corr",
    "log_jacobian",
    "log_target_cholesky",
    "grad_log_target_cholesky",
    "corr_to_partial",
]

LOG_2PI = float(np.log(2.0 * np.pi))


def vech_dim(n_entries: int) -> int:
    """Matrix dimension D such that D(D-1)/2 == n_entries."""
    d = int(round((1.0 + np.sqrt(1.0 + 8.0 * n_entries)) / 2.0))
    if d * (d - 1) // 2 != n_entries:
        raise ValueError(f"{n_entries} is not a strict-lower-triangle length")
    return d


def vech_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the strict lower triangle, row-major."""
    return np.tril_indices(dim, k=-1)


def vech_to_matrix(vech: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Unit-diagonal lower-triangular matrix from its row-major strict lower triangle."""
    vech = np.asarray(vech, dtype=float).ravel()
    if dim is None:
        dim = vech_dim(vech.size)
    mat = np.eye(dim)
    mat[vech_indices(dim)] = vech
    return mat


def matrix_to_vech(mat: np.ndarray) -> np.ndarray:
    """Row-major strict lower triangle of a square matrix."""
    mat = np.asarray(mat, dtype=float)
    return mat[vech_indices(mat.shape[0])].copy()


@dataclass(frozen=True)
class UnitCholesky:
    """Unit-diagonal lower-triangular factor, stored as its strict lower triangle.

    Attributes:
        dim: matrix dimension D >= 1.
        vech: row-major strict lower triangle, length D(D-1)/2, all finite.
    """

    dim: int
    vech: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vech = np.asarray(self.vech, dtype=float).ravel()
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if vech.size != self.dim * (self.dim - 1) // 2:
            raise ValueError(
                f"vech length {vech.size} does not match dim {self.dim}"
            )
        if not np.all(np.isfinite(vech)):
            raise ValueError("vech entries must be finite")
        object.__setattr__(self, "vech", vech)

    @classmethod
    def identity(cls, dim: int) -> "UnitCholesky":
        return cls(dim, np.zeros(dim * (dim - 1) // 2))

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "UnitCholesky":
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("expected a square matrix")
        if not np.allclose(np.diag(mat), 1.0, atol=1e-12):
            raise ValueError("diagonal must be exactly one")
        if np.any(np.triu(mat, k=1) != 0.0):
            raise ValueError("matrix must be lower triangular")
        return cls(mat.shape[0], matrix_to_vech(mat))

    @property
    def matrix(self) -> np.ndarray:
        return vech_to_matrix(self.vech, self.dim)

    @property
    def row_norms(self) -> np.ndarray:
        """||l_k|| for k = 1..D; the first entry is always 1."""
        return _row_norms(self.matrix)


def _row_norms(lmat: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(lmat * lmat, axis=1))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric positive-definite matrix with unit diagonal."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        _check_correlation(vals)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def vech(self) -> np.ndarray:
        return matrix_to_vech(self.values)


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric positive-definite matrix with strictly positive diagonal."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError("covariance matrix must be square")
        if not np.all(np.isfinite(vals)):
            raise ValueError("covariance entries must be finite")
        if not np.allclose(vals, vals.T, atol=1e-8 * max(1.0, np.abs(vals).max())):
            raise ValueError("covariance matrix must be symmetric")
        if np.any(np.diag(vals) <= 0.0):
            raise ValueError("covariance diagonal must be positive")
        try:
            np.linalg.cholesky((vals + vals.T) / 2.0)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance matrix must be positive definite") from exc
        object.__setattr__(self, "values", (vals + vals.T) / 2.0)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def to_correlation(self) -> "CorrelationMatrix":
        sd = np.sqrt(np.diag(self.values))
        corr = self.values / np.outer(sd, sd)
        np.fill_diagonal(corr, 1.0)
        return CorrelationMatrix(corr)


def _check_correlation(vals: np.ndarray) -> None:
    if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.all(np.isfinite(vals)):
        raise ValueError("correlation entries must be finite")
    if not np.allclose(np.diag(vals), 1.0, atol=1e-12):
        raise ValueError("correlation diagonal must equal one within 1e-12")
    if not np.allclose(vals, vals.T, atol=1e-10):
        raise ValueError("correlation matrix must be symmetric")
    if vals.shape[0] > 1 and np.any(np.abs(vals[np.triu_indices_from(vals, k=1)]) >= 1.0):
        raise ValueError("off-diagonal correlations must lie in (-1, 1)")
    try:
        np.linalg.cholesky((vals + vals.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise ValueError("correlation matrix must be positive definite") from exc


def _as_corr_values(r) -> np.ndarray:
    if isinstance(r, CorrelationMatrix):
        return r.values
    vals = np.asarray(r, dtype=float)
    _check_correlation(vals)
    return vals


def _as_lower_matrix(l) -> np.ndarray:
    """Coerce a UnitCholesky, vech vector, or unit-lower matrix to matrix form."""
    if isinstance(l, UnitCholesky):
        return l.matrix
    arr = np.asarray(l, dtype=float)
    if arr.ndim == 1:
        return vech_to_matrix(arr)
    return UnitCholesky.from_matrix(arr).matrix


def cholesky_to_corr(l) -> CorrelationMatrix:
    """Correlation matrix reached by the unit-diagonal factor ``l``.

    Accepts a UnitCholesky, a row-major vech vector, or a unit-diagonal
    lower-triangular matrix.
    """
    lmat = _as_lower_matrix(l)
    corr, _ = _corr_from_lmat(lmat)
    return CorrelationMatrix(corr)


def _corr_from_lmat(lmat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = _row_norms(lmat)
    scaled = lmat / norms[:, None]
    corr = scaled @ scaled.T
    np.fill_diagonal(corr, 1.0)
    return corr, norms


def corr_to_cholesky(r) -> UnitCholesky:
    """Inverse of :func:`cholesky_to_corr`.

    Rescales the rows of the ordinary Cholesky factor of R to unit diagonal;
    the row scaling cancels when the image is re-normalised, so the round
    trip reproduces R exactly up to floating point.
    """
    vals = _as_corr_values(r)
    chol = np.linalg.cholesky(vals)
    lmat = chol / np.diag(chol)[:, None]
    return UnitCholesky(vals.shape[0], matrix_to_vech(lmat))


def corr_to_partial(r) -> np.ndarray:
    """Matrix of pairwise partial correlations given all remaining coordinates.

    Entry (i, j) is -P_ij / sqrt(P_ii P_jj) for P = R^{-1}; the diagonal is 1.
    """
    vals = _as_corr_values(r)
    prec = cho_solve(cho_factor(vals, lower=True), np.eye(vals.shape[0]))
    scale = np.sqrt(np.diag(prec))
    partial = -prec / np.outer(scale, scale)
    np.fill_diagonal(partial, 1.0)
    return partial


def log_jacobian(l) -> float:
    """Log volume change of vechL(L) -> vechL(R): -(D+1) sum_{k>=2} log ||l_k||."""
    lmat = _as_lower_matrix(l)
    dim = lmat.shape[0]
    if dim == 1:
        return 0.0
    norms = _row_norms(lmat)
    return float(-(dim + 1) * np.sum(np.log(norms[1:])))


def log_prior_corr(r, nu: float) -> float:
    """Unnormalised log density of the marginally uniform correlation prior.

    log p(R) = ((nu-1)(D-1)/2 - 1) log|R| - (nu/2) sum_k log|R(-k,-k)|

    where R(-k,-k) drops row and column k.  At nu = D+1 every off-diagonal
    entry of R is marginally Uniform(-1, 1).  Raises ValueError when R is
    not a valid correlation matrix.
    """
    vals = _as_corr_values(r)
    if nu <= 0:
        raise ValueError("nu must be positive")
    dim = vals.shape[0]
    if dim == 1:
        return 0.0
    logdet, logdet_sub = _logdets(vals)
    shape = (nu - 1.0) * (dim - 1.0) / 2.0 - 1.0
    return float(shape * logdet - 0.5 * nu * np.sum(logdet_sub))


def _logdets(vals: np.ndarray) -> tuple[float, np.ndarray]:
    """log|R| and all log|R(-k,-k)| from one Cholesky factorisation.

    Uses |R(-k,-k)| = |R| * P_kk for P = R^{-1}, the determinant identity of
    the partitioned inverse.
    """
    factor = cho_factor(vals, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    prec = cho_solve(factor, np.eye(vals.shape[0]))
    logdet_sub = logdet + np.log(np.diag(prec))
    return logdet, logdet_sub


def _scatter(residuals: np.ndarray, dim: int) -> tuple[np.ndarray, int]:
    res = np.asarray(residuals, dtype=float)
    if res.ndim == 1:
        res = res[None, :]
    if res.ndim != 2 or res.shape[1] != dim:
        raise ValueError(f"residuals must be (n, {dim})")
    return res.T @ res, res.shape[0]


def log_target_cholesky(l, residuals: np.ndarray, nu: float) -> float:
    """Log conditional density of the factor given Gaussian residuals.

    Sum of the N(0, R(L)) log likelihood of the residual rows, the
    marginally uniform prior evaluated at R(L), and the reparameterisation
    log Jacobian.
    """
    lmat = _as_lower_matrix(l)
    scatter, n_obs = _scatter(residuals, lmat.shape[0])
    return _log_target_from_scatter(lmat, scatter, n_obs, nu)


def log_target_scatter(l, scatter: np.ndarray, n_obs: int, nu: float) -> float:
    """Same density as :func:`log_target_cholesky`, from a precomputed
    residual scatter sum_i e_i e_i'.  Cost is independent of n_obs."""
    lmat = _as_lower_matrix(l)
    return _log_target_from_scatter(lmat, np.asarray(scatter, float), n_obs, nu)


def grad_log_target_scatter(l, scatter: np.ndarray, n_obs: int, nu: float) -> np.ndarray:
    """Gradient of :func:`log_target_scatter` with respect to vechL(L)."""
    lmat = _as_lower_matrix(l)
    return _grad_from_scatter(lmat, np.asarray(scatter, float), n_obs, nu)


def _log_target_from_scatter(
    lmat: np.ndarray, scatter: np.ndarray, n_obs: int, nu: float
) -> float:
    dim = lmat.shape[0]
    corr, norms = _corr_from_lmat(lmat)
    factor = cho_factor(corr, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    prec = cho_solve(factor, np.eye(dim))
    quad = float(np.sum(prec * scatter))
    loglik = -0.5 * n_obs * (dim * LOG_2PI + logdet) - 0.5 * quad
    if dim == 1:
        return loglik
    shape = (nu - 1.0) * (dim - 1.0) / 2.0 - 1.0
    logdet_sub = logdet + np.log(np.diag(prec))
    log_prior = shape * logdet - 0.5 * nu * float(np.sum(logdet_sub))
    log_jac = -(dim + 1.0) * float(np.sum(np.log(norms[1:])))
    return loglik + log_prior + log_jac


def grad_log_target_cholesky(l, residuals: np.ndarray, nu: float) -> np.ndarray:
    """Gradient of :func:`log_target_cholesky` with respect to vechL(L).

    Closed form.  The three log-determinant groups (likelihood, prior,
    Jacobian) collapse onto d log|R| = -2 L_ij / ||l_i||^2; the remaining
    trace terms contract a single symmetric weight matrix against dR/dL.
    """
    lmat = _as_lower_matrix(l)
    scatter, n_obs = _scatter(residuals, lmat.shape[0])
    return _grad_from_scatter(lmat, scatter, n_obs, nu)


def _grad_from_scatter(
    lmat: np.ndarray, scatter: np.ndarray, n_obs: int, nu: float
) -> np.ndarray:
    dim = lmat.shape[0]
    if dim == 1:
        return np.zeros(0)
    rows, cols = vech_indices(dim)

    norms = _row_norms(lmat)
    scaled = lmat / norms[:, None]
    corr = scaled @ scaled.T
    np.fill_diagonal(corr, 1.0)
    factor = cho_factor(corr, lower=True)
    prec = cho_solve(factor, np.eye(dim))

    # Coefficient of log|R|: -n/2 from the likelihood, the prior shape, and
    # (D+1)/2 because log|J| = (D+1)/2 log|R|.
    shape = (nu - 1.0) * (dim - 1.0) / 2.0 - 1.0
    coef_logdet = -0.5 * n_obs + shape + 0.5 * (dim + 1.0)

    # Sum over k of the submatrix inverses, embedded with row/col k zeroed.
    # inv(R(-k,-k)) = (P - p_k p_k' / P_kk)(-k,-k) by the partitioned inverse.
    prec_tilde = prec - np.diag(np.diag(prec))
    sub_sum = (dim - 2.0) * prec + np.diag(np.diag(prec))
    sub_sum = sub_sum - (prec_tilde / np.diag(prec)[None, :]) @ prec_tilde.T

    weight = 0.5 * (prec @ scatter @ prec) - 0.5 * nu * sub_sum

    # tr(W dR/dL_ij) via the product rule on R = Lam^{-1/2} Sigma Lam^{-1/2}.
    inv_norm = 1.0 / norms
    v_mat = weight * np.outer(inv_norm, inv_norm)
    sigma = lmat @ lmat.T
    t_diag = np.einsum("ik,k,ki->i", sigma, inv_norm, weight)

    grad_mat = (
        -2.0 * coef_logdet * lmat / (norms**2)[:, None]
        - 2.0 * lmat * (t_diag / norms**3)[:, None]
        + 2.0 * (v_mat @ lmat)
    )
    return grad_mat[rows, cols]
