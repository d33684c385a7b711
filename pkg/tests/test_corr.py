"""Tests for the unit-diagonal Cholesky parameterisation of correlations."""

import numpy as np
import pytest

from mvprobit.corr import (
    CorrelationMatrix,
    UnitCholesky,
    cholesky_to_corr,
    corr_to_cholesky,
    corr_to_partial,
    grad_log_target_cholesky,
    log_jacobian,
    log_prior_corr,
    log_target_cholesky,
    matrix_to_vech,
    vech_to_matrix,
)

from oracles import (
    fd_gradient,
    fd_log_jacobian,
    naive_log_prior_corr,
    naive_log_target,
    brute_partial_corr,
)


class TestVechLayout:
    def test_row_major_order(self):
        mat = vech_to_matrix(np.array([21.0, 31.0, 32.0]))
        assert mat[1, 0] == 21.0
        assert mat[2, 0] == 31.0
        assert mat[2, 1] == 32.0
        assert np.all(np.diag(mat) == 1.0)

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(0)
        for dim in range(1, 7):
            vech = rng.standard_normal(dim * (dim - 1) // 2)
            assert np.array_equal(matrix_to_vech(vech_to_matrix(vech, dim)), vech)

    def test_bad_lengths_rejected(self):
        with pytest.raises(ValueError):
            vech_to_matrix(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            UnitCholesky(3, np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            UnitCholesky(2, np.array([np.nan]))


class TestCholeskyToCorr:
    def test_two_dim_unit_entry(self):
        # l_2 = (1, 1) makes the angle cosine 1/sqrt(2).
        corr = cholesky_to_corr(np.array([1.0])).values
        assert corr[1, 0] == pytest.approx(0.7071067811865475, abs=1e-15)

    def test_three_dim_known_entries(self):
        corr = cholesky_to_corr(np.array([1.0, 0.0, 1.0])).values
        assert corr[1, 0] == pytest.approx(0.7071067811865475, abs=1e-15)
        assert corr[2, 0] == pytest.approx(0.0, abs=1e-15)
        assert corr[2, 1] == pytest.approx(0.5, abs=1e-15)

    def test_identity_maps_to_identity(self):
        corr = cholesky_to_corr(UnitCholesky.identity(4)).values
        np.testing.assert_allclose(corr, np.eye(4), atol=0)

    def test_image_is_valid_correlation(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            dim = int(rng.integers(2, 7))
            vech = 2.0 * rng.standard_normal(dim * (dim - 1) // 2)
            corr = cholesky_to_corr(vech).values
            np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-14)
            assert np.all(np.linalg.eigvalsh(corr) > 0.0)

    def test_determinant_identity(self):
        # |R| = prod_k ||l_k||^{-2}
        rng = np.random.default_rng(2)
        for _ in range(20):
            dim = int(rng.integers(2, 7))
            lfac = UnitCholesky(dim, rng.standard_normal(dim * (dim - 1) // 2))
            corr = cholesky_to_corr(lfac).values
            det = np.linalg.det(corr)
            assert det == pytest.approx(float(np.prod(lfac.row_norms ** -2.0)), rel=1e-10)


class TestRoundTrip:
    def test_vech_round_trip_tight(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            dim = int(rng.integers(2, 7))
            vech = 1.5 * rng.standard_normal(dim * (dim - 1) // 2)
            back = corr_to_cholesky(cholesky_to_corr(vech)).vech
            np.testing.assert_allclose(back, vech, atol=1e-10, rtol=1e-10)

    def test_corr_round_trip_tight(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            dim = int(rng.integers(2, 6))
            raw = rng.standard_normal((dim + 3, dim))
            cov = raw.T @ raw
            sd = np.sqrt(np.diag(cov))
            corr = cov / np.outer(sd, sd)
            np.fill_diagonal(corr, 1.0)
            back = cholesky_to_corr(corr_to_cholesky(corr)).values
            np.testing.assert_allclose(back, corr, atol=1e-10)

    def test_non_positive_definite_rejected(self):
        bad = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
        with pytest.raises(ValueError):
            corr_to_cholesky(bad)
        with pytest.raises(ValueError):
            CorrelationMatrix(bad)


class TestLogJacobian:
    def test_frozen_two_dim_value(self):
        # -(D+1) log ||l_2|| = -3 log sqrt(2)
        assert log_jacobian(np.array([1.0])) == pytest.approx(
            -1.0397207708399179, abs=1e-13
        )

    def test_frozen_three_dim_value(self):
        assert log_jacobian(np.array([1.0, 0.0, 1.0])) == pytest.approx(
            -2.772588722239781, abs=1e-13
        )

    def test_identity_is_zero(self):
        assert log_jacobian(UnitCholesky.identity(5)) == 0.0

    def test_matches_numerical_jacobian(self):
        rng = np.random.default_rng(5)
        count = 0
        while count < 100:
            dim = 2 + count % 5
            vech = rng.standard_normal(dim * (dim - 1) // 2)
            expected = fd_log_jacobian(vech)
            got = log_jacobian(vech)
            assert got == pytest.approx(expected, rel=1e-6, abs=1e-8)
            count += 1


class TestLogPriorCorr:
    def test_two_dim_nu3_constant(self):
        for r in (-0.9, -0.3, 0.0, 0.5, 0.95):
            corr = np.array([[1.0, r], [r, 1.0]])
            assert log_prior_corr(corr, 3.0) == pytest.approx(0.0, abs=1e-12)

    def test_identity_is_zero(self):
        assert log_prior_corr(np.eye(3), 4.0) == pytest.approx(0.0, abs=1e-14)

    def test_matches_submatrix_determinants(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            dim = int(rng.integers(2, 7))
            vech = rng.standard_normal(dim * (dim - 1) // 2)
            corr = cholesky_to_corr(vech).values
            nu = float(rng.uniform(dim, dim + 4))
            assert log_prior_corr(corr, nu) == pytest.approx(
                naive_log_prior_corr(corr, nu), rel=1e-10, abs=1e-10
            )

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError):
            log_prior_corr(np.array([[1.0, 1.5], [1.5, 1.0]]), 3.0)
        with pytest.raises(ValueError):
            log_prior_corr(np.eye(2), -1.0)


class TestLogTarget:
    def test_zero_residuals_identity_factor(self):
        for dim, n in ((2, 1), (3, 4), (5, 2)):
            res = np.zeros((n, dim))
            value = log_target_cholesky(UnitCholesky.identity(dim), res, dim + 1.0)
            assert value == pytest.approx(-0.5 * n * dim * np.log(2.0 * np.pi), rel=1e-14)

    def test_matches_reference_assembly(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            dim = int(rng.integers(2, 6))
            n = int(rng.integers(1, 12))
            vech = rng.standard_normal(dim * (dim - 1) // 2)
            res = rng.standard_normal((n, dim))
            nu = float(rng.uniform(dim, dim + 3))
            assert log_target_cholesky(vech, res, nu) == pytest.approx(
                naive_log_target(vech, res, nu), rel=1e-10, abs=1e-9
            )


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(8)
        for case in range(50):
            dim = 2 + case % 4
            n = int(rng.integers(1, 20))
            vech = rng.standard_normal(dim * (dim - 1) // 2)
            res = rng.standard_normal((n, dim))
            nu = dim + 1.0
            grad = grad_log_target_cholesky(vech, res, nu)
            fd = fd_gradient(lambda v: log_target_cholesky(v, res, nu), vech, h=1e-5)
            np.testing.assert_allclose(
                grad, fd, rtol=1e-5, atol=1e-6 * max(1.0, np.abs(fd).max())
            )

    def test_one_dim_gradient_empty(self):
        grad = grad_log_target_cholesky(np.zeros(0), np.zeros((3, 1)), 2.0)
        assert grad.shape == (0,)


class TestPartialCorrelations:
    def test_exchangeable_three_dim(self):
        corr = np.full((3, 3), 0.5)
        np.fill_diagonal(corr, 1.0)
        partial = corr_to_partial(corr)
        for i in range(3):
            for j in range(i):
                assert partial[i, j] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_matches_schur_complement(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            dim = int(rng.integers(2, 7))
            corr = cholesky_to_corr(rng.standard_normal(dim * (dim - 1) // 2)).values
            partial = corr_to_partial(corr)
            i, j = sorted(rng.choice(dim, size=2, replace=False))
            assert partial[j, i] == pytest.approx(
                brute_partial_corr(corr, i, j), abs=1e-10
            )
            np.testing.assert_allclose(partial, partial.T, atol=1e-12)
