import dataclasses

import numpy as np
import pytest

from dspca.dataset import Dataset
from dspca.errors import RankDeficiencyError
from dspca.kernel import Bandwidths, LocalMoments, local_moments, local_state
from dspca.spectral import (
    RANK_RTOL,
    FactorMatrix,
    ProjectionBasis,
    TotalCovariance,
    factor_matrix,
    subspace_distance,
    top_eigenvectors,
    total_cov,
)

SQRT_HALF = 0.7071067811865476  # sqrt(2)/2


def _moments(sigma_pooled, delta, u=0.5):
    sigma = np.asarray(sigma_pooled, dtype=float)
    d = np.asarray(delta, dtype=float)
    mu2 = np.zeros_like(d)
    return LocalMoments(
        u=u,
        mu1=d,
        mu2=mu2,
        sigma1=sigma,
        sigma2=sigma,
        sigma_pooled=sigma,
        delta=d,
        class_weight_sums=(1.0, 1.0),
        bandwidths=Bandwidths.uniform(0.5),
    )


def _random_ds(rng, n1=10, n2=12, p=6):
    n = n1 + n2
    return Dataset(
        rng.normal(size=(n, p)),
        rng.uniform(size=n),
        [1] * n1 + [2] * n2,
    )


class TestTotalCov:
    def test_identity_plus_spike(self):
        got = total_cov(_moments(np.eye(2), [1.0, 0.0]), rho=3.0)
        assert np.allclose(got.matrix, np.diag([4.0, 1.0]), atol=1e-15)
        assert got.rho == 3.0

    def test_zero_rho_is_pooled(self):
        S = np.array([[2.0, 0.5], [0.5, 1.0]])
        got = total_cov(_moments(S, [1.0, -1.0]), rho=0.0)
        assert np.allclose(got.matrix, S, atol=1e-15)

    def test_symmetric_output(self):
        rng = np.random.default_rng(0)
        B = rng.normal(size=(4, 4))
        got = total_cov(_moments(B @ B.T, rng.normal(size=4)), rho=2.0)
        assert np.array_equal(got.matrix, got.matrix.T)

    def test_negative_rho_rejected(self):
        with pytest.raises(ValueError):
            total_cov(_moments(np.eye(2), [1.0, 0.0]), rho=-0.1)


class TestFactorMatrix:
    def test_shape(self):
        rng = np.random.default_rng(1)
        ds = _random_ds(rng, n1=5, n2=7, p=4)
        m = local_moments(ds, 0.4, Bandwidths.uniform(0.5))
        A = factor_matrix(ds, m, rho=1.5)
        assert A.rows.shape == (13, 4)

    def test_gram_identity(self):
        # A'A must reproduce the dense local total covariance.
        rng = np.random.default_rng(2)
        for _ in range(10):
            ds = _random_ds(rng, n1=8, n2=9, p=5)
            bw = Bandwidths(mean_h=(0.3, 0.5), cov_h=(0.4, 0.25))
            u = float(rng.uniform())
            rho = float(rng.uniform(0.5, 5.0))
            m = local_moments(ds, u, bw)
            A = factor_matrix(ds, m, rho)
            dense = total_cov(m, rho).matrix
            scale = max(np.abs(dense).max(), 1.0)
            assert np.allclose(A.rows.T @ A.rows, dense, atol=1e-12 * scale)

    def test_accepts_local_state(self):
        rng = np.random.default_rng(3)
        ds = _random_ds(rng)
        bw = Bandwidths.uniform(0.4)
        state = local_state(ds, 0.6, bw)
        m = local_moments(ds, 0.6, bw)
        assert np.allclose(
            factor_matrix(ds, state, 2.0).rows, factor_matrix(ds, m, 2.0).rows
        )

    def test_singleton_classes_leave_only_spike(self):
        # Each class has one point, so every centered row vanishes and
        # A'A collapses to rho * delta delta'.
        ds = Dataset([[1.0, 2.0], [4.0, 6.0]], [0.5, 0.5], [1, 2])
        m = local_moments(ds, 0.5, Bandwidths.uniform(0.7))
        A = factor_matrix(ds, m, rho=2.0)
        delta = np.array([-3.0, -4.0])
        assert np.allclose(A.rows[:2], 0.0, atol=1e-12)
        assert np.allclose(A.rows.T @ A.rows, 2.0 * np.outer(delta, delta), atol=1e-12)


class TestTopEigenvectors:
    def test_diagonal_dense(self):
        src = TotalCovariance(matrix=np.diag([3.0, 1.0]), rho=0.0, u=0.5)
        basis = top_eigenvectors(src, K=1)
        assert np.allclose(basis.vectors[:, 0], [1.0, 0.0], atol=1e-14)
        assert basis.eigenvalues[0] == pytest.approx(3.0, rel=1e-14)

    def test_descending_eigenvalues_and_orthonormal(self):
        rng = np.random.default_rng(4)
        B = rng.normal(size=(6, 6))
        src = TotalCovariance(matrix=B @ B.T, rho=0.0, u=0.1)
        basis = top_eigenvectors(src, K=4)
        lam = basis.eigenvalues
        assert np.all(lam[:-1] >= lam[1:])
        assert np.all(lam >= 0)
        V = basis.vectors
        assert np.allclose(V.T @ V, np.eye(4), atol=1e-12)

    def test_sign_convention(self):
        rng = np.random.default_rng(5)
        B = rng.normal(size=(5, 5))
        src = TotalCovariance(matrix=B @ B.T, rho=0.0, u=0.0)
        V = top_eigenvectors(src, K=3).vectors
        for k in range(3):
            col = V[:, k]
            assert col[np.argmax(np.abs(col))] > 0

    def test_eigen_residual(self):
        rng = np.random.default_rng(6)
        ds = _random_ds(rng, n1=15, n2=15, p=8)
        m = local_moments(ds, 0.5, Bandwidths.uniform(0.4))
        dense = total_cov(m, 2.0)
        A = factor_matrix(ds, m, 2.0)
        for basis in (
            top_eigenvectors(dense, K=3),
            top_eigenvectors(A, K=3, strategy="direct"),
            top_eigenvectors(A, K=3, strategy="factor"),
        ):
            S = dense.matrix
            tol = 1e-6 * max(basis.eigenvalues[0], 1.0)
            for k in range(3):
                resid = S @ basis.vectors[:, k] - basis.eigenvalues[k] * basis.vectors[:, k]
                assert np.linalg.norm(resid) <= tol

    def test_factor_matches_direct(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            ds = _random_ds(rng, n1=8, n2=8, p=12)
            m = local_moments(ds, float(rng.uniform()), Bandwidths.uniform(0.5))
            A = factor_matrix(ds, m, rho=3.0)
            direct = top_eigenvectors(A, K=3, strategy="direct")
            fact = top_eigenvectors(A, K=3, strategy="factor")
            assert np.allclose(direct.eigenvalues, fact.eigenvalues, rtol=1e-9, atol=1e-12)
            # Compare one well-separated direction: the rho-spiked top one.
            assert subspace_distance(direct.vectors[:, :1], fact.vectors[:, :1]) <= 1e-7

    def test_auto_equals_both_routes(self):
        rng = np.random.default_rng(8)
        ds = _random_ds(rng, n1=6, n2=6, p=20)  # p > n+1: auto takes the factor route
        m = local_moments(ds, 0.5, Bandwidths.uniform(0.5))
        A = factor_matrix(ds, m, rho=4.0)
        auto = top_eigenvectors(A, K=2)
        fact = top_eigenvectors(A, K=2, strategy="factor")
        assert np.array_equal(auto.vectors, fact.vectors)

    def test_spike_dominates_at_large_rho(self):
        rng = np.random.default_rng(9)
        ds = _random_ds(rng, n1=10, n2=10, p=5)
        m = local_moments(ds, 0.5, Bandwidths.uniform(0.5))
        basis = top_eigenvectors(factor_matrix(ds, m, rho=1e8), K=1)
        direction = m.delta / np.linalg.norm(m.delta)
        assert subspace_distance(basis.vectors, direction.reshape(-1, 1)) <= 1e-3

    def test_rank_deficiency_error(self):
        ds = Dataset(
            np.arange(12, dtype=float).reshape(4, 3) @ np.eye(3, 10),
            [0.2, 0.4, 0.6, 0.8],
            [1, 1, 2, 2],
        )
        m = local_moments(ds, 0.5, Bandwidths.uniform(0.5))
        A = factor_matrix(ds, m, rho=1.0)
        with pytest.raises(RankDeficiencyError) as exc:
            top_eigenvectors(A, K=8)
        assert exc.value.requested == 8
        assert exc.value.usable_rank < 8

    def test_rank_floor_is_relative(self):
        # Scaling the factor must not change the usable rank on the
        # factor path (the only path with the floor).
        base = np.zeros((4, 3))
        base[0, 0] = 1.0
        base[1, 1] = 1e-3  # squares to 1e-6, above the relative floor
        for scale in (1.0, 1e6, 1e-6):
            src = FactorMatrix(rows=base * scale, rho=0.0, u=0.0)
            got = top_eigenvectors(src, K=2, strategy="factor")
            assert got.K == 2
            with pytest.raises(RankDeficiencyError) as exc:
                top_eigenvectors(src, K=3, strategy="factor")
            assert exc.value.usable_rank == 2
        assert RANK_RTOL == 1e-12

    def test_invalid_k(self):
        src = TotalCovariance(matrix=np.eye(3), rho=0.0, u=0.0)
        with pytest.raises(ValueError):
            top_eigenvectors(src, K=0)
        with pytest.raises(ValueError):
            top_eigenvectors(src, K=4)

    def test_dense_source_rejects_factor_strategy(self):
        src = TotalCovariance(matrix=np.eye(3), rho=0.0, u=0.0)
        with pytest.raises(ValueError):
            top_eigenvectors(src, K=1, strategy="factor")

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(10)
        ds = _random_ds(rng, n1=10, n2=10, p=5)
        Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        rotated = Dataset(ds.features @ Q.T, ds.indices, ds.labels)
        bw = Bandwidths.uniform(0.5)
        b0 = top_eigenvectors(factor_matrix(ds, local_moments(ds, 0.5, bw), 2.0), K=2)
        b1 = top_eigenvectors(
            factor_matrix(rotated, local_moments(rotated, 0.5, bw), 2.0), K=2
        )
        assert np.allclose(b0.eigenvalues, b1.eigenvalues, rtol=1e-9)
        assert subspace_distance(Q @ b0.vectors, b1.vectors) <= 1e-7


class TestProjectionBasis:
    def _basis(self):
        src = TotalCovariance(matrix=np.diag([4.0, 2.0, 1.0]), rho=0.0, u=0.3)
        return top_eigenvectors(src, K=3)

    def test_truncated(self):
        full = self._basis()
        short = full.truncated(2)
        assert short.K == 2
        assert np.array_equal(short.vectors, full.vectors[:, :2])
        assert np.array_equal(short.eigenvalues, full.eigenvalues[:2])
        with pytest.raises(ValueError):
            full.truncated(0)
        with pytest.raises(ValueError):
            full.truncated(4)

    def test_to_dict(self):
        d = self._basis().to_dict()
        assert d["K"] == 3
        assert d["u"] == 0.3
        assert len(d["loadings"]) == 3


class TestSubspaceDistance:
    def test_identical_is_zero(self):
        V = np.eye(4)[:, :2]
        assert subspace_distance(V, V) == pytest.approx(0.0, abs=1e-14)

    def test_orthogonal_lines(self):
        e1 = np.eye(3)[:, :1]
        e2 = np.eye(3)[:, 1:2]
        assert subspace_distance(e1, e2) == pytest.approx(1.0, rel=1e-12)

    def test_forty_five_degrees(self):
        e1 = np.eye(2)[:, :1]
        diag = np.full((2, 1), SQRT_HALF)
        assert subspace_distance(e1, diag) == pytest.approx(SQRT_HALF, rel=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            A, _ = np.linalg.qr(rng.normal(size=(6, 2)))
            B, _ = np.linalg.qr(rng.normal(size=(6, 2)))
            assert subspace_distance(A, B) == pytest.approx(
                subspace_distance(B, A), rel=1e-10
            )

    def test_matches_dense_projector_norm(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            p = int(rng.integers(3, 9))
            k1 = int(rng.integers(1, p))
            k2 = int(rng.integers(1, p))
            A, _ = np.linalg.qr(rng.normal(size=(p, k1)))
            B, _ = np.linalg.qr(rng.normal(size=(p, k2)))
            dense = np.linalg.norm(A @ A.T - B @ B.T, 2)
            assert subspace_distance(A, B) == pytest.approx(dense, rel=1e-9, abs=1e-12)

    def test_basis_choice_invariance(self):
        # Distance depends on the span, not the particular orthonormal basis.
        rng = np.random.default_rng(13)
        A, _ = np.linalg.qr(rng.normal(size=(5, 2)))
        R, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        B, _ = np.linalg.qr(rng.normal(size=(5, 2)))
        assert subspace_distance(A @ R, B) == pytest.approx(
            subspace_distance(A, B), rel=1e-10
        )

    def test_bounded_by_one(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            A, _ = np.linalg.qr(rng.normal(size=(7, 3)))
            B, _ = np.linalg.qr(rng.normal(size=(7, 3)))
            assert 0.0 <= subspace_distance(A, B) <= 1.0 + 1e-12

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            subspace_distance(np.ones((3, 2)), np.eye(3)[:, :2])

    def test_accepts_projection_basis(self):
        src = TotalCovariance(matrix=np.diag([3.0, 1.0]), rho=0.0, u=0.0)
        b = top_eigenvectors(src, K=1)
        assert subspace_distance(b, np.eye(2)[:, :1]) == pytest.approx(0.0, abs=1e-12)
