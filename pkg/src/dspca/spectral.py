"""Supervised projection directions from local second moments.

The projection basis at a query index is the set of leading eigenvectors
of the local total covariance ``sigma_pooled + rho * delta delta'``, the
pooled kernel covariance inflated along the local mean gap.  Two routes
compute the same basis: a direct symmetric eigendecomposition of the
p-by-p matrix, and a factor route that decomposes the (n+1)-by-(n+1)
Gram matrix of a thin factor whose transposed product reproduces the
total covariance.  The factor route is the cheap one when features far
outnumber observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import RankDeficiencyError
from .kernel import LocalMoments, LocalState, local_state

#: Factor-path eigenvalues at or below RANK_RTOL times the leading one are
#: considered numerically zero.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class TotalCovariance:
    """Dense local total covariance at one query index."""

    matrix: np.ndarray
    rho: float
    u: float


@dataclass(frozen=True)
class FactorMatrix:
    """Thin factor ``A`` with ``A'A`` equal to the local total covariance.

    Rows 0..n-1 are the centered observations, each scaled by the square
    root of its class share times its normalized covariance-bandwidth
    weight; row n is ``sqrt(rho)`` times the local mean gap.
    """

    rows: np.ndarray
    rho: float
    u: float


@dataclass(frozen=True)
class ProjectionBasis:
    """Orthonormal projection directions with their eigenvalues.

    ``vectors`` is p-by-K with descending ``eigenvalues``; each column is
    sign-normalized so its largest-magnitude coordinate is positive.
    """

    vectors: np.ndarray
    eigenvalues: np.ndarray
    u: float
    rho: float

    @property
    def K(self) -> int:
        return self.vectors.shape[1]

    def truncated(self, K: int) -> "ProjectionBasis":
        if not (1 <= K <= self.K):
            raise ValueError(f"K must be in [1, {self.K}], got {K}")
        return ProjectionBasis(
            vectors=self.vectors[:, :K],
            eigenvalues=self.eigenvalues[:K],
            u=self.u,
            rho=self.rho,
        )

    def to_dict(self) -> dict:
        return {
            "u": self.u,
            "K": self.K,
            "rho": self.rho,
            "eigenvalues": self.eigenvalues.tolist(),
            "loadings": self.vectors.tolist(),
        }


def total_cov(m: LocalMoments, rho: float) -> TotalCovariance:
    """Pooled covariance inflated by ``rho`` along the local mean gap."""
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    S = m.sigma_pooled + rho * np.outer(m.delta, m.delta)
    return TotalCovariance(matrix=(S + S.T) / 2.0, rho=float(rho), u=m.u)


def factor_matrix(ds: Dataset, m: LocalMoments | LocalState, rho: float) -> FactorMatrix:
    """Build the thin factor of the local total covariance.

    Accepts either moment object; dense covariances are never formed.
    Observation rows keep dataset order.  Each class is centered on its
    covariance-bandwidth weighted mean, which is what makes ``A'A``
    reproduce the pooled covariance exactly.
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    state = m if isinstance(m, LocalState) else local_state(ds, m.u, m.bandwidths)
    n = ds.n
    A = np.empty((n + 1, ds.p))
    for slot in range(2):
        w = state.cov_w[slot]
        if np.any(w < 0):
            raise RuntimeError("internal error: negative kernel weight")
        rows = state.rows[slot]
        share = state.counts[slot] / n
        scale = np.sqrt(share * w)
        A[rows] = scale[:, None] * (ds.features[rows] - state.cov_mu[slot])
    A[n] = np.sqrt(rho) * state.delta
    return FactorMatrix(rows=A, rho=float(rho), u=state.u)


def _sign_normalize(V: np.ndarray) -> np.ndarray:
    # Largest-magnitude coordinate of each column made positive; on exact
    # ties argmax keeps the lowest row.
    lead = np.abs(V).argmax(axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def top_eigenvectors(
    source: TotalCovariance | FactorMatrix, K: int, strategy: str = "auto"
) -> ProjectionBasis:
    """Leading eigenvectors of the local total covariance.

    ``strategy`` is ``"direct"`` (eigendecompose the p-by-p matrix),
    ``"factor"`` (eigendecompose the small Gram of the factor rows and map
    back; requires a :class:`FactorMatrix`), or ``"auto"`` (factor when
    p > n + 1).  The factor path raises :class:`RankDeficiencyError` when
    fewer than ``K`` eigenvalues clear ``RANK_RTOL`` times the largest.
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if strategy not in ("auto", "direct", "factor"):
        raise ValueError(f"unknown strategy {strategy!r}")

    if isinstance(source, TotalCovariance):
        if strategy == "factor":
            raise ValueError("factor strategy needs a FactorMatrix, got TotalCovariance")
        p = source.matrix.shape[0]
        if K > p:
            raise ValueError(f"K must be at most p={p}, got {K}")
        lam, V = np.linalg.eigh(source.matrix)
        lam = lam[::-1][:K]
        V = V[:, ::-1][:, :K]
        return ProjectionBasis(
            vectors=_sign_normalize(V),
            eigenvalues=np.maximum(lam, 0.0),
            u=source.u,
            rho=source.rho,
        )

    A = source.rows
    n_plus_1, p = A.shape
    if K > p:
        raise ValueError(f"K must be at most p={p}, got {K}")
    if strategy == "auto":
        strategy = "factor" if p > n_plus_1 else "direct"
    if strategy == "direct":
        S = A.T @ A
        return top_eigenvectors(
            TotalCovariance(matrix=(S + S.T) / 2.0, rho=source.rho, u=source.u),
            K,
            "direct",
        )

    M = A @ A.T
    lam, W = np.linalg.eigh((M + M.T) / 2.0)
    lam = lam[::-1]
    W = W[:, ::-1]
    lead = max(float(lam[0]), 0.0)
    usable = int(np.count_nonzero(lam > RANK_RTOL * lead)) if lead > 0 else 0
    if K > usable:
        raise RankDeficiencyError(requested=K, usable_rank=usable)
    V = A.T @ W[:, :K]
    V /= np.linalg.norm(V, axis=0)
    return ProjectionBasis(
        vectors=_sign_normalize(V),
        eigenvalues=np.maximum(lam[:K], 0.0),
        u=source.u,
        rho=source.rho,
    )


def _as_orthonormal(b) -> np.ndarray:
    B = b.vectors if isinstance(b, ProjectionBasis) else np.asarray(b, dtype=float)
    if B.ndim != 2:
        raise ValueError("basis must be a 2-d array of columns")
    gram = B.T @ B
    if np.abs(gram - np.eye(B.shape[1])).max() > 1e-6:
        raise ValueError("basis columns are not orthonormal")
    return B


def subspace_distance(b1, b2) -> float:
    """Spectral norm of the difference of the two orthogonal projectors.

    Accepts :class:`ProjectionBasis` objects or plain orthonormal column
    arrays over the same ambient dimension.  The computation restricts to
    the joint column span, so the cost is O(p K^2) rather than O(p^3).
    """
    B1 = _as_orthonormal(b1)
    B2 = _as_orthonormal(b2)
    if B1.shape[0] != B2.shape[0]:
        raise ValueError("bases live in different ambient dimensions")
    Q, _ = np.linalg.qr(np.hstack([B1, B2]))
    C1 = Q.T @ B1
    C2 = Q.T @ B2
    D = C1 @ C1.T - C2 @ C2.T
    return float(np.abs(np.linalg.eigvalsh((D + D.T) / 2.0)).max())
