"""Index-local discriminant rules built on supervised projections.

At a query index the classifier projects the kernel class moments onto the
leading eigenvectors of the local total covariance, then applies a linear
(pooled covariance) or quadratic (per-class covariances) discriminant in
the projected coordinates.  Scores at or above zero map to class 1.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernel, spectral
from .dataset import Dataset
from .errors import (
    DspcaError,
    RankDeficiencyError,
    RegularizationError,
    ShapeMismatchError,
)
from .kernel import Bandwidths

VARIANTS = ("lda", "qda")

#: Initial ridge multiplier for projected covariances, escalated tenfold
#: until Cholesky succeeds, up to RIDGE_MAX.
RIDGE_START = 1e-8
RIDGE_MAX = 1e-2


@dataclass(frozen=True)
class Hyperparameters:
    """Everything needed to rebuild the classifier: bandwidths, rho, K, variant."""

    bandwidths: Bandwidths
    rho: float
    K: int
    variant: str = "lda"

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def to_dict(self) -> dict:
        return {
            "bandwidths": self.bandwidths.to_dict(),
            "rho": self.rho,
            "K": self.K,
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(
            bandwidths=Bandwidths.from_dict(d["bandwidths"]),
            rho=float(d["rho"]),
            K=int(d["K"]),
            variant=str(d["variant"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Hyperparameters":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DiscriminantRule:
    """Fitted local rule at one query index.

    Means and covariances live in the projected K-dimensional space.  For
    the linear variant ``proj_sigma_pooled`` is set; for the quadratic one
    the per-class ``proj_sigma1``/``proj_sigma2`` are.  Covariances are
    positive definite after ridge regularization.
    """

    u: float
    basis: spectral.ProjectionBasis
    proj_mu1: np.ndarray
    proj_mu2: np.ndarray
    log_prior_ratio: float
    variant: str
    proj_sigma_pooled: np.ndarray | None = None
    proj_sigma1: np.ndarray | None = None
    proj_sigma2: np.ndarray | None = None


@dataclass
class PredictionResult:
    """Batch prediction outcome; failed queries carry label 0 and NaN score."""

    labels: np.ndarray
    scores: np.ndarray
    errors: dict[int, Exception]


def _regularize_pd(S: np.ndarray) -> np.ndarray:
    K = S.shape[0]
    base = float(np.trace(S)) / K
    scale = base if base > 0 else 1.0
    eye = np.eye(K)
    eps = RIDGE_START
    while eps <= RIDGE_MAX * (1 + 1e-12):
        M = S + eps * scale * eye
        try:
            np.linalg.cholesky(M)
            return M
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise RegularizationError(
        f"projected covariance not positive definite at ridge {RIDGE_MAX}"
    )


@dataclass(frozen=True)
class _PreparedLocal:
    """Everything at one query index that does not depend on rho."""

    state: kernel.LocalState
    moments: kernel.LocalMoments | None
    use_factor: bool


def prepare_local(
    ds: Dataset, u: float, bw: Bandwidths, strategy: str = "auto"
) -> _PreparedLocal:
    """Compute the rho-independent local quantities at a query index.

    On the factor route only weights and means are needed; the direct
    route additionally materializes the dense pooled covariance once so
    that sweeping rho costs a rank-one update per value.
    """
    if strategy not in ("auto", "direct", "factor"):
        raise ValueError(f"unknown strategy {strategy!r}")
    state = kernel.local_state(ds, u, bw)
    use_factor = strategy == "factor" or (strategy == "auto" and ds.p > ds.n + 1)
    moments = None if use_factor else kernel.moments_from_state(ds, state)
    return _PreparedLocal(state=state, moments=moments, use_factor=use_factor)


def rules_from_prepared(
    ds: Dataset,
    prep: _PreparedLocal,
    rho: float,
    k_max: int,
    variant: str,
    moment_source: str = "kernel",
):
    """Rules for every K in 1..k_max at one query index, sharing one basis.

    The basis is computed once at ``k_max`` (or at the usable rank if the
    factor path finds less) and truncated, which is valid because leading
    eigenvector sets are nested.  Returns ``(rules, usable)`` where
    ``rules[K-1]`` is None for K beyond the usable rank.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if moment_source not in ("kernel", "sample"):
        raise ValueError(f"unknown moment_source {moment_source!r}")
    state = prep.state
    u = state.u
    n, p = ds.n, ds.p

    k_eff = min(k_max, p)
    if prep.use_factor:
        fm = spectral.factor_matrix(ds, state, rho)
        try:
            basis = spectral.top_eigenvectors(fm, k_eff, "factor")
        except RankDeficiencyError as e:
            if e.usable_rank < 1:
                raise
            k_eff = e.usable_rank
            basis = spectral.top_eigenvectors(fm, k_eff, "factor")
    else:
        tc = spectral.total_cov(prep.moments, rho)
        basis = spectral.top_eigenvectors(tc, k_eff, "direct")
    B = basis.vectors

    if moment_source == "kernel":
        mus = [B.T @ state.mean_mu[slot] for slot in range(2)]
        covs = []
        for slot in range(2):
            X_c = ds.features[state.rows[slot]]
            Z = ((X_c - state.cov_mu[slot]) @ B) * np.sqrt(state.cov_w[slot])[:, None]
            S = Z.T @ Z
            covs.append((S + S.T) / 2.0)
    else:
        mus, covs = [], []
        for slot in range(2):
            T = ds.features[state.rows[slot]] @ B
            m = T.mean(axis=0)
            Zc = T - m
            S = (Zc.T @ Zc) / len(T)
            mus.append(m)
            covs.append((S + S.T) / 2.0)

    n1, n2 = state.counts
    pooled = (n1 / n) * covs[0] + (n2 / n) * covs[1]
    lpr = math.log(n1 / n2)

    rules: list[DiscriminantRule | None] = []
    for K in range(1, k_max + 1):
        if K > k_eff:
            rules.append(None)
            continue
        common = dict(
            u=float(u),
            basis=basis.truncated(K),
            proj_mu1=mus[0][:K],
            proj_mu2=mus[1][:K],
            log_prior_ratio=lpr,
            variant=variant,
        )
        if variant == "lda":
            rules.append(
                DiscriminantRule(
                    **common, proj_sigma_pooled=_regularize_pd(pooled[:K, :K])
                )
            )
        else:
            rules.append(
                DiscriminantRule(
                    **common,
                    proj_sigma1=_regularize_pd(covs[0][:K, :K]),
                    proj_sigma2=_regularize_pd(covs[1][:K, :K]),
                )
            )
    return rules, k_eff


def local_rule(
    ds: Dataset,
    u: float,
    hp: Hyperparameters,
    strategy: str = "auto",
    moment_source: str = "kernel",
) -> DiscriminantRule:
    """Fit the discriminant rule at one query index.

    ``moment_source="sample"`` swaps the kernel-weighted projected moments
    for unweighted projected sample moments (a static baseline sharing the
    same projection), useful for comparisons.
    """
    prep = prepare_local(ds, u, hp.bandwidths, strategy)
    rules, usable = rules_from_prepared(
        ds, prep, hp.rho, hp.K, hp.variant, moment_source
    )
    rule = rules[hp.K - 1]
    if rule is None:
        raise RankDeficiencyError(requested=hp.K, usable_rank=usable)
    return rule


def _project(rule: DiscriminantRule, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    p = rule.basis.vectors.shape[0]
    if x.shape != (p,):
        raise ShapeMismatchError(f"query has shape {x.shape}, expected ({p},)")
    return rule.basis.vectors.T @ x


def lda_score(rule: DiscriminantRule, x: np.ndarray) -> float:
    """Linear discriminant score; at or above zero means class 1."""
    if rule.variant != "lda" or rule.proj_sigma_pooled is None:
        raise ValueError("rule was not fitted for the linear variant")
    z = _project(rule, x)
    direction = np.linalg.solve(rule.proj_sigma_pooled, rule.proj_mu1 - rule.proj_mu2)
    mid = (rule.proj_mu1 + rule.proj_mu2) / 2.0
    return float((z - mid) @ direction + rule.log_prior_ratio)


def qda_score(rule: DiscriminantRule, x: np.ndarray) -> float:
    """Quadratic discriminant score; at or above zero means class 1."""
    if rule.variant != "qda" or rule.proj_sigma1 is None or rule.proj_sigma2 is None:
        raise ValueError("rule was not fitted for the quadratic variant")
    z = _project(rule, x)
    d1 = z - rule.proj_mu1
    d2 = z - rule.proj_mu2
    q1 = float(d1 @ np.linalg.solve(rule.proj_sigma1, d1))
    q2 = float(d2 @ np.linalg.solve(rule.proj_sigma2, d2))
    ld1 = float(np.linalg.slogdet(rule.proj_sigma1)[1])
    ld2 = float(np.linalg.slogdet(rule.proj_sigma2)[1])
    return -0.5 * q1 + 0.5 * q2 - 0.5 * ld1 + 0.5 * ld2 + rule.log_prior_ratio


def score(rule: DiscriminantRule, x: np.ndarray) -> float:
    return lda_score(rule, x) if rule.variant == "lda" else qda_score(rule, x)


def _as_queries(queries, p: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(queries, tuple) and len(queries) == 2:
        X = np.asarray(queries[0], dtype=float)
        if X.ndim == 2:
            u = np.asarray(queries[1], dtype=float)
            if u.shape != (X.shape[0],):
                raise ValueError("query index vector length must match query rows")
            if X.shape[1] != p:
                raise ShapeMismatchError(
                    f"queries have {X.shape[1]} features, training has {p}"
                )
            return X, u
    pairs = list(queries)
    X = np.asarray([np.asarray(x, dtype=float) for x, _ in pairs])
    u = np.asarray([float(uu) for _, uu in pairs])
    if X.ndim != 2 or X.shape[1] != p:
        raise ShapeMismatchError(
            f"queries have shape {X.shape}, expected (m, {p})"
        )
    return X, u


def predict_detailed(
    train: Dataset,
    queries,
    hp: Hyperparameters,
    strategy: str = "auto",
    moment_source: str = "kernel",
) -> PredictionResult:
    """Score and label a batch of (x, u) queries.

    Rules are cached per distinct index value (exact float equality), so
    repeated indices cost one fit.  Per-query failures are collected: the
    affected entries get label 0 and NaN score and a warning lists them.
    Only an all-query failure raises.
    """
    X, u = _as_queries(queries, train.p)
    m = X.shape[0]
    labels = np.zeros(m, dtype=int)
    scores = np.full(m, np.nan)
    errors: dict[int, Exception] = {}
    cache: dict[float, DiscriminantRule | Exception] = {}
    for j in range(m):
        key = float(u[j])
        got = cache.get(key)
        if got is None:
            try:
                got = local_rule(train, key, hp, strategy, moment_source)
            except DspcaError as e:
                got = e
            cache[key] = got
        if isinstance(got, Exception):
            errors[j] = got
            continue
        s = score(got, X[j])
        scores[j] = s
        labels[j] = 1 if s >= 0 else 2
    if errors and len(errors) == m:
        raise next(iter(errors.values()))
    if errors:
        warnings.warn(
            f"{len(errors)} of {m} queries failed and were labeled 0: "
            f"rows {sorted(errors)}",
            stacklevel=2,
        )
    return PredictionResult(labels=labels, scores=scores, errors=errors)


def predict(
    train: Dataset,
    queries,
    hp: Hyperparameters,
    strategy: str = "auto",
    moment_source: str = "kernel",
) -> np.ndarray:
    """Labels for a batch of (x, u) queries; see :func:`predict_detailed`."""
    return predict_detailed(train, queries, hp, strategy, moment_source).labels
