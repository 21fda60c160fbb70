"""Kernel-smoothed local moment estimators and bandwidth selection.

All estimators are Nadaraya-Watson style: at a query index ``u`` each
observation of class ``c`` receives weight ``K_h(u_i - u)`` with
``K_h(t) = K(t / h) / h`` and ``K`` the standard Gaussian density.  The
local class mean is the weighted average of the class features; the local
class covariance is the weighted second moment about the weighted mean.
Bandwidths are chosen per class and separately for the mean and the
covariance by leave-one-out cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset, LABELS
from .errors import (
    BandwidthSelectionError,
    BandwidthUnderflowError,
    LoocvUnderflowError,
)

GAUSSIAN = "gaussian"

#: Kernel weight sums below this are treated as underflow.
WEIGHT_SUM_FLOOR = 1e-300

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def kernel_weight(diff, h: float):
    """Scaled Gaussian kernel weight ``K((u_i - u) / h) / h``.

    ``diff`` may be a scalar or an array; ``h`` must be positive.
    """
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    z = np.asarray(diff, dtype=float) / h
    w = (_INV_SQRT_2PI / h) * np.exp(-0.5 * z * z)
    if np.ndim(diff) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth."""

    bandwidth: float
    family: str = GAUSSIAN

    def __post_init__(self):
        if self.family != GAUSSIAN:
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def weight(self, diff):
        return kernel_weight(diff, self.bandwidth)


@dataclass(frozen=True)
class Bandwidths:
    """Per-class bandwidths: ``mean_h[c]`` for the mean estimator of class
    ``c + 1`` and ``cov_h[c]`` for its covariance estimator."""

    mean_h: tuple[float, float]
    cov_h: tuple[float, float]

    def __post_init__(self):
        for pair in (self.mean_h, self.cov_h):
            if len(pair) != 2 or any(h <= 0 for h in pair):
                raise ValueError(f"bandwidths must be two positive values, got {pair}")

    @classmethod
    def uniform(cls, h: float) -> "Bandwidths":
        return cls(mean_h=(h, h), cov_h=(h, h))

    def mean_for(self, label: int) -> float:
        return self.mean_h[label - 1]

    def cov_for(self, label: int) -> float:
        return self.cov_h[label - 1]

    def to_dict(self) -> dict:
        return {"mean_h": list(self.mean_h), "cov_h": list(self.cov_h)}

    @classmethod
    def from_dict(cls, d: dict) -> "Bandwidths":
        return cls(
            mean_h=tuple(float(h) for h in d["mean_h"]),
            cov_h=tuple(float(h) for h in d["cov_h"]),
        )


@dataclass(frozen=True)
class LocalMoments:
    """Kernel moment estimates at one query index.

    ``delta`` is ``mu1 - mu2`` exactly, and ``sigma_pooled`` is the
    class-proportion mixture ``(n1 * sigma1 + n2 * sigma2) / n`` exactly.
    ``class_weight_sums`` holds the unnormalized kernel weight sums of the
    two mean estimators (a diagnostic for how much local data supports the
    estimate).
    """

    u: float
    mu1: np.ndarray
    mu2: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma_pooled: np.ndarray
    delta: np.ndarray
    class_weight_sums: tuple[float, float]
    bandwidths: Bandwidths


@dataclass(frozen=True)
class LocalState:
    """Per-class kernel weights and means at one query index.

    Lighter sibling of :class:`LocalMoments`: everything the projection
    machinery needs without materializing p-by-p covariance matrices.
    Entries are per class slot (label 1 first): row positions into the
    dataset, normalized weights at the mean and covariance bandwidths,
    and the corresponding weighted means.
    """

    u: float
    bandwidths: Bandwidths
    rows: tuple[np.ndarray, np.ndarray]
    mean_w: tuple[np.ndarray, np.ndarray]
    cov_w: tuple[np.ndarray, np.ndarray]
    mean_mu: tuple[np.ndarray, np.ndarray]
    cov_mu: tuple[np.ndarray, np.ndarray]
    mean_wsum: tuple[float, float]
    counts: tuple[int, int]

    @property
    def delta(self) -> np.ndarray:
        return self.mean_mu[0] - self.mean_mu[1]


def _normalized_weights(u_c: np.ndarray, u: float, h: float, label: int):
    raw = kernel_weight(u_c - u, h)
    s = float(raw.sum())
    if not s >= WEIGHT_SUM_FLOOR:
        raise BandwidthUnderflowError(u=u, h=h, label=label)
    return raw / s, s


def nw_mean(ds: Dataset, label: int, u: float, h: float) -> np.ndarray:
    """Kernel-weighted class mean at query index ``u``."""
    w, _ = _normalized_weights(ds.class_indices(label), u, h, label)
    return w @ ds.class_features(label)


def nw_class_cov(ds: Dataset, label: int, u: float, h: float) -> np.ndarray:
    """Kernel-weighted class covariance at query index ``u``.

    Computed in centered form: the weighted mean at the same bandwidth is
    subtracted before forming the weighted outer-product sum, which keeps
    the result symmetric PSD up to roundoff.
    """
    w, _ = _normalized_weights(ds.class_indices(label), u, h, label)
    X = ds.class_features(label)
    Z = (X - w @ X) * np.sqrt(w)[:, None]
    S = Z.T @ Z
    return (S + S.T) / 2.0


def local_state(ds: Dataset, u: float, bw: Bandwidths) -> LocalState:
    """Compute per-class normalized weights and means at ``u``."""
    ds.require_both_classes()
    rows, mean_w, cov_w, mean_mu, cov_mu, mean_wsum, counts = [], [], [], [], [], [], []
    for label in LABELS:
        r = ds.class_rows(label)
        u_c = ds.indices[r]
        X_c = ds.features[r]
        wm, sm = _normalized_weights(u_c, u, bw.mean_for(label), label)
        wc, _ = _normalized_weights(u_c, u, bw.cov_for(label), label)
        rows.append(r)
        mean_w.append(wm)
        cov_w.append(wc)
        mean_mu.append(wm @ X_c)
        cov_mu.append(wc @ X_c)
        mean_wsum.append(sm)
        counts.append(len(r))
    return LocalState(
        u=float(u),
        bandwidths=bw,
        rows=tuple(rows),
        mean_w=tuple(mean_w),
        cov_w=tuple(cov_w),
        mean_mu=tuple(mean_mu),
        cov_mu=tuple(cov_mu),
        mean_wsum=tuple(mean_wsum),
        counts=tuple(counts),
    )


def moments_from_state(ds: Dataset, state: LocalState) -> LocalMoments:
    """Materialize dense covariance matrices from a :class:`LocalState`."""
    sigmas = []
    for slot in range(2):
        X_c = ds.features[state.rows[slot]]
        w = state.cov_w[slot]
        Z = (X_c - state.cov_mu[slot]) * np.sqrt(w)[:, None]
        S = Z.T @ Z
        sigmas.append((S + S.T) / 2.0)
    n1, n2 = state.counts
    n = n1 + n2
    pooled = (n1 / n) * sigmas[0] + (n2 / n) * sigmas[1]
    return LocalMoments(
        u=state.u,
        mu1=state.mean_mu[0],
        mu2=state.mean_mu[1],
        sigma1=sigmas[0],
        sigma2=sigmas[1],
        sigma_pooled=pooled,
        delta=state.delta,
        class_weight_sums=state.mean_wsum,
        bandwidths=state.bandwidths,
    )


def local_moments(ds: Dataset, u: float, bw: Bandwidths) -> LocalMoments:
    """Kernel means, covariances, pooled covariance and mean gap at ``u``."""
    return moments_from_state(ds, local_state(ds, u, bw))


def _loo_weight_matrix(ds: Dataset, label: int, h: float):
    rows = ds.class_rows(label)
    if len(rows) < 2:
        raise ValueError(f"class {label} needs at least 2 observations, got {len(rows)}")
    u_c = ds.indices[rows]
    W = kernel_weight(u_c[None, :] - u_c[:, None], h)
    np.fill_diagonal(W, 0.0)
    s = W.sum(axis=1)
    bad = np.flatnonzero(~(s >= WEIGHT_SUM_FLOOR))
    if bad.size:
        raise LoocvUnderflowError(h=h, label=label, rows=rows[bad].tolist())
    return ds.features[rows], W / s[:, None]


def loocv_mean_error(ds: Dataset, label: int, h: float) -> float:
    """Leave-one-out criterion for the mean bandwidth of one class.

    Average of ``||x_i - mu_{-i}(u_i)||^2 / p^2`` over the class, where
    ``mu_{-i}`` is the kernel mean recomputed without observation ``i``.
    """
    X, Wn = _loo_weight_matrix(ds, label, h)
    R = X - Wn @ X
    n_c, p = X.shape
    return float((R * R).sum() / (p * p * n_c))


def loocv_cov_error(ds: Dataset, label: int, h: float) -> float:
    """Leave-one-out criterion for the covariance bandwidth of one class.

    Average of ``||r_i r_i' - sigma_{-i}(u_i)||_F^2 / p^2`` over the class,
    with ``r_i = x_i - mu_{-i}(u_i)`` and both leave-one-out estimators
    evaluated at the candidate bandwidth.  The Frobenius norms are expanded
    through the Gram matrix of the class features, so the cost stays at
    O(n^2 p + n^3) instead of O(n^2 p^2).
    """
    X, Wn = _loo_weight_matrix(ds, label, h)
    n_c, p = X.shape
    M = Wn @ X                      # nu_i rows: leave-one-out means
    R = X - M                       # r_i rows
    G = X @ X.T

    rr2 = (R * R).sum(axis=1)       # ||r_i||^2
    nn2 = (M * M).sum(axis=1)       # ||nu_i||^2
    nr = (M * R).sum(axis=1)        # nu_i' r_i
    PR = X @ R.T                    # PR[j, i] = x_j' r_i
    PN = X @ M.T                    # PN[j, i] = x_j' nu_i

    # <r r', sigma_{-i}> = sum_j w_ij (x_j' r_i)^2 - (nu_i' r_i)^2
    quad = (Wn * (PR.T ** 2)).sum(axis=1) - nr ** 2
    # ||sigma_{-i}||_F^2 expanded through the Gram matrix
    frob = (
        ((Wn @ (G * G)) * Wn).sum(axis=1)
        - 2.0 * (Wn * (PN.T ** 2)).sum(axis=1)
        + nn2 ** 2
    )
    # Each addend is a squared Frobenius norm; cancellation in the
    # expansion can leave it a hair negative, so floor at zero.
    total = np.maximum(rr2 ** 2 - 2.0 * quad + frob, 0.0)
    return float(total.sum() / (p * p * n_c))


def default_bandwidth_grid(num: int = 20, lo: float = 0.02, hi: float = 1.0) -> np.ndarray:
    """Log-spaced candidate bandwidths for an index living on [0, 1]."""
    if num < 1 or lo <= 0 or hi < lo:
        raise ValueError("grid needs num >= 1 and 0 < lo <= hi")
    return np.geomspace(lo, hi, num)


def bandwidth_search(ds: Dataset, grid: Sequence[float] | None = None) -> list[dict]:
    """Evaluate both LOOCV criteria for both classes over a bandwidth grid.

    Returns one record per (class, criterion, h) with the criterion value,
    or an ``error`` string for candidates that underflowed.  Grid values
    are visited in ascending order.
    """
    if grid is None:
        grid = default_bandwidth_grid()
    hs = sorted(float(h) for h in grid)
    if not hs:
        raise ValueError("bandwidth grid is empty")
    records = []
    for label in LABELS:
        for crit, fn in (("mean", loocv_mean_error), ("cov", loocv_cov_error)):
            for h in hs:
                rec = {"label": label, "criterion": crit, "h": h}
                try:
                    rec["value"] = fn(ds, label, h)
                except LoocvUnderflowError as e:
                    rec["error"] = str(e)
                records.append(rec)
    return records


def select_bandwidths(ds: Dataset, grid: Sequence[float] | None = None) -> Bandwidths:
    """Pick the four bandwidths minimizing their LOOCV criteria.

    Each of the four (class, criterion) pairs is minimized independently
    over the grid; exact ties resolve to the smaller bandwidth; candidates
    that underflow are skipped.  Raises
    :class:`BandwidthSelectionError` if every candidate failed for some
    pair.
    """
    return select_from_search(bandwidth_search(ds, grid))


def select_from_search(records: list[dict]) -> Bandwidths:
    """Apply the selection rule to a :func:`bandwidth_search` table.

    Records must be in ascending-h order within each (class, criterion)
    group, as :func:`bandwidth_search` emits them; ties then resolve to
    the smaller bandwidth because only strict improvements replace the
    incumbent.
    """
    chosen: dict[tuple[int, str], float] = {}
    best: dict[tuple[int, str], float] = {}
    for rec in records:
        if "value" not in rec:
            continue
        key = (rec["label"], rec["criterion"])
        if key not in chosen or rec["value"] < best[key]:
            chosen[key] = rec["h"]
            best[key] = rec["value"]
    for label in LABELS:
        for crit in ("mean", "cov"):
            if (label, crit) not in chosen:
                raise BandwidthSelectionError(
                    f"no usable bandwidth for class {label} {crit} criterion"
                )
    return Bandwidths(
        mean_h=(chosen[(1, "mean")], chosen[(2, "mean")]),
        cov_h=(chosen[(1, "cov")], chosen[(2, "cov")]),
    )
