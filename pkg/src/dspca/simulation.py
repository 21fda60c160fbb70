"""Synthetic two-class models with index-dependent moments, plus a
Monte-Carlo benchmark harness.

Six generating models are built in.  Each observation draws its index
``u`` uniformly on [0, 1] and its features from a Gaussian whose mean and
covariance may depend on ``u``:

1. static means differing on the first 20 coordinates; static AR(0.5)
   correlation,
2. ``exp(u)`` means with a ``u``-block contrast; AR(u) correlation,
3. ``+u`` vs ``-u`` contrast on the first 20 coordinates; equicorrelation
   ``u`` (one shared factor plus noise),
4. like 3 but the contrast sits on all but the last 20 coordinates,
5. ``u`` vs ``sin(4u)`` means on every coordinate; equicorrelation ``u``,
6. like 4 but class 1 keeps AR(u) covariance while class 2 keeps the
   equicorrelation one (the only unequal-covariance model).

The benchmark runs independent replicates (fresh train and test draw per
replicate), fits the tuned classifier and/or evaluates the true-parameter
oracle rule, and reports mean test misclassification with its standard
error and mean wall time per method.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import classifier, kernel, tuning
from .dataset import Dataset
from .errors import BenchmarkError, DspcaError, GenerationError

METHOD_ORACLE = "Oracle"
METHOD_LDA = "DSPCALDA"
METHOD_QDA = "DSPCAQDA"
ALL_METHODS = (METHOD_ORACLE, METHOD_LDA, METHOD_QDA)

_BLOCK = 20  # size of the mean-contrast block shared by all models


@dataclass(frozen=True)
class SimulationModelSpec:
    """One of the six generating models at a given feature dimension."""

    model_id: int
    p: int

    def __post_init__(self):
        if self.model_id not in range(1, 7):
            raise ValueError(f"model_id must be 1..6, got {self.model_id}")
        if self.p <= _BLOCK:
            raise ValueError(f"p must exceed {_BLOCK}, got {self.p}")

    @property
    def equal_cov(self) -> bool:
        return self.model_id != 6

    def mean(self, label: int, u: float) -> np.ndarray:
        """True class mean at index ``u``."""
        p, m = self.p, _BLOCK
        mid = self.model_id
        if mid == 1:
            if label == 1:
                return np.ones(p)
            out = np.ones(p)
            out[:m] = 0.0
            return out
        if mid == 2:
            if label == 1:
                return np.full(p, math.exp(u))
            out = np.full(p, math.exp(u))
            out[:m] = u
            return out
        if mid == 3:
            if label == 1:
                return np.full(p, u)
            out = np.full(p, u)
            out[:m] = -u
            return out
        if mid in (4, 6):
            if label == 1:
                return np.full(p, u)
            out = np.full(p, -u)
            out[p - m:] = u
            return out
        # model 5
        if label == 1:
            return np.full(p, u)
        return np.full(p, math.sin(4.0 * u))

    def _cov_kind(self, label: int) -> str:
        mid = self.model_id
        if mid == 1:
            return "ar_half"
        if mid == 2:
            return "ar_u"
        if mid == 6:
            return "ar_u" if label == 1 else "spike"
        return "spike"

    def cov(self, label: int, u: float) -> np.ndarray:
        """True class covariance at index ``u``."""
        kind = self._cov_kind(label)
        if kind == "spike":
            return u * np.ones((self.p, self.p)) + (1.0 - u) * np.eye(self.p)
        r = 0.5 if kind == "ar_half" else u
        idx = np.arange(self.p)
        return r ** np.abs(idx[:, None] - idx[None, :])


def model_spec(model_id: int, p: int) -> SimulationModelSpec:
    """Convenience constructor for :class:`SimulationModelSpec`."""
    return SimulationModelSpec(model_id=model_id, p=p)


def _sample_ar(r, z: np.ndarray) -> np.ndarray:
    # First-order recursion gives exactly the r^|i-j| correlation with unit
    # variances; r may be a scalar or one coefficient per row.
    m, p = z.shape
    r = np.broadcast_to(np.asarray(r, dtype=float), (m,))
    scale = np.sqrt(1.0 - r * r)
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    for j in range(1, p):
        x[:, j] = r * x[:, j - 1] + scale * z[:, j]
    return x


def _sample_block(
    spec: SimulationModelSpec,
    label: int,
    us: np.ndarray,
    rng: np.random.Generator,
    sampler: str,
) -> np.ndarray:
    m = len(us)
    p = spec.p
    means = np.stack([spec.mean(label, float(u)) for u in us])
    kind = spec._cov_kind(label)
    if sampler == "auto" and kind in ("ar_half", "ar_u"):
        z = rng.standard_normal((m, p))
        r = 0.5 if kind == "ar_half" else us
        return means + _sample_ar(r, z)
    if sampler == "auto" and kind == "spike":
        z0 = rng.standard_normal(m)
        z = rng.standard_normal((m, p))
        return means + np.sqrt(us)[:, None] * z0[:, None] + np.sqrt(1.0 - us)[:, None] * z
    if sampler not in ("auto", "generic"):
        raise ValueError(f"unknown sampler {sampler!r}")
    # Generic route: factor the dense covariance per observation.
    out = np.empty((m, p))
    for i, u in enumerate(us):
        S = spec.cov(label, float(u))
        lam, V = np.linalg.eigh(S)
        if lam.min() < -1e-8 * max(lam.max(), 1.0):
            raise GenerationError(
                f"model {spec.model_id} covariance at u={u!r} is not PSD"
            )
        lam = np.maximum(lam, 0.0)
        out[i] = means[i] + V @ (np.sqrt(lam) * rng.standard_normal(p))
    return out


def generate(
    spec: SimulationModelSpec,
    n1: int,
    n2: int,
    seed: int,
    sampler: str = "auto",
) -> Dataset:
    """Draw a dataset from the model: indices first, then class-1 features,
    then class-2 features.

    Deterministic for a fixed seed and sampler choice (the ``auto`` and
    ``generic`` samplers consume the stream differently, so they produce
    different but identically distributed datasets).
    """
    if n1 < 1 or n2 < 1:
        raise ValueError(f"class sizes must be positive, got n1={n1}, n2={n2}")
    rng = np.random.default_rng(seed)
    u = rng.random(n1 + n2)
    X = np.empty((n1 + n2, spec.p))
    X[:n1] = _sample_block(spec, 1, u[:n1], rng, sampler)
    X[n1:] = _sample_block(spec, 2, u[n1:], rng, sampler)
    y = np.concatenate([np.ones(n1, dtype=int), np.full(n2, 2, dtype=int)])
    return Dataset(X, u, y)


def oracle_predict(spec: SimulationModelSpec, queries) -> np.ndarray:
    """Bayes-rule labels using the true model parameters at each query index.

    Equal-covariance models use the linear rule through the true pooled
    covariance; model 6 uses the full quadratic rule.  Class priors are
    equal.  Scores at or above zero map to class 1.
    """
    if isinstance(queries, tuple) and len(queries) == 2 and np.ndim(queries[0]) == 2:
        X = np.asarray(queries[0], dtype=float)
        u = np.asarray(queries[1], dtype=float)
    else:
        pairs = list(queries)
        X = np.asarray([np.asarray(x, dtype=float) for x, _ in pairs])
        u = np.asarray([float(uu) for _, uu in pairs])
    if X.shape[1] != spec.p:
        raise ValueError(f"queries have {X.shape[1]} features, model has {spec.p}")
    labels = np.empty(len(X), dtype=int)
    for i in range(len(X)):
        ui = float(u[i])
        mu1 = spec.mean(1, ui)
        mu2 = spec.mean(2, ui)
        if spec.equal_cov:
            S = spec.cov(1, ui)
            s = float((X[i] - (mu1 + mu2) / 2.0) @ np.linalg.solve(S, mu1 - mu2))
        else:
            S1 = spec.cov(1, ui)
            S2 = spec.cov(2, ui)
            d1 = X[i] - mu1
            d2 = X[i] - mu2
            q1 = float(d1 @ np.linalg.solve(S1, d1))
            q2 = float(d2 @ np.linalg.solve(S2, d2))
            ld1 = float(np.linalg.slogdet(S1)[1])
            ld2 = float(np.linalg.slogdet(S2)[1])
            s = -0.5 * q1 + 0.5 * q2 - 0.5 * ld1 + 0.5 * ld2
        labels[i] = 1 if s >= 0 else 2
    return labels


@dataclass
class BenchmarkResult:
    """Aggregated Monte-Carlo results for one (model, p) configuration.

    ``stats[method]`` holds the mean test misclassification over the
    successful replicates, its standard error (sample standard deviation
    over replicates divided by sqrt of their count) and the mean wall time
    in seconds.  Per-method timing covers that method's complete fit and
    prediction, including its own hyperparameter search.
    """

    model_id: int
    p: int
    n1: int
    n2: int
    reps_requested: int
    reps_used: int
    seed: int
    methods: tuple[str, ...]
    stats: dict
    replicate_errors: dict
    replicate_seconds: dict
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "p": self.p,
            "n1": self.n1,
            "n2": self.n2,
            "reps_requested": self.reps_requested,
            "reps_used": self.reps_used,
            "seed": self.seed,
            "methods": list(self.methods),
            "stats": self.stats,
            "replicate_errors": self.replicate_errors,
            "replicate_seconds": self.replicate_seconds,
            "failures": self.failures,
            "config": self.config,
        }

    def csv_table(self) -> str:
        """One-row CSV in table layout: p, then one ``mean(SE)`` cell per method."""
        header = ["p", *self.methods]
        cells = [
            f"{self.stats[m]['mean']:.3f}({self.stats[m]['se']:.3f})"
            for m in self.methods
        ]
        return ",".join(header) + "\n" + ",".join([str(self.p), *cells]) + "\n"


def _canonical_methods(methods) -> tuple[str, ...]:
    lookup = {m.lower(): m for m in ALL_METHODS}
    seen = []
    for m in methods:
        key = str(m).lower()
        if key not in lookup:
            raise ValueError(f"unknown method {m!r}; choose from {ALL_METHODS}")
        if lookup[key] not in seen:
            seen.append(lookup[key])
    if not seen:
        raise ValueError("at least one method is required")
    return tuple(m for m in ALL_METHODS if m in seen)


def _replicate(
    model_id: int,
    p: int,
    n1: int,
    n2: int,
    rep: int,
    seed: int,
    methods: tuple[str, ...],
    bw_grid,
    grid: tuning.TuningGrid,
    sampler: str,
):
    spec = model_spec(model_id, p)
    ss = np.random.SeedSequence([seed, rep])
    s_train, s_test = (int(v) for v in ss.generate_state(2, dtype=np.uint64))
    train = generate(spec, n1, n2, s_train, sampler)
    test = generate(spec, n1, n2, s_test, sampler)
    queries = (test.features, test.indices)
    out = {}
    try:
        for method in methods:
            t0 = time.perf_counter()
            if method == METHOD_ORACLE:
                labels = oracle_predict(spec, queries)
            else:
                variant = "lda" if method == METHOD_LDA else "qda"
                bw = kernel.select_bandwidths(train, bw_grid)
                report = tuning.cv_select(train, bw, grid, variant)
                hp = classifier.Hyperparameters(
                    bandwidths=bw,
                    rho=report.chosen_rho,
                    K=report.chosen_K,
                    variant=variant,
                )
                labels = classifier.predict(train, queries, hp)
            err = float(np.mean(labels != test.labels))
            out[method] = (err, time.perf_counter() - t0)
    except (DspcaError, np.linalg.LinAlgError) as e:
        return ("fail", rep, f"{type(e).__name__}: {e}")
    return ("ok", rep, out)


def run_benchmark(
    model_id: int,
    p: int,
    reps: int,
    n1: int = 100,
    n2: int = 100,
    methods=ALL_METHODS,
    seed: int = 0,
    bw_grid=None,
    tuning_grid: tuning.TuningGrid | None = None,
    sampler: str = "auto",
    n_jobs: int = 1,
) -> BenchmarkResult:
    """Monte-Carlo benchmark of the tuned classifier against the oracle.

    Each replicate draws fresh train and test sets of ``n1 + n2`` rows from
    its own seed stream derived from ``(seed, replicate)``, so results do
    not depend on scheduling or on ``n_jobs``.  Replicates that fail
    numerically are dropped with a warning as long as they stay under 5%
    of the total; otherwise the benchmark aborts.
    """
    if reps < 2:
        raise ValueError(f"reps must be at least 2, got {reps}")
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    methods = _canonical_methods(methods)
    grid = tuning_grid if tuning_grid is not None else tuning.default_grid()
    if bw_grid is not None:
        bw_grid = [float(h) for h in bw_grid]

    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_replicate)(
            model_id, p, n1, n2, r, seed, methods, bw_grid, grid, sampler
        )
        for r in range(reps)
    )

    errors = {m: [] for m in methods}
    seconds = {m: [] for m in methods}
    failures = []
    for status, rep, payload in outcomes:
        if status == "fail":
            failures.append({"replicate": rep, "error": payload})
            continue
        for m in methods:
            err, sec = payload[m]
            errors[m].append(err)
            seconds[m].append(sec)

    if len(failures) / reps >= 0.05:
        raise BenchmarkError(
            f"{len(failures)} of {reps} replicates failed: {failures[:3]}..."
        )
    if failures:
        warnings.warn(
            f"{len(failures)} of {reps} replicates failed and were excluded",
            stacklevel=2,
        )

    used = reps - len(failures)
    stats = {}
    for m in methods:
        arr = np.asarray(errors[m])
        stats[m] = {
            "mean": float(arr.mean()),
            "se": float(arr.std(ddof=1) / math.sqrt(len(arr))),
            "mean_seconds": float(np.mean(seconds[m])),
        }
    config = {
        "model_id": model_id,
        "p": p,
        "n1": n1,
        "n2": n2,
        "reps": reps,
        "seed": seed,
        "methods": list(methods),
        "bw_grid": bw_grid,
        "tuning": {
            "rhos": list(grid.rhos),
            "k_max": grid.k_max,
            "folds": grid.folds,
            "seed": grid.seed,
        },
        "sampler": sampler,
    }
    return BenchmarkResult(
        model_id=model_id,
        p=p,
        n1=n1,
        n2=n2,
        reps_requested=reps,
        reps_used=used,
        seed=seed,
        methods=methods,
        stats=stats,
        replicate_errors={m: errors[m] for m in methods},
        replicate_seconds={m: seconds[m] for m in methods},
        failures=failures,
        config=config,
    )
