"""Cross-validated selection of the spike weight rho and dimension K.

Bandwidths are tuned first (see ``dspca.kernel``) and stay fixed here.
The candidate grid is rho in {e^-1, e^0, ..., e^6} crossed with
K in {1, ..., k_max}.  Folds are stratified per class; every held-out
observation is scored by a rule fitted on the fold complement at that
observation's own index.  The error of a cell is the misclassification
rate pooled over all held-out observations.  Among minimizing cells the
smallest K wins, then the smallest rho.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import classifier
from .dataset import Dataset, LABELS
from .errors import DspcaError, TuningError
from .kernel import Bandwidths


@dataclass(frozen=True)
class TuningGrid:
    """Candidate rho values (ascending, positive), maximum K, CV layout."""

    rhos: tuple[float, ...]
    k_max: int = 5
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.rhos or any(r <= 0 for r in self.rhos):
            raise ValueError("rhos must be nonempty and positive")
        if list(self.rhos) != sorted(self.rhos):
            raise ValueError("rhos must be ascending")
        if self.k_max < 1:
            raise ValueError(f"k_max must be at least 1, got {self.k_max}")
        if self.folds < 2:
            raise ValueError(f"folds must be at least 2, got {self.folds}")


def default_grid(seed: int = 0) -> TuningGrid:
    """rho in {e^r : r = -1..6}, K in {1..5}, 5 stratified folds."""
    return TuningGrid(
        rhos=tuple(math.exp(r) for r in range(-1, 7)),
        k_max=5,
        folds=5,
        seed=seed,
    )


@dataclass
class CvReport:
    """Cross-validation error surface and the selected cell.

    ``error_table[i, k]`` is the pooled held-out misclassification of
    ``(rhos[i], K=k+1)``; inadmissible cells (failed on some fold) are
    NaN and never selected.
    """

    rhos: tuple[float, ...]
    k_max: int
    folds: int
    seed: int
    variant: str
    error_table: np.ndarray
    chosen_rho: float
    chosen_K: int

    def to_dict(self) -> dict:
        table = [
            [None if math.isnan(v) else v for v in row]
            for row in self.error_table.tolist()
        ]
        return {
            "rhos": list(self.rhos),
            "k_max": self.k_max,
            "folds": self.folds,
            "seed": self.seed,
            "variant": self.variant,
            "error_table": table,
            "chosen_rho": self.chosen_rho,
            "chosen_K": self.chosen_K,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def assign_folds(ds: Dataset, folds: int, seed: int) -> np.ndarray:
    """Stratified fold ids: per-class round robin after a seeded shuffle.

    Every fold receives each class's count up to a difference of one.
    """
    if folds < 2:
        raise ValueError(f"folds must be at least 2, got {folds}")
    rng = np.random.default_rng(seed)
    fold_id = np.empty(ds.n, dtype=int)
    for label in LABELS:
        rows = ds.class_rows(label)
        if len(rows) < folds:
            raise ValueError(
                f"class {label} has {len(rows)} rows, fewer than {folds} folds"
            )
        perm = rng.permutation(len(rows))
        fold_id[rows[perm]] = np.arange(len(rows)) % folds
    return fold_id


def select_cell(error_table: np.ndarray, rhos) -> tuple[float, int]:
    """Pick (rho, K) from an error surface: minimum, then smallest K,
    then smallest rho.  NaN cells are inadmissible."""
    table = np.asarray(error_table, dtype=float)
    if np.isnan(table).all():
        raise TuningError("every (rho, K) cell was inadmissible")
    best = np.nanmin(table)
    hits = np.argwhere(table == best)
    k_min = hits[:, 1].min()
    i_min = hits[hits[:, 1] == k_min][:, 0].min()
    return float(rhos[i_min]), int(k_min) + 1


def cv_select(
    train: Dataset,
    bw: Bandwidths,
    grid: TuningGrid,
    variant: str = "lda",
    strategy: str = "auto",
) -> CvReport:
    """Cross-validate the (rho, K) grid with fixed bandwidths.

    Per held-out observation and rho, one basis is computed at ``k_max``
    and every K is evaluated on its leading columns, so the eigenwork is
    shared across the K axis.  Deterministic for a fixed grid seed.
    """
    train.require_both_classes()
    fold_id = assign_folds(train, grid.folds, grid.seed)
    R = len(grid.rhos)
    wrong = np.zeros((R, grid.k_max))
    bad = np.zeros((R, grid.k_max), dtype=bool)

    for f in range(grid.folds):
        tr = train.subset(np.flatnonzero(fold_id != f))
        held = np.flatnonzero(fold_id == f)
        for row in held:
            xq = train.features[row]
            uq = float(train.indices[row])
            yq = int(train.labels[row])
            try:
                prep = classifier.prepare_local(tr, uq, bw, strategy)
            except DspcaError:
                bad[:, :] = True
                continue
            for i, rho in enumerate(grid.rhos):
                try:
                    rules, _ = classifier.rules_from_prepared(
                        tr, prep, rho, grid.k_max, variant
                    )
                except DspcaError:
                    bad[i, :] = True
                    continue
                for k in range(grid.k_max):
                    rule = rules[k]
                    if rule is None:
                        bad[i, k] = True
                        continue
                    pred = 1 if classifier.score(rule, xq) >= 0 else 2
                    if pred != yq:
                        wrong[i, k] += 1

    with np.errstate(invalid="ignore"):
        table = np.where(bad, np.nan, wrong / train.n)
    rho, K = select_cell(table, grid.rhos)
    return CvReport(
        rhos=grid.rhos,
        k_max=grid.k_max,
        folds=grid.folds,
        seed=grid.seed,
        variant=variant,
        error_table=table,
        chosen_rho=rho,
        chosen_K=K,
    )
