import json
import math

import numpy as np
import pytest

from dspca.dataset import Dataset
from dspca.errors import TuningError
from dspca.kernel import Bandwidths
from dspca.tuning import (
    CvReport,
    TuningGrid,
    assign_folds,
    cv_select,
    default_grid,
    select_cell,
)


def _separable_ds(rng, n1=15, n2=15, p=6, shift=3.0):
    n = n1 + n2
    X = rng.normal(size=(n, p))
    X[:n1, 0] += shift
    return Dataset(X, rng.uniform(size=n), [1] * n1 + [2] * n2)


class TestTuningGrid:
    def test_default_grid_values(self):
        g = default_grid()
        assert len(g.rhos) == 8
        for i, r in enumerate(range(-1, 7)):
            assert g.rhos[i] == pytest.approx(math.exp(r), rel=1e-15)
        assert g.k_max == 5
        assert g.folds == 5
        assert g.seed == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            TuningGrid(rhos=())
        with pytest.raises(ValueError):
            TuningGrid(rhos=(1.0, 0.5))
        with pytest.raises(ValueError):
            TuningGrid(rhos=(-1.0, 1.0))
        with pytest.raises(ValueError):
            TuningGrid(rhos=(1.0,), k_max=0)
        with pytest.raises(ValueError):
            TuningGrid(rhos=(1.0,), folds=1)


class TestAssignFolds:
    def test_partition_and_balance(self):
        rng = np.random.default_rng(0)
        ds = _separable_ds(rng, n1=13, n2=17)
        fold_id = assign_folds(ds, folds=5, seed=3)
        assert fold_id.shape == (30,)
        assert set(fold_id) == set(range(5))
        for label in (1, 2):
            rows = ds.class_rows(label)
            counts = np.bincount(fold_id[rows], minlength=5)
            assert counts.max() - counts.min() <= 1

    def test_deterministic_in_seed(self):
        rng = np.random.default_rng(1)
        ds = _separable_ds(rng)
        a = assign_folds(ds, folds=5, seed=7)
        b = assign_folds(ds, folds=5, seed=7)
        c = assign_folds(ds, folds=5, seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_class_smaller_than_folds(self):
        ds = Dataset(
            np.random.default_rng(2).normal(size=(6, 2)),
            np.linspace(0.1, 0.9, 6),
            [1, 1, 1, 1, 2, 2],
        )
        with pytest.raises(ValueError):
            assign_folds(ds, folds=3, seed=0)


class TestSelectCell:
    def test_unique_minimum(self):
        table = np.array([[0.4, 0.3], [0.2, 0.5]])
        assert select_cell(table, (1.0, 2.0)) == (2.0, 1)

    def test_tie_prefers_smaller_k(self):
        table = np.array([[0.2, 0.1], [0.1, 0.3]])
        assert select_cell(table, (1.0, 2.0)) == (2.0, 1)

    def test_tie_prefers_smaller_rho_after_k(self):
        table = np.array([[0.1, 0.5], [0.1, 0.5]])
        assert select_cell(table, (1.0, 2.0)) == (1.0, 1)

    def test_nan_cells_never_selected(self):
        table = np.array([[np.nan, 0.2], [np.nan, 0.4]])
        assert select_cell(table, (1.0, 2.0)) == (1.0, 2)

    def test_all_nan_raises(self):
        with pytest.raises(TuningError):
            select_cell(np.full((2, 2), np.nan), (1.0, 2.0))


class TestCvSelect:
    def _grid(self, **kw):
        defaults = dict(rhos=(1.0, math.e), k_max=2, folds=3, seed=0)
        defaults.update(kw)
        return TuningGrid(**defaults)

    def test_report_contents(self):
        rng = np.random.default_rng(3)
        ds = _separable_ds(rng)
        grid = self._grid()
        rep = cv_select(ds, Bandwidths.uniform(0.5), grid, variant="lda")
        assert isinstance(rep, CvReport)
        assert rep.error_table.shape == (2, 2)
        assert rep.chosen_rho in grid.rhos
        assert 1 <= rep.chosen_K <= grid.k_max
        assert rep.variant == "lda"
        finite = rep.error_table[np.isfinite(rep.error_table)]
        assert np.all(finite >= 0) and np.all(finite <= 1)
        i = grid.rhos.index(rep.chosen_rho)
        assert rep.error_table[i, rep.chosen_K - 1] == np.nanmin(rep.error_table)

    def test_separable_data_scores_well(self):
        rng = np.random.default_rng(4)
        ds = _separable_ds(rng, shift=6.0)
        rep = cv_select(ds, Bandwidths.uniform(0.8), self._grid(), variant="lda")
        assert np.nanmin(rep.error_table) <= 0.1

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        ds = _separable_ds(rng)
        bw = Bandwidths.uniform(0.5)
        a = cv_select(ds, bw, self._grid(), variant="qda")
        b = cv_select(ds, bw, self._grid(), variant="qda")
        assert np.array_equal(a.error_table, b.error_table, equal_nan=True)
        assert (a.chosen_rho, a.chosen_K) == (b.chosen_rho, b.chosen_K)

    def test_seed_changes_folds(self):
        rng = np.random.default_rng(6)
        ds = _separable_ds(rng, shift=0.5)
        bw = Bandwidths.uniform(0.5)
        a = cv_select(ds, bw, self._grid(seed=0), variant="lda")
        b = cv_select(ds, bw, self._grid(seed=1), variant="lda")
        assert not np.array_equal(a.error_table, b.error_table, equal_nan=True)

    def test_rank_one_data_disables_higher_k(self):
        # Feature matrix has rank one and p exceeds every fold-complement
        # size, so the low-rank route caps the usable dimension at one:
        # all K >= 2 cells must be inadmissible.
        rng = np.random.default_rng(7)
        p, n = 30, 18
        v = rng.normal(size=p)
        t = np.concatenate([rng.uniform(1, 2, 9), rng.uniform(-2, -1, 9)])
        ds = Dataset(np.outer(t, v), rng.uniform(size=n), [1] * 9 + [2] * 9)
        rep = cv_select(ds, Bandwidths.uniform(0.8), self._grid(), variant="lda")
        assert np.isnan(rep.error_table[:, 1]).all()
        assert np.isfinite(rep.error_table[:, 0]).all()
        assert rep.chosen_K == 1

    def test_constant_features_make_everything_inadmissible(self):
        # Zero covariance and zero mean gap leave nothing to project on.
        rng = np.random.default_rng(8)
        p, n = 30, 18
        ds = Dataset(np.ones((n, p)), rng.uniform(size=n), [1] * 9 + [2] * 9)
        with pytest.raises(TuningError):
            cv_select(ds, Bandwidths.uniform(0.8), self._grid(), variant="lda")

    def test_report_json_round_trip(self):
        rng = np.random.default_rng(9)
        ds = _separable_ds(rng)
        rep = cv_select(ds, Bandwidths.uniform(0.5), self._grid(), variant="lda")
        d = json.loads(rep.to_json())
        assert d["chosen_rho"] == rep.chosen_rho
        assert d["chosen_K"] == rep.chosen_K
        got = np.array(
            [[np.nan if v is None else v for v in row] for row in d["error_table"]]
        )
        assert np.array_equal(got, rep.error_table, equal_nan=True)
