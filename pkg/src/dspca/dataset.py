"""Labeled samples carrying a scalar index: CSV ingestion, screening, splitting.

A dataset row is an observation ``(x, u, y)``: a feature vector ``x`` of
fixed length ``p``, a finite scalar index ``u`` (age, tumor size, time, ...)
and a class label ``y`` in ``{1, 2}``.  All estimators in this package
condition on the index, so the dataset keeps it as a first-class column
rather than as just another feature.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    CsvFormatError,
    CsvParseError,
    DegenerateIndexError,
    SchemaError,
    SplitError,
)

LABELS = (1, 2)


@dataclass(frozen=True)
class Observation:
    """One labeled row: feature vector, scalar index, class label."""

    features: np.ndarray
    index: float
    label: int


@dataclass(frozen=True)
class IndexMap:
    """Affine map ``u -> (u - lo) / (hi - lo)`` fitted on training indices."""

    lo: float
    hi: float

    def apply(self, u):
        return (np.asarray(u, dtype=float) - self.lo) / (self.hi - self.lo)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "IndexMap":
        return cls(lo=float(d["lo"]), hi=float(d["hi"]))


class Dataset:
    """Immutable collection of observations with a common feature length.

    Parameters
    ----------
    features : array-like, shape (n, p)
        Feature matrix; must be finite.
    indices : array-like, shape (n,)
        Scalar index per observation; must be finite.
    labels : array-like, shape (n,)
        Class labels, each 1 or 2.
    feature_names : sequence of str, optional
        Column names preserved through screening and serialization.
    index_map : IndexMap, optional
        Affine normalization applied to produce ``indices``, if any.
    """

    def __init__(
        self,
        features,
        indices,
        labels,
        feature_names: Sequence[str] | None = None,
        index_map: IndexMap | None = None,
    ):
        X = np.array(features, dtype=float)
        u = np.array(indices, dtype=float)
        y = np.array(labels, dtype=int)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {X.shape}")
        n, p = X.shape
        if n == 0 or p == 0:
            raise ValueError("dataset must contain at least one row and one feature")
        if u.shape != (n,) or y.shape != (n,):
            raise ValueError("indices and labels must have one entry per row")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all(np.isfinite(u)):
            raise ValueError("indices must be finite")
        bad = ~np.isin(y, LABELS)
        if bad.any():
            raise ValueError(f"labels must be 1 or 2; offending rows {np.flatnonzero(bad).tolist()}")
        if feature_names is not None:
            feature_names = tuple(str(c) for c in feature_names)
            if len(feature_names) != p:
                raise ValueError("feature_names length must equal feature count")
        X.setflags(write=False)
        u.setflags(write=False)
        y.setflags(write=False)
        self._X = X
        self._u = u
        self._y = y
        self.feature_names = feature_names
        self.index_map = index_map

    @property
    def features(self) -> np.ndarray:
        return self._X

    @property
    def indices(self) -> np.ndarray:
        return self._u

    @property
    def labels(self) -> np.ndarray:
        return self._y

    @property
    def n(self) -> int:
        return self._X.shape[0]

    @property
    def p(self) -> int:
        return self._X.shape[1]

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self._y == 1))

    @property
    def n2(self) -> int:
        return int(np.count_nonzero(self._y == 2))

    @property
    def index_range(self) -> tuple[float, float]:
        return float(self._u.min()), float(self._u.max())

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(self._X[i], float(self._u[i]), int(self._y[i]))
            for i in range(self.n)
        ]

    def class_rows(self, label: int) -> np.ndarray:
        """Row positions of the given class, in dataset order."""
        if label not in LABELS:
            raise ValueError(f"label must be 1 or 2, got {label}")
        return np.flatnonzero(self._y == label)

    def class_features(self, label: int) -> np.ndarray:
        return self._X[self.class_rows(label)]

    def class_indices(self, label: int) -> np.ndarray:
        return self._u[self.class_rows(label)]

    def subset(self, rows) -> "Dataset":
        """New dataset keeping the given rows (dataset order preserved)."""
        rows = np.asarray(rows)
        return Dataset(
            self._X[rows],
            self._u[rows],
            self._y[rows],
            feature_names=self.feature_names,
            index_map=self.index_map,
        )

    def with_features(self, columns: Sequence[int]) -> "Dataset":
        """New dataset keeping only the given feature columns, in given order."""
        cols = list(columns)
        names = None
        if self.feature_names is not None:
            names = tuple(self.feature_names[j] for j in cols)
        return Dataset(
            self._X[:, cols],
            self._u,
            self._y,
            feature_names=names,
            index_map=self.index_map,
        )

    def require_both_classes(self) -> None:
        """Raise unless both classes are present (needed for any training use)."""
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError(
                f"training requires both classes; counts are n1={self.n1}, n2={self.n2}"
            )

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, p={self.p}, n1={self.n1}, n2={self.n2})"


def _open_source(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8")), True
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return io.StringIO(data), True
    raise TypeError(f"unsupported CSV source {type(source)!r}")


def _parse_cell(cell: str, row: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise CsvParseError(
            f"row {row}, column {column!r}: cannot parse {cell!r} as a number",
            row=row,
            column=column,
        ) from None
    if not math.isfinite(v):
        raise CsvParseError(
            f"row {row}, column {column!r}: non-finite value {cell!r}",
            row=row,
            column=column,
        )
    return v


def load_csv(
    source,
    label_col: str = "y",
    index_col: str = "u",
    feature_cols: Sequence[str] | None = None,
    require_label: bool = True,
):
    """Read a headed CSV into a :class:`Dataset`.

    The header must contain ``index_col`` and, unless ``require_label`` is
    False, ``label_col``.  Every remaining column (or the explicit
    ``feature_cols``) is a feature; file order is preserved.  Labels must be
    1 or 2.  Row numbers in error messages count data rows from 1.

    With ``require_label=False`` and no label column present, returns an
    unlabeled triple ``(features, indices, None)`` instead of a Dataset.
    """
    fh, _ = _open_source(source)
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file: no header row") from None
        header = [c.strip() for c in header]
        if index_col not in header:
            raise SchemaError(f"missing index column {index_col!r}")
        has_label = label_col in header
        if require_label and not has_label:
            raise SchemaError(f"missing label column {label_col!r}")
        u_pos = header.index(index_col)
        y_pos = header.index(label_col) if has_label else None
        if feature_cols is None:
            feat_pos = [
                j for j, c in enumerate(header) if j != u_pos and j != y_pos
            ]
        else:
            missing = [c for c in feature_cols if c not in header]
            if missing:
                raise SchemaError(f"missing feature columns {missing}")
            feat_pos = [header.index(c) for c in feature_cols]
        if not feat_pos:
            raise SchemaError("no feature columns")
        names = [header[j] for j in feat_pos]

        rows_X: list[list[float]] = []
        rows_u: list[float] = []
        rows_y: list[int] = []
        width = len(header)
        for i, row in enumerate(reader, start=1):
            if len(row) != width:
                raise CsvFormatError(
                    f"row {i}: expected {width} cells, found {len(row)}"
                )
            rows_u.append(_parse_cell(row[u_pos], i, index_col))
            if y_pos is not None:
                yv = _parse_cell(row[y_pos], i, label_col)
                if yv not in (1.0, 2.0):
                    raise SchemaError(f"row {i}: label must be 1 or 2, got {row[y_pos]!r}")
                rows_y.append(int(yv))
            try:
                rows_X.append([float(row[j]) for j in feat_pos])
            except ValueError:
                # Re-scan to locate the offending column for the message.
                for j in feat_pos:
                    _parse_cell(row[j], i, header[j])
                raise
            if not all(math.isfinite(v) for v in rows_X[-1]):
                for j in feat_pos:
                    _parse_cell(row[j], i, header[j])

        if not rows_X:
            raise CsvFormatError("no observations: file has a header but no data rows")

    if y_pos is None:
        return np.array(rows_X, dtype=float), np.array(rows_u, dtype=float), None
    return Dataset(rows_X, rows_u, rows_y, feature_names=names)


def save_csv(ds: Dataset, target) -> None:
    """Write a dataset as headed CSV.

    Values are formatted with 17 significant digits, so a load/save/load
    round trip reproduces every float64 exactly.
    """
    names = ds.feature_names or tuple(f"x{j + 1}" for j in range(ds.p))
    own = isinstance(target, (str, os.PathLike))
    fh = open(target, "w", newline="", encoding="utf-8") if own else target
    try:
        writer = csv.writer(fh)
        writer.writerow(["u", "y", *names])
        for i in range(ds.n):
            writer.writerow(
                [
                    format(ds.indices[i], ".17g"),
                    str(int(ds.labels[i])),
                    *(format(v, ".17g") for v in ds.features[i]),
                ]
            )
    finally:
        if own:
            fh.close()


def normalize_index(ds: Dataset) -> Dataset:
    """Rescale indices affinely onto [0, 1] and record the map on the dataset.

    The recorded :class:`IndexMap` lets callers push test indices through
    the identical transformation.  Raises :class:`DegenerateIndexError`
    when all indices coincide.
    """
    lo, hi = ds.index_range
    if hi <= lo:
        raise DegenerateIndexError(f"all index values equal {lo!r}; cannot rescale")
    m = IndexMap(lo=lo, hi=hi)
    return Dataset(
        ds.features,
        m.apply(ds.indices),
        ds.labels,
        feature_names=ds.feature_names,
        index_map=m,
    )


def t_test_screen(train: Dataset, p_keep: int) -> list[int]:
    """Rank features by the two-sample Welch statistic and keep the top ones.

    Returns 0-based feature column positions ordered by decreasing
    ``|t|``; exact ties are broken toward the lower column position.  A
    zero pooled variance yields ``inf`` when the class means differ and 0
    when they agree.
    """
    if not (1 <= p_keep <= train.p):
        raise ValueError(f"p_keep must be in [1, {train.p}], got {p_keep}")
    X1 = train.class_features(1)
    X2 = train.class_features(2)
    if len(X1) < 2 or len(X2) < 2:
        raise ValueError("t-test screening needs at least 2 observations per class")
    m1 = X1.mean(axis=0)
    m2 = X2.mean(axis=0)
    v1 = X1.var(axis=0, ddof=1)
    v2 = X2.var(axis=0, ddof=1)
    denom = np.sqrt(v1 / len(X1) + v2 / len(X2))
    diff = m1 - m2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / denom
    zero = denom == 0.0
    t[zero] = np.where(diff[zero] != 0.0, np.inf, 0.0)
    order = np.lexsort((np.arange(train.p), -np.abs(t)))
    return [int(j) for j in order[:p_keep]]


def stratified_split(
    ds: Dataset, test_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Split into (train, test), sampling each class without replacement.

    The per-class test size is ``round(test_fraction * n_c)`` (half away
    from zero).  Raises :class:`SplitError` if either class would retain
    fewer than 2 training rows.  Deterministic for a fixed seed; row order
    within each part follows the original dataset.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_rows: list[int] = []
    train_rows: list[int] = []
    for label in LABELS:
        rows = ds.class_rows(label)
        k = int(math.floor(test_fraction * len(rows) + 0.5))
        if len(rows) - k < 2:
            raise SplitError(
                f"class {label}: {len(rows)} rows minus {k} test rows leaves "
                "fewer than 2 for training"
            )
        perm = rng.permutation(len(rows))
        test_rows.extend(rows[perm[:k]].tolist())
        train_rows.extend(rows[perm[k:]].tolist())
    return ds.subset(sorted(train_rows)), ds.subset(sorted(test_rows))


def split_manifest(seed: int, test_fraction: float, train: Dataset, test: Dataset) -> dict:
    """JSON-ready record of a stratified split."""
    return {
        "seed": seed,
        "test_fraction": test_fraction,
        "train": {"n": train.n, "n1": train.n1, "n2": train.n2},
        "test": {"n": test.n, "n1": test.n1, "n2": test.n2},
    }


def screening_manifest(ds: Dataset, selected: Iterable[int], **extra) -> dict:
    """JSON-ready record of a screening: column positions plus names if known."""
    selected = [int(j) for j in selected]
    out = {"selected_columns": selected}
    if ds.feature_names is not None:
        out["selected_names"] = [ds.feature_names[j] for j in selected]
    out.update(extra)
    return out
