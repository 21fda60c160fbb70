"""Exception types raised by the dspca package.

Everything inherits from :class:`DspcaError` so callers can catch the
package's failures with a single except clause.  The CLI maps these onto
exit codes (see ``dspca.cli``).
"""

from __future__ import annotations


class DspcaError(Exception):
    """Base class for all dspca errors."""


class CsvFormatError(DspcaError):
    """Structurally broken CSV input (ragged rows, missing header, no data)."""


class CsvParseError(DspcaError):
    """A cell could not be parsed as a finite number; reports row and column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(DspcaError):
    """Required columns missing, or a label outside {1, 2}."""


class DegenerateIndexError(DspcaError):
    """All index values identical; the affine rescale to [0, 1] is undefined."""


class SplitError(DspcaError):
    """A stratified split would leave a class with fewer than 2 training rows."""


class ShapeMismatchError(DspcaError):
    """Feature dimensions of two datasets (e.g. train and test) disagree."""


class BandwidthUnderflowError(DspcaError):
    """Kernel weight sum fell below the representable floor at a query point."""

    def __init__(self, u: float, h: float, label: int):
        super().__init__(
            f"kernel weight sum underflow at u={u!r} with h={h!r} for class {label}"
        )
        self.u = u
        self.h = h
        self.label = label


class LoocvUnderflowError(DspcaError):
    """Leave-one-out weight sum underflowed for one or more observations."""

    def __init__(self, h: float, label: int, rows: list[int]):
        super().__init__(
            f"leave-one-out weight sum underflow at h={h!r} for class {label}; "
            f"dataset rows {rows}"
        )
        self.h = h
        self.label = label
        self.rows = rows


class BandwidthSelectionError(DspcaError):
    """Every candidate bandwidth failed for some class/criterion pair."""


class RankDeficiencyError(DspcaError):
    """Factor-path decomposition has fewer usable directions than requested."""

    def __init__(self, requested: int, usable_rank: int):
        super().__init__(
            f"requested {requested} eigenvectors but usable rank is {usable_rank}"
        )
        self.requested = requested
        self.usable_rank = usable_rank


class RegularizationError(DspcaError):
    """Projected covariance stayed non-positive-definite at the maximum ridge."""


class TuningError(DspcaError):
    """No admissible (rho, K) cell survived cross-validation."""


class GenerationError(DspcaError):
    """Synthetic model construction or sampling failed."""


class BenchmarkError(DspcaError):
    """Too many replicates failed for the benchmark summary to be trustworthy."""
