"""Panel ingestion, log-returns, descriptive statistics and sample splitting."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import DataError

__all__ = [
    "TimeSeriesPanel",
    "ReturnPanel",
    "SampleSplit",
    "DescriptiveStats",
    "load_panel",
    "to_log_returns",
    "describe",
    "split",
    "cumulate_returns",
    "moments",
]

logger = logging.getLogger(__name__)


def _as_months(dates) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[M]")


def _check_monthly(dates: np.ndarray) -> None:
    steps = np.diff(dates.astype(np.int64))
    if np.any(steps <= 0):
        raise DataError("dates must be strictly increasing")
    if np.any(steps != 1):
        gap = int(np.argmax(steps != 1))
        raise DataError(
            f"dates must be consecutive months; gap between {dates[gap]} and {dates[gap + 1]}"
        )


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Dated T x K matrix of levels, one column per variable."""

    dates: np.ndarray
    names: tuple
    values: np.ndarray
    rejected_rows: tuple = field(default=(), compare=False)

    def __post_init__(self):
        dates = _as_months(self.dates)
        values = np.array(self.values, dtype=float)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if values.ndim != 2 or values.shape != (len(dates), len(self.names)):
            raise DataError("values must be a T x K matrix matching dates and names")
        if values.shape[0] < 2:
            raise DataError("fewer than 2 usable rows")
        if values.shape[1] < 2:
            raise DataError("panel needs at least 2 variables")
        if not np.all(np.isfinite(values)):
            raise DataError("panel contains missing or non-finite cells")
        _check_monthly(dates)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def reorder(self, ordering: Sequence[str]) -> "TimeSeriesPanel":
        idx = [self.names.index(n) for n in ordering]
        return TimeSeriesPanel(self.dates, [self.names[i] for i in idx], self.values[:, idx])


@dataclass(frozen=True)
class ReturnPanel:
    """Dated (T-1) x K matrix of log-returns."""

    dates: np.ndarray
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        dates = _as_months(self.dates)
        values = np.array(self.values, dtype=float)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if values.ndim != 2 or values.shape != (len(dates), len(self.names)):
            raise DataError("values must be a matrix matching dates and names")
        if not np.all(np.isfinite(values)):
            raise DataError("returns must be finite")
        if len(dates) > 1:
            _check_monthly(dates)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int = 0, stop: int | None = None) -> "ReturnPanel":
        sl = slice(start, stop)
        return ReturnPanel(self.dates[sl], self.names, self.values[sl])

    def reorder(self, ordering: Sequence[str]) -> "ReturnPanel":
        idx = [self.names.index(n) for n in ordering]
        return ReturnPanel(self.dates, [self.names[i] for i in idx], self.values[:, idx])


@dataclass(frozen=True)
class SampleSplit:
    """Rows ``[0, boundary)`` are in-sample, ``[boundary, n_rows)`` out-of-sample."""

    boundary: int
    n_rows: int

    def __post_init__(self):
        if not 0 < self.boundary < self.n_rows:
            raise DataError("split boundary must leave both samples non-empty")

    @property
    def in_sample(self) -> range:
        return range(0, self.boundary)

    @property
    def out_of_sample(self) -> range:
        return range(self.boundary, self.n_rows)


@dataclass(frozen=True)
class DescriptiveStats:
    names: tuple
    mean: np.ndarray
    std: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    min: np.ndarray
    max: np.ndarray

    COLUMNS = ("mean", "std", "skewness", "kurtosis", "min", "max")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {c: getattr(self, c) for c in self.COLUMNS}, index=pd.Index(self.names, name="series")
        )

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("series",) + self.COLUMNS)
        for i, name in enumerate(self.names):
            writer.writerow([name] + [repr(float(getattr(self, c)[i])) for c in self.COLUMNS])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _parse_dates(raw: pd.Series) -> np.ndarray:
    text = raw.astype(str).str.strip()
    ok = text.str.fullmatch(r"\d{4}-\d{2}(-\d{2})?")
    if not ok.all():
        bad = text[~ok].iloc[0]
        raise DataError(f"unparseable date {bad!r}; expected YYYY-MM or YYYY-MM-DD")
    parsed = pd.to_datetime(text, format="mixed", errors="coerce")
    if parsed.isna().any():
        raise DataError(f"unparseable date {text[parsed.isna()].iloc[0]!r}")
    return parsed.values.astype("datetime64[M]")


def load_panel(
    path: Union[str, Path],
    date_column: str = "date",
    on_missing: str = "raise",
) -> TimeSeriesPanel:
    """Read a dated CSV panel.

    Parameters
    ----------
    path : str or Path
        CSV with a header row ``date,<name1>,...,<nameK>``.
    date_column : str
        Name of the date column (``YYYY-MM`` or ``YYYY-MM-DD``; days are
        truncated to the first of the month).
    on_missing : {"raise", "drop"}
        Rows with an empty cell are never imputed. ``"raise"`` rejects the
        file and lists the offending rows; ``"drop"`` removes them, which
        only succeeds when the remaining months stay contiguous (ragged
        series starts or ends).
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if date_column not in frame.columns:
        raise DataError(f"date column {date_column!r} not found")
    names = [c for c in frame.columns if c != date_column]
    if not names:
        raise DataError("no value columns")

    cells = frame[names].apply(lambda s: s.str.strip())
    missing = (cells == "") | cells.isin(["NA", "NaN", "nan", "."])
    numeric = cells.mask(missing).apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & ~missing
    if bad.any().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DataError(
            f"non-numeric cell {cells.iat[row, col]!r} in column {names[col]!r} (row {row + 2})"
        )

    dates = _parse_dates(frame[date_column])
    if len(np.unique(dates)) != len(dates):
        uniq, counts = np.unique(dates, return_counts=True)
        raise DataError(f"duplicate date {uniq[counts > 1][0]}")

    order = np.argsort(dates, kind="stable")
    dates = dates[order]
    values = numeric.to_numpy(dtype=float)[order]
    missing_rows = missing.to_numpy()[order].any(axis=1)
    rejected = tuple(str(d) for d in dates[missing_rows])
    if rejected:
        if on_missing == "raise":
            raise DataError(f"rows with missing values: {', '.join(rejected)}")
        if on_missing != "drop":
            raise ValueError("on_missing must be 'raise' or 'drop'")
        logger.warning("dropping %d rows with missing values: %s", len(rejected), rejected)
        dates, values = dates[~missing_rows], values[~missing_rows]
    if len(dates) < 2:
        raise DataError("fewer than 2 usable rows")
    return TimeSeriesPanel(dates, names, values, rejected_rows=rejected)


def to_log_returns(panel: TimeSeriesPanel) -> ReturnPanel:
    levels = panel.values
    if np.any(levels <= 0):
        i, k = np.argwhere(levels <= 0)[0]
        raise DataError(
            f"non-positive level {levels[i, k]} for {panel.names[k]} at {panel.dates[i]}; log undefined"
        )
    logs = np.log(levels)
    return ReturnPanel(panel.dates[1:], panel.names, np.diff(logs, axis=0))


def cumulate_returns(first_level: np.ndarray, returns: ReturnPanel) -> np.ndarray:
    """Rebuild levels from a starting row and log-returns."""
    path = np.vstack([np.zeros(returns.K), np.cumsum(returns.values, axis=0)])
    return np.asarray(first_level, dtype=float) * np.exp(path)


def moments(x: np.ndarray):
    """Moment-ratio skewness and excess kurtosis per column (divisor n).

    These are the conventions of the Jarque-Bera statistic.
    """
    x = np.asarray(x, dtype=float)
    d = x - x.mean(axis=0)
    m2 = np.mean(d**2, axis=0)
    skew = np.mean(d**3, axis=0) / m2**1.5
    kurt = np.mean(d**4, axis=0) / m2**2 - 3.0
    return skew, kurt


def describe(panel: Union[TimeSeriesPanel, ReturnPanel]) -> DescriptiveStats:
    """Mean, sample std (ddof=1), skewness, excess kurtosis, min and max."""
    x = panel.values
    if x.shape[0] < 4:
        raise DataError("describe needs at least 4 observations")
    with np.errstate(invalid="ignore", divide="ignore"):
        skew, kurt = moments(x)
    return DescriptiveStats(
        names=panel.names,
        mean=x.mean(axis=0),
        std=x.std(axis=0, ddof=1),
        skewness=skew,
        kurtosis=kurt,
        min=x.min(axis=0),
        max=x.max(axis=0),
    )


def split(panel: ReturnPanel, boundary_date) -> SampleSplit:
    """Split at ``boundary_date``, the first out-of-sample month."""
    month = np.datetime64(str(boundary_date)[:7], "M")
    dates = panel.dates
    if not dates[0] < month <= dates[-1]:
        raise DataError(
            f"boundary {month} must lie after {dates[0]} and no later than {dates[-1]}"
        )
    boundary = int(np.searchsorted(dates, month, side="left"))
    return SampleSplit(boundary, panel.T)
