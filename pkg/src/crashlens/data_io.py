"""CSV ingestion of price histories and export of fits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from .fitting import FitResult

SIG_DIGITS = 12
FIT_COLUMNS = ("time_index", "date_label", "observed_log_price", "fitted_log_price", "residual")


class CsvFormatError(ValueError):
    """Malformed or unusable input file."""


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Log-price observations on a trading-day index.

    ``times`` are positions in the analysis window (0, 1, 2, ... for ingested data;
    simulators may use a finer grid). ``labels`` are optional date strings.
    """

    times: np.ndarray
    log_prices: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        y = np.asarray(self.log_prices, dtype=float)
        if times.ndim != 1 or times.shape != y.shape:
            raise ValueError("times and log_prices must be 1-d with equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("log_prices must be finite")
        if self.labels is not None and len(self.labels) != len(times):
            raise ValueError("labels must match times in length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "log_prices", y)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def from_log_prices(cls, log_prices: Sequence[float], labels=None) -> "PriceSeries":
        y = np.asarray(log_prices, dtype=float)
        return cls(np.arange(len(y), dtype=float), y, labels)

    def label(self, i: int) -> str:
        return "" if self.labels is None else self.labels[i]


def _fmt(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def _parse_date(text: str) -> datetime:
    return datetime.fromisoformat(text.strip())


def ingest_csv(
    path,
    date_column: str = "date",
    price_column: str = "close",
    start: Optional[str] = None,
    end: Optional[str] = None,
) -> PriceSeries:
    """Read a dated price CSV into a log-price series.

    Rows are sorted by date and restricted to ``[start, end]`` (inclusive, either
    bound optional). The trading-day index is the row position inside that
    window, so weekends and holidays simply do not exist.

    Raises:
        CsvFormatError: missing columns, unparseable dates or prices, duplicate
            dates, non-positive prices inside the window, or an empty window.
    """
    lo = _parse_date(start) if start else None
    hi = _parse_date(end) if end else None
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in (date_column, price_column):
            if col not in fields:
                raise CsvFormatError(f"{path}: missing column {col!r} (have {fields})")
        # header is line 1
        for line_no, row in enumerate(reader, start=2):
            raw_date = (row.get(date_column) or "").strip()
            try:
                when = _parse_date(raw_date)
            except ValueError:
                raise CsvFormatError(f"{path}: row {line_no}: unparseable date {raw_date!r}") from None
            if (lo is not None and when < lo) or (hi is not None and when > hi):
                continue
            raw_price = (row.get(price_column) or "").strip()
            try:
                price = float(raw_price)
            except ValueError:
                raise CsvFormatError(f"{path}: row {line_no}: unparseable price {raw_price!r}") from None
            if not (price > 0 and math.isfinite(price)):
                raise CsvFormatError(f"{path}: row {line_no}: price must be positive and finite, got {raw_price!r}")
            rows.append((when, line_no, raw_date, price))

    if not rows:
        raise CsvFormatError(f"{path}: no rows inside the requested window")
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if prev[0] == cur[0]:
            raise CsvFormatError(f"{path}: rows {prev[1]} and {cur[1]} share the date {cur[2]!r}")
    labels = tuple(r[2] for r in rows)
    return PriceSeries.from_log_prices(np.log([r[3] for r in rows]), labels)


def export_series(series: PriceSeries, path, date_column: str = "date", price_column: str = "close") -> None:
    """Write ``series`` as a dated price CSV readable by :func:`ingest_csv`."""
    if series.labels is None:
        raise ValueError("series has no date labels; cannot write a dated price file")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([date_column, price_column])
        for label, y in zip(series.labels, series.log_prices):
            writer.writerow([label, _fmt(math.exp(y))])


def write_columns(path, header: Sequence[str], columns: Sequence[Sequence]) -> None:
    """Write parallel columns as CSV; floats use 12 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _index_str(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else _fmt(t)


def export_fit(series: PriceSeries, result: "FitResult", path) -> Path:
    """Write the observed/fitted/residual table to ``path`` and a JSON sidecar.

    The sidecar lands next to the CSV with a ``.json`` suffix; its path is returned.
    """
    path = Path(path)
    fitted = series.log_prices - result.residuals
    write_columns(
        path,
        FIT_COLUMNS,
        [
            [_index_str(t) for t in series.times],
            [series.label(i) for i in range(len(series))],
            [float(v) for v in series.log_prices],
            [float(v) for v in fitted],
            [float(v) for v in result.residuals],
        ],
    )
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sidecar


def read_fit_table(path) -> dict:
    """Load an :func:`export_fit` CSV back into numpy columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {"date_label": [r["date_label"] for r in rows]}
    for col in ("time_index", "observed_log_price", "fitted_log_price", "residual"):
        out[col] = np.array([float(r[col]) for r in rows])
    return out
