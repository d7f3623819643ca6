"""Time-indexed series and panels.

Timestamps are UTC ``numpy.datetime64`` values at minute resolution.  Every
cell carries an explicit ``present`` flag; the value slot of a missing cell
holds NaN only so that accidental arithmetic on it is loud.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateName, EmptySeries, OutOfRange

MINUTE = "datetime64[m]"
_ISO_FMT = "%Y-%m-%dT%H:%M"


def timestamp(value) -> np.datetime64:
    """Coerce a string/datetime/datetime64 to a minute-resolution timestamp."""
    return np.datetime64(value, "m")


def _as_times(times) -> np.ndarray:
    arr = np.asarray(times)
    if arr.dtype.kind != "M":
        arr = np.array([np.datetime64(t, "m") for t in arr], dtype=MINUTE)
    return arr.astype(MINUTE)


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def format_timestamp(t: np.datetime64) -> str:
    return str(np.datetime64(t, "m"))[:16]


@dataclass(frozen=True, eq=False)
class Series:
    """A named, strictly increasing sequence of (timestamp, optional value)."""

    name: str
    times: np.ndarray
    values: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        times = _as_times(self.times)
        values = np.asarray(self.values, dtype=float).copy()
        present = np.asarray(self.present, dtype=bool).copy()
        if not (times.shape == values.shape == present.shape) or times.ndim != 1:
            raise ValueError("times, values and present must be equal-length 1-D arrays")
        if times.size > 1 and not np.all(times[1:] > times[:-1]):
            raise ValueError(f"series {self.name!r}: timestamps must be strictly increasing")
        if np.any(present & ~np.isfinite(values)):
            raise ValueError(f"series {self.name!r}: present cells must be finite")
        values[~present] = np.nan
        _freeze(times, values, present)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "present", present)

    @classmethod
    def from_points(cls, name: str, points: Iterable[tuple]) -> "Series":
        """Build from ``(timestamp, value_or_None)`` pairs."""
        points = list(points)
        times = [timestamp(t) for t, _ in points]
        present = [v is not None and not (isinstance(v, float) and np.isnan(v)) for _, v in points]
        values = [float(v) if p else np.nan for (_, v), p in zip(points, present)]
        return cls(name, np.array(times, dtype=MINUTE), np.array(values), np.array(present, dtype=bool))

    @classmethod
    def from_values(cls, name: str, values, start="2000-01-01", freq="D") -> "Series":
        """Regular series from an array with NaN marking missing cells."""
        values = np.asarray(values, dtype=float)
        step = np.timedelta64(1, freq).astype("timedelta64[m]")
        times = np.datetime64(start, "m") + step * np.arange(values.size)
        return cls(name, times, values, ~np.isnan(values))

    def __len__(self):
        return self.times.size

    @property
    def n_missing(self) -> int:
        return int((~self.present).sum())

    @property
    def complete(self) -> bool:
        return bool(self.present.all())

    def points(self) -> list:
        return [(t, float(v) if p else None) for t, v, p in zip(self.times, self.values, self.present)]

    def with_values(self, values, present=None, name=None) -> "Series":
        values = np.asarray(values, dtype=float)
        if present is None:
            present = ~np.isnan(values)
        return Series(self.name if name is None else name, self.times, values, present)

    def __repr__(self):
        return f"Series({self.name!r}, n={len(self)}, missing={self.n_missing})"


@dataclass(frozen=True, eq=False)
class Panel:
    """Aligned columns over a shared, strictly increasing time index."""

    index: np.ndarray
    names: tuple
    values: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        index = _as_times(self.index)
        names = tuple(str(n) for n in self.names)
        values = np.asarray(self.values, dtype=float).reshape(index.size, len(names)).copy()
        present = np.asarray(self.present, dtype=bool).reshape(values.shape).copy()
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DuplicateName(f"duplicate column names: {dupes}")
        if index.size > 1 and not np.all(index[1:] > index[:-1]):
            raise ValueError("panel index must be strictly increasing")
        if np.any(present & ~np.isfinite(values)):
            raise ValueError("present cells must be finite")
        values[~present] = np.nan
        _freeze(index, values, present)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "present", present)

    @classmethod
    def from_arrays(cls, index, columns: dict) -> "Panel":
        """Columns given as ``{name: array}`` with NaN for missing."""
        names = tuple(columns)
        index = _as_times(index)
        values = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names \
            else np.empty((index.size, 0))
        return cls(index, names, values, ~np.isnan(values))

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.index.size

    def col(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def column(self, name: str) -> Series:
        j = self.col(name)
        return Series(name, self.index, self.values[:, j], self.present[:, j])

    def columns(self) -> list:
        return [self.column(n) for n in self.names]

    def select(self, names: Sequence[str]) -> "Panel":
        idx = [self.col(n) for n in names]
        return Panel(self.index, tuple(names), self.values[:, idx], self.present[:, idx])

    def rows(self, mask_or_slice) -> "Panel":
        return Panel(self.index[mask_or_slice], self.names,
                     self.values[mask_or_slice], self.present[mask_or_slice])

    def with_values(self, values, present=None) -> "Panel":
        values = np.asarray(values, dtype=float)
        if present is None:
            present = ~np.isnan(values)
        return Panel(self.index, self.names, values, present)

    @property
    def complete(self) -> bool:
        return bool(self.present.all())

    def equals(self, other: "Panel") -> bool:
        """Exact equality, including missing-cell layout."""
        return (self.names == other.names
                and np.array_equal(self.index, other.index)
                and np.array_equal(self.present, other.present)
                and np.array_equal(self.values[self.present], other.values[other.present]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("timestamp",) + self.names)
        for i, t in enumerate(self.index):
            row = [format_timestamp(t)]
            for v, p in zip(self.values[i], self.present[i]):
                row.append(repr(float(v)) if p else "")
            writer.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Panel":
        """Read the CSV layout written by :meth:`to_csv` (path or text)."""
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, newline="") as fh:
                text = fh.read()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if not header or header[0] != "timestamp":
            raise ValueError("panel CSV must start with a 'timestamp' column")
        times, rows = [], []
        for row in reader:
            if not row:
                continue
            times.append(np.datetime64(row[0], "m"))
            rows.append([float(x) if x != "" else np.nan for x in row[1:]])
        values = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
        return cls(np.array(times, dtype=MINUTE), tuple(header[1:]), values, ~np.isnan(values))

    def __repr__(self):
        return f"Panel(rows={len(self)}, columns={list(self.names)})"


@dataclass(frozen=True)
class TimeSplit:
    boundary: np.datetime64

    def __post_init__(self):
        object.__setattr__(self, "boundary", timestamp(self.boundary))


def _day_floor(times):
    return times.astype("datetime64[D]")


def aggregate_daily(s: Series, min_count: int = 1) -> Series:
    """Daily means of present values; one point per calendar day in the span.

    A day is missing when it has fewer than ``min_count`` present values.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if len(s) == 0:
        raise EmptySeries(f"series {s.name!r} is empty")
    days = _day_floor(s.times)
    span = np.arange(days[0], days[-1] + np.timedelta64(1, "D"), dtype="datetime64[D]")
    slot = (days - span[0]).astype(int)
    sums = np.bincount(slot[s.present], weights=s.values[s.present], minlength=span.size)
    counts = np.bincount(slot[s.present], minlength=span.size)
    ok = counts >= min_count
    means = np.full(span.size, np.nan)
    means[ok] = sums[ok] / counts[ok]
    return Series(s.name, span.astype(MINUTE), means, ok)


def aggregate_monthly(s: Series) -> Series:
    """Calendar-month means of present daily values."""
    if len(s) == 0:
        raise EmptySeries(f"series {s.name!r} is empty")
    months = s.times.astype("datetime64[M]")
    span = np.arange(months[0], months[-1] + np.timedelta64(1, "M"), dtype="datetime64[M]")
    slot = (months - span[0]).astype(int)
    sums = np.bincount(slot[s.present], weights=s.values[s.present], minlength=span.size)
    counts = np.bincount(slot[s.present], minlength=span.size)
    ok = counts > 0
    means = np.full(span.size, np.nan)
    means[ok] = sums[ok] / counts[ok]
    return Series(s.name, span.astype(MINUTE), means, ok)


def align(series: Sequence[Series]) -> Panel:
    """Outer-join series on their timestamps."""
    series = list(series)
    if not series:
        raise ValueError("align needs at least one series")
    names = [s.name for s in series]
    if len(set(names)) != len(names):
        raise DuplicateName(f"duplicate series names: {sorted({n for n in names if names.count(n) > 1})}")
    index = np.unique(np.concatenate([s.times for s in series]))
    values = np.full((index.size, len(series)), np.nan)
    present = np.zeros(values.shape, dtype=bool)
    for j, s in enumerate(series):
        pos = np.searchsorted(index, s.times)
        values[pos, j] = s.values
        present[pos, j] = s.present
    return Panel(index, tuple(names), values, present)


def split_at(p: Panel, t: TimeSplit) -> tuple:
    """Rows strictly before the boundary, and the rest."""
    if len(p) == 0 or t.boundary < p.index[0] or t.boundary > p.index[-1]:
        raise OutOfRange(f"split boundary {t.boundary} outside panel span")
    k = int(np.searchsorted(p.index, t.boundary, side="left"))
    return p.rows(slice(0, k)), p.rows(slice(k, None))


def concat_rows(a: Panel, b: Panel) -> Panel:
    if a.names != b.names:
        raise ValueError("column mismatch")
    return Panel(np.concatenate([a.index, b.index]), a.names,
                 np.vstack([a.values, b.values]), np.vstack([a.present, b.present]))
