"""NDBC standard-meteorological and NOAA StormEvents ingestion.

Historical NDBC ``stdmet`` files have used several header layouts::

    YY MM DD hh WD WSPD GST WVHT DPD APD MWD BAR ATMP WTMP DEWP VIS          (<1999)
    YYYY MM DD hh WD WSPD GST WVHT DPD APD MWD BAR ATMP WTMP DEWP VIS TIDE   (1999-2004)
    YYYY MM DD hh mm WD WSPD GST WVHT DPD APD MWD BAR ATMP WTMP DEWP VIS TIDE  (2005-2006)
    #YY  MM DD hh mm WDIR WSPD GST WVHT DPD APD MWD PRES ATMP WTMP DEWP VIS TIDE  (2007+)
    #yr  mo dy hr mn degT m/s  m/s  m   sec sec degT hPa  degC degC degC nmi  ft

The parser is driven by the header names, so any of these (and column
subsets of them) are accepted.
"""

from __future__ import annotations

import csv
import io
import re
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DuplicateName, EmptyEventSet, FormatError
from .series import MINUTE, Panel, Series, aggregate_daily, align

VARIABLES = ("wdir", "wspd", "gst", "wvht", "dpd", "apd", "mwd",
             "pres", "atmp", "wtmp", "dewp", "vis", "tide")

_HEADER_ALIASES = {
    "YY": "year", "YYYY": "year", "#YY": "year", "#YYYY": "year",
    "MM": "month", "DD": "day", "hh": "hour", "mm": "minute",
    "WD": "wdir", "WDIR": "wdir", "WSPD": "wspd", "GST": "gst",
    "WVHT": "wvht", "DPD": "dpd", "APD": "apd", "MWD": "mwd",
    "BAR": "pres", "PRES": "pres", "ATMP": "atmp", "WTMP": "wtmp",
    "DEWP": "dewp", "VIS": "vis", "TIDE": "tide",
    # realtime-only pressure tendency; parsed and discarded
    "PTDY": None,
}

# Missing-value codes per column; NDBC pads each code to the column width
# (99.0 for speeds, 999 for directions, 9999.0 for pressure, ...).
SENTINELS = {
    "wdir": (999.0,), "mwd": (999.0,),
    "wspd": (99.0, 999.0), "gst": (99.0, 999.0),
    "wvht": (99.0, 999.0), "dpd": (99.0, 999.0), "apd": (99.0, 999.0),
    "pres": (9999.0,),
    "atmp": (99.0, 999.0), "wtmp": (99.0, 999.0), "dewp": (99.0, 999.0),
    "vis": (99.0, 999.0), "tide": (99.0, 999.0),
}

_DIRECTIONAL = ("wdir", "mwd")
_NONNEGATIVE = ("wspd", "gst", "wvht", "dpd", "apd")

# canonical (2007+) output layout: header token, units token, decimals, sentinel text
_CANONICAL = (
    ("wdir", "WDIR", "degT", 0, "999"), ("wspd", "WSPD", "m/s", 1, "99.0"),
    ("gst", "GST", "m/s", 1, "99.0"), ("wvht", "WVHT", "m", 2, "99.00"),
    ("dpd", "DPD", "sec", 2, "99.00"), ("apd", "APD", "sec", 2, "99.00"),
    ("mwd", "MWD", "degT", 0, "999"), ("pres", "PRES", "hPa", 1, "9999.0"),
    ("atmp", "ATMP", "degC", 1, "999.0"), ("wtmp", "WTMP", "degC", 1, "999.0"),
    ("dewp", "DEWP", "degC", 1, "999.0"), ("vis", "VIS", "nmi", 1, "99.0"),
    ("tide", "TIDE", "ft", 2, "99.00"),
)


@dataclass(frozen=True, slots=True)
class BuoyObservation:
    station_id: str
    time: np.datetime64
    wdir: Optional[float] = None
    wspd: Optional[float] = None
    gst: Optional[float] = None
    wvht: Optional[float] = None
    dpd: Optional[float] = None
    apd: Optional[float] = None
    mwd: Optional[float] = None
    pres: Optional[float] = None
    atmp: Optional[float] = None
    wtmp: Optional[float] = None
    dewp: Optional[float] = None
    vis: Optional[float] = None
    tide: Optional[float] = None


@dataclass(frozen=True, slots=True)
class StormEvent:
    event_id: str
    begin_date: np.datetime64
    event_type: str
    magnitude: Optional[float]
    damage_property: Optional[float]
    injuries_direct: int
    state: str
    narrative: str = ""


_STATION_RE = re.compile(r"^[A-Z0-9]+$")


def station_set(ids: Iterable[str]) -> tuple:
    """Validate and normalise a list of station identifiers."""
    out = tuple(str(i).strip().upper() for i in ids)
    if not out:
        raise ValueError("station set must be non-empty")
    bad = [i for i in out if not _STATION_RE.match(i)]
    if bad:
        raise ValueError(f"invalid station identifiers: {bad}")
    return out


def _decode_text(text) -> str:
    if isinstance(text, (bytes, bytearray)):
        return bytes(text).decode("ascii", errors="replace")
    if hasattr(text, "read"):
        return _decode_text(text.read())
    return text


def _pivot_year(y: int) -> int:
    if y >= 100:
        return y
    return 1900 + y if y >= 70 else 2000 + y


def _parse_header(tokens, lineno):
    fields_ = []
    for tok in tokens:
        if tok not in _HEADER_ALIASES:
            raise FormatError(f"unrecognized header token {tok!r}", line=lineno)
        fields_.append(_HEADER_ALIASES[tok])
    required = {"year", "month", "day", "hour"}
    if not required <= set(fields_) or fields_[0] != "year":
        raise FormatError("unrecognized header layout", line=lineno)
    if len([f for f in fields_ if f]) != len({f for f in fields_ if f}):
        raise FormatError("repeated column in header", line=lineno)
    return fields_


def parse_ndbc_file(text, station_id: str) -> list:
    """Parse an NDBC standard meteorological text file.

    Parameters
    ----------
    text : str, bytes or file-like
        File contents.
    station_id : str
        Station the file belongs to (not stored in the file itself).

    Returns
    -------
    list of BuoyObservation
        One per data row, in file order.  Sentinel codes and ``MM`` decode
        to ``None``; a row repeating an earlier timestamp is dropped with a
        warning.
    """
    lines = _decode_text(text).splitlines()
    header = None
    out = []
    seen = set()
    station_id = str(station_id).upper()
    for lineno, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if header is None:
            header = _parse_header(tokens, lineno)
            continue
        if raw.lstrip().startswith("#"):
            # units line of the 2007+ layout
            continue
        if len(tokens) != len(header):
            raise FormatError(f"expected {len(header)} fields, found {len(tokens)}", line=lineno)
        rec = {}
        stamp = {"minute": 0}
        for name, tok in zip(header, tokens):
            if name is None:
                continue
            if name in ("year", "month", "day", "hour", "minute"):
                if not tok.isdigit():
                    raise FormatError(f"bad {name} field {tok!r}", line=lineno, column=name)
                stamp[name] = int(tok)
                continue
            if tok == "MM":
                rec[name] = None
                continue
            try:
                val = float(tok)
            except ValueError:
                val = np.nan
            if not np.isfinite(val):
                raise FormatError(f"non-numeric field {tok!r}", line=lineno, column=name)
            if val in SENTINELS[name]:
                rec[name] = None
                continue
            if name in _DIRECTIONAL and not 0 <= val <= 360:
                raise FormatError(f"direction {val} out of [0, 360]", line=lineno, column=name)
            if name in _NONNEGATIVE and val < 0:
                raise FormatError(f"negative {name} {val}", line=lineno, column=name)
            rec[name] = val
        year = _pivot_year(stamp["year"])
        try:
            when = np.datetime64(
                f"{year:04d}-{stamp['month']:02d}-{stamp['day']:02d}"
                f"T{stamp['hour']:02d}:{stamp['minute']:02d}", "m")
        except ValueError:
            raise FormatError("invalid date/time", line=lineno) from None
        if stamp["hour"] > 23 or stamp["minute"] > 59:
            raise FormatError("invalid time of day", line=lineno)
        if when in seen:
            warnings.warn(f"{station_id}: duplicate timestamp {when} at line {lineno}; keeping first",
                          stacklevel=2)
            continue
        seen.add(when)
        out.append(BuoyObservation(station_id, when, **rec))
    return out


def _fmt(value, decimals, sentinel):
    if value is None:
        return sentinel
    s = f"{value:.{decimals}f}"
    return s if float(s) == value else repr(float(value))


def format_ndbc(observations: Sequence[BuoyObservation]) -> str:
    """Write observations in the current (2007+) layout with a units line."""
    head = "#YY  MM DD hh mm " + " ".join(h for _, h, _, _, _ in _CANONICAL)
    units = "#yr  mo dy hr mn " + " ".join(u for _, _, u, _, _ in _CANONICAL)
    rows = [head, units]
    for obs in observations:
        t = obs.time.astype(object)
        cells = [f"{t.year:04d}", f"{t.month:02d}", f"{t.day:02d}", f"{t.hour:02d}", f"{t.minute:02d}"]
        cells += [_fmt(getattr(obs, name), d, sent) for name, _, _, d, sent in _CANONICAL]
        rows.append(" ".join(cells))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------- storm events

REQUIRED_EVENT_COLUMNS = ("EVENT_ID", "BEGIN_YEARMONTH", "BEGIN_DAY", "EVENT_TYPE", "STATE",
                          "MAGNITUDE", "DAMAGE_PROPERTY", "INJURIES_DIRECT")

DEFAULT_EVENT_TYPES = frozenset({"Thunderstorm Wind", "High Wind", "Tropical Storm", "Hurricane",
                                 "Marine Thunderstorm Wind", "Tornado"})
DEFAULT_STATES = frozenset({"FLORIDA", "GULF OF MEXICO"})

_DAMAGE_RE = re.compile(r"^(\d+(?:\.\d*)?|\.\d+)([KMB]?)$")
_DAMAGE_SCALE = {"": 1.0, "K": 1e3, "M": 1e6, "B": 1e9}


def parse_damage_amount(s) -> Optional[float]:
    """Decode a StormEvents damage string such as ``10.00K`` into USD.

    Empty strings and unrecognized tokens return ``None``.
    """
    if s is None:
        return None
    m = _DAMAGE_RE.match(str(s).strip().upper())
    if not m:
        return None
    return float(m.group(1)) * _DAMAGE_SCALE[m.group(2)]


def _parse_magnitude(s) -> Optional[float]:
    try:
        v = float(s)
    except (TypeError, ValueError):
        return None
    if not np.isfinite(v) or v < 0:
        return None
    return v


def parse_storm_events_csv(text) -> list:
    """Parse a NOAA StormEvents ``details`` CSV export."""
    reader = csv.DictReader(io.StringIO(_decode_text(text), newline=""))
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_EVENT_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"missing required columns {missing}", line=1)
    events = []
    for row in reader:
        line = reader.line_num
        ym = row["BEGIN_YEARMONTH"].strip()
        day = row["BEGIN_DAY"].strip()
        if len(ym) != 6 or not ym.isdigit() or not day.isdigit():
            raise FormatError(f"bad begin date {ym!r}/{day!r}", line=line, column="BEGIN_YEARMONTH")
        try:
            begin = np.datetime64(f"{ym[:4]}-{ym[4:]}-{int(day):02d}", "D").astype(MINUTE)
        except ValueError:
            raise FormatError(f"invalid begin date {ym}{day}", line=line, column="BEGIN_DAY") from None
        inj_text = (row["INJURIES_DIRECT"] or "").strip()
        if inj_text == "":
            injuries = 0
        elif inj_text.isdigit():
            injuries = int(inj_text)
        else:
            raise FormatError(f"bad injury count {inj_text!r}", line=line, column="INJURIES_DIRECT")
        events.append(StormEvent(
            event_id=row["EVENT_ID"].strip(),
            begin_date=begin,
            event_type=row["EVENT_TYPE"].strip(),
            magnitude=_parse_magnitude(row["MAGNITUDE"]),
            damage_property=parse_damage_amount(row["DAMAGE_PROPERTY"]),
            injuries_direct=injuries,
            state=row["STATE"].strip().upper(),
            narrative=row.get("EVENT_NARRATIVE") or "",
        ))
    return events


def _plain(v) -> str:
    if v is None:
        return ""
    return f"{v:.0f}" if float(v).is_integer() else repr(float(v))


def format_storm_events(events: Sequence[StormEvent]) -> str:
    """Canonical CSV of parsed events, readable by :func:`parse_storm_events_csv`.

    Damage is written in plain dollars and missing values as empty cells.
    """
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(REQUIRED_EVENT_COLUMNS + ("EVENT_NARRATIVE",))
    for e in events:
        day = e.begin_date.astype("datetime64[D]").astype(object)
        out.writerow([e.event_id, f"{day.year:04d}{day.month:02d}", str(day.day), e.event_type, e.state,
                      _plain(e.magnitude), _plain(e.damage_property), str(e.injuries_direct), e.narrative])
    return buf.getvalue()


def build_event_series(events: Sequence[StormEvent], event_types=DEFAULT_EVENT_TYPES,
                       states=DEFAULT_STATES, fill: str = "zero", start=None, end=None,
                       name: str = "MAG") -> Series:
    """Daily storm-magnitude series: the maximum magnitude of the day's events.

    Days without a (magnitude-bearing) filtered event get 0.0 when
    ``fill='zero'`` and are missing when ``fill='missing'``.  The span runs
    from the first to the last filtered event unless ``start``/``end``
    widen it.
    """
    if fill not in ("zero", "missing"):
        raise ValueError("fill must be 'zero' or 'missing'")
    types = {t.lower() for t in event_types}
    states = {s.upper() for s in states}
    chosen = [e for e in events if e.event_type.lower() in types and e.state.upper() in states]
    if not chosen:
        raise EmptyEventSet("no events match the type/state filter")
    days = np.array([e.begin_date for e in chosen], dtype="datetime64[D]")
    first, last = days.min(), days.max()
    if start is not None:
        first = min(first, np.datetime64(start, "D"))
    if end is not None:
        last = max(last, np.datetime64(end, "D"))
    span = np.arange(first, last + np.timedelta64(1, "D"), dtype="datetime64[D]")
    best = np.full(span.size, -np.inf)
    for d, e in zip(days, chosen):
        if e.magnitude is not None:
            i = int((d - first).astype(int))
            best[i] = max(best[i], e.magnitude)
    has = np.isfinite(best)
    values = np.where(has, best, 0.0 if fill == "zero" else np.nan)
    present = has | (fill == "zero")
    return Series(name, span.astype(MINUTE), values, present)


def observations_to_series(obs: Sequence[BuoyObservation], var: str, name: str) -> Series:
    """Raw (sub-daily) series of one variable; duplicate timestamps keep the first."""
    if var not in VARIABLES:
        raise KeyError(var)
    if not obs:
        return Series(name, np.array([], dtype=MINUTE), np.array([]), np.array([], dtype=bool))
    times = np.array([o.time for o in obs], dtype=MINUTE)
    vals = np.array([np.nan if getattr(o, var) is None else getattr(o, var) for o in obs])
    order = np.argsort(times, kind="stable")
    times, vals = times[order], vals[order]
    keep = np.ones(times.size, dtype=bool)
    keep[1:] = times[1:] != times[:-1]
    return Series(name, times[keep], vals[keep], ~np.isnan(vals[keep]))


def merge_panel(buoy: Mapping[str, Sequence[BuoyObservation]], events: Optional[Series],
                variables: Sequence[str] = VARIABLES, min_count: int = 1) -> Panel:
    """Daily panel with one ``<station>_<var>`` column per station/variable plus ``MAG``.

    Stations are processed in sorted order.  The index is every calendar
    day between the earliest and latest day of any input.
    """
    if not buoy:
        raise ValueError("merge_panel needs at least one station")
    cols = []
    for station in sorted(buoy):
        obs = buoy[station]
        for var in variables:
            raw = observations_to_series(obs, var, f"{station}_{var}")
            cols.append(aggregate_daily(raw, min_count) if len(raw) else raw)
    if events is not None:
        cols.append(events)
    names = [c.name for c in cols]
    if len(set(names)) != len(names):
        raise DuplicateName(f"column name collision: {sorted({n for n in names if names.count(n) > 1})}")
    panel = align(cols)
    if len(panel) == 0:
        return panel
    days = np.arange(panel.index[0].astype("datetime64[D]"),
                     panel.index[-1].astype("datetime64[D]") + np.timedelta64(1, "D"),
                     dtype="datetime64[D]").astype(MINUTE)
    if days.size == len(panel) and np.array_equal(days, panel.index):
        return panel
    pos = np.searchsorted(days, panel.index)
    values = np.full((days.size, len(panel.names)), np.nan)
    present = np.zeros(values.shape, dtype=bool)
    values[pos] = panel.values
    present[pos] = panel.present
    return Panel(days, panel.names, values, present)


__all__ = [
    "VARIABLES", "SENTINELS", "BuoyObservation", "StormEvent", "station_set",
    "parse_ndbc_file", "format_ndbc", "parse_storm_events_csv", "format_storm_events", "parse_damage_amount",
    "build_event_series", "merge_panel", "observations_to_series",
    "DEFAULT_EVENT_TYPES", "DEFAULT_STATES", "REQUIRED_EVENT_COLUMNS",
]
