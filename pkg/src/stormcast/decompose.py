"""Loess smoothing and STL seasonal-trend decomposition.

The STL routine follows the inner/outer loop structure of Cleveland,
Cleveland, McRae & Terpenning (1990): cycle-subseries loess, a low-pass
filter of three moving averages followed by loess, and a trend loess, with
optional bisquare robustness weights in an outer loop.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import MissingValues, TooShort
from .series import Series, format_timestamp


@dataclass(frozen=True)
class LoessSpec:
    q: int
    degree: int = 1
    robustness_iters: int = 0

    def __post_init__(self):
        if self.q < 3 or self.q % 2 == 0:
            raise ValueError("loess span q must be an odd integer >= 3")
        if self.degree not in (0, 1, 2):
            raise ValueError("loess degree must be 0, 1 or 2")
        if self.robustness_iters < 0:
            raise ValueError("robustness_iters must be >= 0")


def _estimate(y, n, q, degree, xs, nleft, nright, rw):
    """Local fit at position ``xs`` from points ``nleft..nright`` (0-based, inclusive).

    Returns None when every weight vanishes.
    """
    h = max(xs - nleft, nright - xs)
    if q > n:
        h += (q - n) // 2
    j = np.arange(nleft, nright + 1, dtype=float)
    r = np.abs(j - xs)
    w = np.zeros(j.size)
    inside = r <= 0.999 * h
    core = r <= 0.001 * h
    w[inside] = (1.0 - (r[inside] / h) ** 3) ** 3 if h > 0 else 1.0
    w[core] = 1.0
    if rw is not None:
        w *= rw[nleft:nright + 1]
    total = w.sum()
    if total <= 0:
        return None
    w /= total
    yy = y[nleft:nright + 1]
    if h <= 0 or degree == 0:
        return float(w @ yy)
    if degree == 1:
        a = float(w @ j)
        c = float(w @ (j - a) ** 2)
        if np.sqrt(c) > 0.001 * (n - 1):
            w = w * ((xs - a) / c * (j - a) + 1.0)
        return float(w @ yy)
    # quadratic: weighted least squares centred on xs
    X = np.vander(j - xs, 3, increasing=True)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], yy * sw, rcond=None)
    return float(coef[0])


def _loess(y, q, degree, rw=None):
    """Loess fit evaluated at every point of ``y`` (equally spaced abscissae)."""
    n = y.size
    out = np.empty(n)
    if n < q:
        bounds = [(0, n - 1)] * n
    else:
        half = (q + 1) // 2
        bounds = []
        for i in range(n):
            if i < half:
                bounds.append((0, q - 1))
            elif i >= n - half:
                bounds.append((n - q, n - 1))
            else:
                bounds.append((i - half + 1, i - half + q))
    for i, (lo, hi) in enumerate(bounds):
        v = _estimate(y, n, q, degree, float(i), lo, hi, rw)
        out[i] = y[i] if v is None else v
    return out


def _bisquare_weights(resid):
    r = np.abs(resid)
    cmad = 6.0 * np.median(r)
    w = np.zeros(r.size)
    if cmad == 0:
        return np.ones(r.size)
    small = r <= 0.001 * cmad
    mid = (r <= 0.999 * cmad) & ~small
    w[small] = 1.0
    w[mid] = (1.0 - (r[mid] / cmad) ** 2) ** 2
    return w


def _require_complete(s: Series):
    if not s.complete:
        raise MissingValues(f"{s.name}: {s.n_missing} missing values; impute first")


def loess_smooth(s: Series, spec: LoessSpec) -> Series:
    """Locally weighted polynomial smooth of a complete, equally spaced series."""
    _require_complete(s)
    y = s.values.astype(float)
    if y.size < spec.q:
        raise TooShort(f"series length {y.size} < loess span {spec.q}")
    fit = _loess(y, spec.q, spec.degree)
    for _ in range(spec.robustness_iters):
        fit = _loess(y, spec.q, spec.degree, _bisquare_weights(y - fit))
    return s.with_values(fit)


# ---------------------------------------------------------------- STL


def _next_odd(x) -> int:
    k = int(np.ceil(x))
    return k if k % 2 else k + 1


def default_trend_window(period: int, seasonal_window: int) -> int:
    return _next_odd(1.5 * period / (1.0 - 1.5 / seasonal_window))


def _moving_average(x, length):
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[length:] - c[:-length]) / length


def _cycle_subseries(y, period, ns, degree, rw):
    """Smooth each cycle-subseries and extend it by one point at both ends."""
    n = y.size
    out = np.empty(n + 2 * period)
    for j in range(period):
        sub = y[j::period]
        k = sub.size
        sw = None if rw is None else rw[j::period]
        fit = np.empty(k + 2)
        fit[1:-1] = _loess(sub, ns, degree, sw)
        left = _estimate(sub, k, ns, degree, -1.0, 0, min(ns, k) - 1, sw)
        fit[0] = fit[1] if left is None else left
        right = _estimate(sub, k, ns, degree, float(k), max(0, k - ns), k - 1, sw)
        fit[-1] = fit[-2] if right is None else right
        out[j::period] = fit
    return out


@dataclass(frozen=True)
class StlResult:
    observed: Series
    seasonal: Series
    trend: Series
    remainder: Series
    period: int
    weights: np.ndarray = None

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "observed", "seasonal", "trend", "remainder"])
        for i, t in enumerate(self.observed.times):
            w.writerow([format_timestamp(t)] + [repr(float(c.values[i])) for c in
                                                (self.observed, self.seasonal, self.trend, self.remainder)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def stl_decompose(s: Series, period: int, seasonal_window: int = 13, trend_window: int = None,
                  robust: bool = True, low_pass_window: int = None, seasonal_deg: int = 1,
                  trend_deg: int = 1, low_pass_deg: int = 1, inner_iter: int = None,
                  outer_iter: int = None) -> StlResult:
    """Additive STL decomposition ``s = seasonal + trend + remainder``.

    Parameters
    ----------
    period : int
        Number of observations per seasonal cycle (12 for monthly data).
    seasonal_window, trend_window, low_pass_window : int
        Odd loess spans.  ``trend_window`` defaults to the next odd integer
        >= 1.5 * period / (1 - 1.5 / seasonal_window); the low-pass span to
        the next odd integer >= period.
    robust : bool
        Run 15 outer robustness passes (2 inner) instead of a single
        non-robust pass (5 inner).
    """
    _require_complete(s)
    y = s.values.astype(float)
    n = y.size
    if period < 2:
        raise ValueError("period must be >= 2")
    if n < 2 * period:
        raise TooShort(f"series length {n} < 2 * period ({2 * period})")
    if trend_window is None:
        trend_window = default_trend_window(period, seasonal_window)
    if low_pass_window is None:
        low_pass_window = _next_odd(period)
    for w in (seasonal_window, trend_window, low_pass_window):
        if w < 3 or w % 2 == 0:
            raise ValueError("STL windows must be odd integers >= 3")
    if inner_iter is None:
        inner_iter = 2 if robust else 5
    if outer_iter is None:
        outer_iter = 15 if robust else 0

    trend = np.zeros(n)
    season = np.zeros(n)
    rw = None
    for outer in range(outer_iter + 1):
        for _ in range(inner_iter):
            cycle = _cycle_subseries(y - trend, period, seasonal_window, seasonal_deg, rw)
            low = _moving_average(_moving_average(_moving_average(cycle, period), period), 3)
            low = _loess(low, low_pass_window, low_pass_deg)
            season = cycle[period:period + n] - low
            trend = _loess(y - season, trend_window, trend_deg, rw)
        if outer < outer_iter:
            rw = _bisquare_weights(y - season - trend)
    weights = np.ones(n) if rw is None else rw
    remainder = y - season - trend
    return StlResult(s, s.with_values(season, name="seasonal"), s.with_values(trend, name="trend"),
                     s.with_values(remainder, name="remainder"), int(period), weights)
