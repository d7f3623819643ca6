"""Ljung-Box portmanteau test and the sample cross-correlation function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateSeries, MissingValues, TooShort
from .special import chi_square_sf


@dataclass(frozen=True)
class LjungBoxResult:
    Q: float
    lags: int
    df: int
    p_value: float

    def to_dict(self):
        return {"Q": self.Q, "lags": self.lags, "df": self.df, "p_value": self.p_value}


@dataclass(frozen=True)
class CcfResult:
    lags: np.ndarray
    correlations: np.ndarray
    confidence_bound: float
    n: int

    def at(self, lag: int) -> float:
        return float(self.correlations[int(lag) + (self.lags.size - 1) // 2])

    def to_dict(self):
        return {"lags": [int(k) for k in self.lags],
                "correlations": [float(c) for c in self.correlations],
                "confidence_bound": self.confidence_bound, "n": self.n}


def _values(s):
    if hasattr(s, "present"):
        if not s.complete:
            raise MissingValues(f"{s.name}: impute missing values first")
        return np.asarray(s.values, dtype=float)
    x = np.asarray(s, dtype=float)
    if np.isnan(x).any():
        raise MissingValues("input contains NaN")
    return x


def acf(x, nlags):
    """Sample autocorrelations r_1..r_nlags (biased, full-series normalisation)."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = d @ d
    return np.array([d[k:] @ d[:-k] / denom for k in range(1, nlags + 1)])


def ljung_box(s, m: int) -> LjungBoxResult:
    """Q = n(n+2) sum_{k=1..m} r_k^2/(n-k), referred to chi-square(m)."""
    x = _values(s)
    n = x.size
    if m < 1:
        raise ValueError("m must be >= 1")
    if n <= m:
        raise TooShort(f"need more than {m} observations, have {n}")
    if np.ptp(x) == 0:
        raise DegenerateSeries("series has zero variance")
    r = acf(x, m)
    q = float(n * (n + 2) * np.sum(r ** 2 / (n - np.arange(1, m + 1))))
    return LjungBoxResult(q, m, m, float(chi_square_sf(q, m)))


def ccf(a, b, max_lag: int) -> CcfResult:
    """Cross-correlation ``corr(a[t+k], b[t])`` for k in [-max_lag, max_lag].

    Both series are centred on their full-sample means and scaled by their
    full-sample standard deviations, so lag 0 equals Pearson's r.
    """
    x, y = _values(a), _values(b)
    n = x.size
    if y.size != n:
        raise ValueError("series must have equal length")
    if not 0 <= max_lag < n:
        raise ValueError("max_lag must be in [0, n)")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateSeries("constant series has no correlation")
    dx, dy = x - x.mean(), y - y.mean()
    scale = n * np.sqrt((dx @ dx / n) * (dy @ dy / n))
    lags = np.arange(-max_lag, max_lag + 1)
    out = np.empty(lags.size)
    for i, k in enumerate(lags):
        if k >= 0:
            out[i] = dx[k:] @ dy[:n - k]
        else:
            out[i] = dx[:n + k] @ dy[-k:]
    return CcfResult(lags, out / scale, 1.96 / np.sqrt(n), n)
