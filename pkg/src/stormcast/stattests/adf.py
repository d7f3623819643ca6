"""Augmented Dickey-Fuller unit-root test with tabulated critical values.

Critical values come from the response surfaces of

    MacKinnon, J.G. (2010). "Critical Values for Cointegration Tests."
    Queen's Economics Department Working Paper No. 1227, Table 2 (N = 1).

    cv(T) = b0 + b1/T + b2/T^2 + b3/T^3

with T the number of observations in the test regression.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import MissingValues, SingularDesign, TooShort

LEVELS = (0.01, 0.05, 0.10)

# (b0, b1, b2, b3) for the 1%, 5% and 10% levels
MACKINNON_2010 = {
    "none": ((-2.56574, -2.2358, -3.627, 0.0),
             (-1.94100, -0.2686, -3.365, 31.223),
             (-1.61682, 0.2656, -2.714, 25.364)),
    "drift": ((-3.43035, -6.5393, -16.786, -79.433),
              (-2.86154, -2.8903, -4.234, -40.040),
              (-2.56677, -1.5384, -2.809, 0.0)),
    "trend": ((-3.95877, -9.0531, -28.428, -134.155),
              (-3.41049, -4.3904, -9.036, -45.374),
              (-3.12705, -2.5856, -3.925, -22.380)),
}

MIN_LENGTH = 25


def critical_values(regression: str, nobs: float = np.inf) -> dict:
    """Finite-sample Dickey-Fuller critical values at 1%, 5% and 10%."""
    inv = 0.0 if not np.isfinite(nobs) else 1.0 / nobs
    out = {}
    for level, b in zip(LEVELS, MACKINNON_2010[regression]):
        out[level] = b[0] + b[1] * inv + b[2] * inv ** 2 + b[3] * inv ** 3
    return out


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lag_order: int
    regression: str
    p_value_bracket: tuple
    reject_at: dict
    critical_values: dict = field(default_factory=dict)
    nobs: int = 0

    def to_dict(self):
        return {
            "statistic": self.statistic, "lag_order": self.lag_order,
            "regression": self.regression, "nobs": self.nobs,
            "p_value_bracket": list(self.p_value_bracket),
            "critical_values": {f"{k:.2f}": v for k, v in self.critical_values.items()},
            "reject_at": {f"{k:.2f}": v for k, v in self.reject_at.items()},
        }


def adf_design(y: np.ndarray, lags: int, regression: str, start: int = None):
    """Response and regressors of the ADF regression.

    Columns are ``[y_{t-1}, dy_{t-1}, ..., dy_{t-lags}, const?, trend?]``.
    ``start`` drops leading rows so that different lag orders share one
    sample.
    """
    dy = np.diff(y)
    start = lags if start is None else start
    resp = dy[start:]
    cols = [y[start:-1]]
    for j in range(1, lags + 1):
        cols.append(dy[start - j:dy.size - j])
    m = resp.size
    if regression in ("drift", "trend"):
        cols.append(np.ones(m))
    if regression == "trend":
        cols.append(np.arange(1, m + 1, dtype=float))
    return resp, np.column_stack(cols)


def _ols(resp, X):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesign("ADF regression design is rank deficient")
    coef, *_ = np.linalg.lstsq(X, resp, rcond=None)
    resid = resp - X @ coef
    return coef, resid


def _default_max_lag(n):
    return int(np.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(s, regression: str = "drift", max_lag="auto", autolag: bool = True) -> AdfResult:
    """Augmented Dickey-Fuller test of a unit root in ``s``.

    Parameters
    ----------
    s : Series or array-like
        Complete series, length >= 25.
    regression : {'none', 'drift', 'trend'}
        Deterministic terms in the test regression.
    max_lag : int or 'auto'
        Largest augmentation lag; 'auto' uses floor(12 (n/100)^(1/4)).
    autolag : bool
        Choose the lag in ``0..max_lag`` by AIC on a common sample (ties go
        to the smaller lag).  When False, ``max_lag`` is used as is.
    """
    if regression not in MACKINNON_2010:
        raise ValueError(f"regression must be one of {sorted(MACKINNON_2010)}")
    if hasattr(s, "present"):
        if not s.complete:
            raise MissingValues(f"{s.name}: impute missing values first")
        y = np.asarray(s.values, dtype=float)
    else:
        y = np.asarray(s, dtype=float)
        if np.isnan(y).any():
            raise MissingValues("input contains NaN")
    n = y.size
    if n < MIN_LENGTH:
        raise TooShort(f"ADF needs at least {MIN_LENGTH} observations, have {n}")
    pmax = _default_max_lag(n) if max_lag == "auto" else int(max_lag)
    ndet = {"none": 0, "drift": 1, "trend": 2}[regression]
    # keep enough residual degrees of freedom
    pmax = max(0, min(pmax, (n - 1 - ndet - 2) // 2))

    if autolag and pmax > 0:
        best = None
        for p in range(pmax + 1):
            resp, X = adf_design(y, p, regression, start=pmax)
            _, resid = _ols(resp, X)
            m = resp.size
            aic = m * np.log(resid @ resid / m) + 2.0 * X.shape[1]
            if best is None or aic < best[0]:
                best = (aic, p)
        lag = best[1]
    else:
        lag = pmax

    resp, X = adf_design(y, lag, regression)
    coef, resid = _ols(resp, X)
    m, k = X.shape
    s2 = resid @ resid / (m - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(s2 * xtx_inv[0, 0])
    if not se > 0:
        raise SingularDesign("zero residual variance in ADF regression")
    tau = float(coef[0] / se)

    cv = critical_values(regression, m)
    bounds = (0.0,) + LEVELS + (1.0,)
    pos = sum(tau > cv[a] for a in LEVELS)
    bracket = (bounds[pos], bounds[pos + 1])
    reject = {a: bool(tau <= cv[a]) for a in LEVELS}
    return AdfResult(tau, lag, regression, bracket, reject, cv, m)
