"""Vector autoregression: AIC lag selection, equation-wise OLS, forecasting.

Regressors follow the usual lag-major layout ``a.l1, b.l1, a.l2, b.l2, ...``
followed by the deterministic terms ``const`` and/or ``trend``.  The trend
regressor equals the 1-based row position in the full sample, so the first
usable row of a VAR(p) has trend ``p + 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingValues, SingularDesign, TooShort
from .series import Panel, Series
from .stattests.special import f_sf, two_sided_t_pvalue

DETERMINISTIC = ("none", "const", "trend", "both")


@dataclass(frozen=True)
class VarSpec:
    lag_max: int = 6
    deterministic: str = "trend"
    ic: str = "aic"

    def __post_init__(self):
        if self.lag_max < 1:
            raise ValueError("lag_max must be >= 1")
        if self.deterministic not in DETERMINISTIC:
            raise ValueError(f"deterministic must be one of {DETERMINISTIC}")
        if self.ic != "aic":
            raise ValueError("only AIC lag selection is supported")

    @property
    def n_det(self) -> int:
        return {"none": 0, "const": 1, "trend": 1, "both": 2}[self.deterministic]

    @property
    def has_const(self) -> bool:
        return self.deterministic in ("const", "both")


@dataclass
class EquationSummary:
    name: str
    regressors: list
    estimate: np.ndarray
    std_error: np.ndarray
    t_value: np.ndarray
    p_value: np.ndarray
    residual_se: float
    df: int
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    f_df: tuple
    f_p_value: float
    residual_quantiles: np.ndarray = None

    def to_dict(self):
        return {
            "name": self.name,
            "coefficients": [
                {"term": r, "estimate": float(e), "std_error": float(s), "t_value": float(t),
                 "p_value": float(p)}
                for r, e, s, t, p in zip(self.regressors, self.estimate, self.std_error,
                                         self.t_value, self.p_value)],
            "residual_se": self.residual_se, "df": self.df,
            "r_squared": self.r_squared, "adj_r_squared": self.adj_r_squared,
            "f_statistic": self.f_statistic, "f_df": list(self.f_df), "f_p_value": self.f_p_value,
        }


@dataclass
class VarFit:
    names: tuple
    p: int
    spec: VarSpec
    regressors: list
    coef: np.ndarray            # k x m, one row per equation
    residuals: np.ndarray       # T_eff x k
    fitted: np.ndarray          # T_eff x k
    residual_cov: np.ndarray    # RSS / (T_eff - m)
    residual_cov_ml: np.ndarray  # RSS / T_eff
    summaries: dict
    n_total: int
    index: np.ndarray = None    # timestamps of the fitted rows
    X: np.ndarray = field(default=None, repr=False)
    Y: np.ndarray = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def T_eff(self) -> int:
        return self.residuals.shape[0]

    def lag_matrices(self) -> list:
        """``[A_1, ..., A_p]`` with ``A_i[eq, series]``."""
        k = self.k
        return [self.coef[:, i * k:(i + 1) * k] for i in range(self.p)]

    def deterministic_coef(self) -> np.ndarray:
        return self.coef[:, self.p * self.k:]

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(np.linalg.eigvals(companion(self.lag_matrices()))) < 1.0))

    def to_dict(self):
        return {
            "schema_version": 1, "names": list(self.names), "p": self.p,
            "deterministic": self.spec.deterministic, "regressors": self.regressors,
            "coef": self.coef.tolist(), "residual_cov": self.residual_cov.tolist(),
            "T_eff": self.T_eff, "n_total": self.n_total,
            "equations": {n: s.to_dict() for n, s in self.summaries.items()},
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class VarForecast:
    names: tuple
    horizon: int
    mean: np.ndarray       # h x k
    variance: np.ndarray   # h x k
    index: np.ndarray = None

    def to_dict(self):
        return {"schema_version": 1, "names": list(self.names), "horizon": self.horizon,
                "mean": self.mean.tolist(), "variance": self.variance.tolist(),
                "index": None if self.index is None else [str(t)[:16] for t in self.index]}


def companion(A: list) -> np.ndarray:
    k = A[0].shape[0]
    p = len(A)
    C = np.zeros((k * p, k * p))
    C[:k] = np.hstack(A)
    if p > 1:
        C[k:, :-k] = np.eye(k * (p - 1))
    return C


def _data(p: Panel) -> np.ndarray:
    if not p.complete:
        raise MissingValues("VAR requires a complete panel; impute or zero-fill first")
    return np.asarray(p.values, dtype=float)


def var_design(Y: np.ndarray, lag: int, spec: VarSpec, start: int = None):
    """Response rows ``start..T-1`` and their regressors."""
    T, k = Y.shape
    start = lag if start is None else start
    rows = np.arange(start, T)
    cols = [Y[rows - i] for i in range(1, lag + 1)]
    if spec.has_const:
        cols.append(np.ones((rows.size, 1)))
    if spec.deterministic in ("trend", "both"):
        cols.append((rows + 1.0)[:, None])
    return Y[rows], np.hstack(cols)


def regressor_names(names, lag, spec):
    out = [f"{n}.l{i}" for i in range(1, lag + 1) for n in names]
    if spec.has_const:
        out.append("const")
    if spec.deterministic in ("trend", "both"):
        out.append("trend")
    return out


def _ols(X, Y):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesign("VAR design matrix is rank deficient")
    B, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return B


def aic_table(p: Panel, spec: VarSpec) -> dict:
    """AIC of every lag in ``1..lag_max`` fit on the common sample."""
    Y = _data(p)
    T, k = Y.shape
    if T <= k * spec.lag_max + spec.lag_max + 2:
        raise TooShort(f"{T} rows are too few for lag_max={spec.lag_max} with {k} series")
    out = {}
    for lag in range(1, spec.lag_max + 1):
        resp, X = var_design(Y, lag, spec, start=spec.lag_max)
        E = resp - X @ _ols(X, resp)
        Tc = resp.shape[0]
        sigma = E.T @ E / Tc
        sign, logdet = np.linalg.slogdet(sigma)
        if sign <= 0:
            raise SingularDesign("residual covariance is singular")
        out[lag] = float(logdet + 2.0 / Tc * k * X.shape[1])
    return out


def select_lag(p: Panel, spec: VarSpec) -> int:
    """Lag minimising AIC = log det(Sigma_ML) + 2 * n_params / T_c; ties go to the smaller lag."""
    if spec.lag_max == 1:
        _data(p)
        return 1
    table = aic_table(p, spec)
    return min(table, key=lambda lag: (table[lag], lag))


def _summaries(names, regs, X, Y, B, spec):
    T_eff, m = X.shape
    rdf = T_eff - m
    if rdf <= 0:
        raise TooShort("no residual degrees of freedom")
    xtx_inv = np.linalg.inv(X.T @ X)
    fitted = X @ B
    resid = Y - fitted
    out = {}
    df_int = 1 if spec.has_const else 0
    for j, name in enumerate(names):
        e = resid[:, j]
        f = fitted[:, j]
        rss = float(e @ e)
        s2 = rss / rdf
        se = np.sqrt(s2 * np.diag(xtx_inv))
        t = B[:, j] / se
        pv = two_sided_t_pvalue(t, rdf)
        mss = float(np.sum((f - f.mean()) ** 2)) if df_int else float(f @ f)
        r2 = mss / (mss + rss)
        adj = 1.0 - (1.0 - r2) * (T_eff - df_int) / rdf
        numdf = m - df_int
        fstat = (mss / numdf) / s2 if numdf > 0 else float("nan")
        fp = float(f_sf(fstat, numdf, rdf)) if numdf > 0 else float("nan")
        out[name] = EquationSummary(name, list(regs), B[:, j].copy(), se, t, np.asarray(pv),
                                    float(np.sqrt(s2)), rdf, r2, adj, float(fstat), (numdf, rdf),
                                    fp, np.quantile(e, [0, 0.25, 0.5, 0.75, 1.0]))
    return out, fitted, resid


def fit_var(p: Panel, spec: VarSpec, lag: int) -> VarFit:
    """Equation-by-equation OLS fit of a VAR(lag)."""
    Y = _data(p)
    T, k = Y.shape
    if lag < 1:
        raise ValueError("lag must be >= 1")
    m = k * lag + spec.n_det
    if T - lag <= m:
        raise TooShort(f"{T - lag} usable rows for {m} regressors per equation")
    resp, X = var_design(Y, lag, spec)
    B = _ols(X, resp)
    regs = regressor_names(p.names, lag, spec)
    summaries, fitted, resid = _summaries(p.names, regs, X, resp, B, spec)
    T_eff = resp.shape[0]
    cov = resid.T @ resid / (T_eff - m)
    cov_ml = resid.T @ resid / T_eff
    return VarFit(tuple(p.names), lag, spec, regs, B.T.copy(), resid, fitted,
                  0.5 * (cov + cov.T), 0.5 * (cov_ml + cov_ml.T), summaries, T,
                  p.index[lag:], X, resp)


def fit_auto(p: Panel, spec: VarSpec) -> VarFit:
    return fit_var(p, spec, select_lag(p, spec))


def ma_coefficients(A: list, h: int) -> list:
    """Moving-average matrices Phi_0..Phi_{h-1} of the VAR."""
    k = A[0].shape[0]
    phi = [np.eye(k)]
    for i in range(1, h):
        acc = np.zeros((k, k))
        for j in range(1, min(i, len(A)) + 1):
            acc += phi[i - j] @ A[j - 1]
        phi.append(acc)
    return phi


def forecast(fit: VarFit, last_obs=None, h: int = 1) -> VarForecast:
    """Recursive ``h``-step forecasts from the last ``p`` observations.

    ``last_obs`` is ``p x k`` in chronological order (defaults to the end of
    the fitted sample).  Forecast-error variances are the diagonals of
    ``sum_i Phi_i Sigma_u Phi_i'``.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    k, p = fit.k, fit.p
    if last_obs is None:
        last_obs = fit.Y[-p:] if fit.Y is not None and fit.Y.shape[0] >= p else None
    hist = [np.asarray(r, dtype=float) for r in np.asarray(last_obs, dtype=float).reshape(p, k)]
    A = fit.lag_matrices()
    D = fit.deterministic_coef()
    out = np.empty((h, k))
    for j in range(1, h + 1):
        det = []
        if fit.spec.has_const:
            det.append(1.0)
        if fit.spec.deterministic in ("trend", "both"):
            det.append(float(fit.n_total + j))
        y = D @ np.asarray(det) if det else np.zeros(k)
        for i in range(1, p + 1):
            y = y + A[i - 1] @ hist[-i]
        out[j - 1] = y
        hist.append(y)
    phi = ma_coefficients(A, h)
    var = np.empty((h, k))
    acc = np.zeros((k, k))
    for i in range(h):
        acc = acc + phi[i] @ fit.residual_cov @ phi[i].T
        var[i] = np.diag(acc)
    index = None
    if fit.index is not None and len(fit.index) > 1:
        step = fit.index[-1] - fit.index[-2]
        index = fit.index[-1] + step * np.arange(1, h + 1)
    return VarForecast(fit.names, h, out, var, index)


def fitted_and_residual_plotdata(fit: VarFit) -> dict:
    """Per-series (fitted, residual) Series on the fitted rows."""
    idx = fit.index
    if idx is None:
        idx = np.datetime64("2000-01-01", "m") + np.arange(fit.T_eff).astype("timedelta64[D]")
    out = {}
    for j, name in enumerate(fit.names):
        f = Series(f"{name}.fitted", idx, fit.fitted[:, j], np.ones(fit.T_eff, dtype=bool))
        r = Series(f"{name}.residual", idx, fit.residuals[:, j], np.ones(fit.T_eff, dtype=bool))
        out[name] = (f, r)
    return out


# ---------------------------------------------------------------- text summary

def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "."
    return " "


_EPS = np.finfo(float).eps


def _decimals_for(x, sig):
    if x == 0 or not np.isfinite(x):
        return 0
    return max(0, sig - 1 - int(np.floor(np.log10(abs(x)))))


def _min_decimals(values, sig):
    """Common decimals so that every value shows ``sig`` significant digits."""
    d = 0
    for v in values:
        v = float(v)
        if v == 0:
            continue
        need = _decimals_for(v, sig)
        # drop trailing zeros a value does not need
        while need > 0 and round(v, need - 1) == round(v, need):
            need -= 1
        d = max(d, need)
    return d


def _format_pvalues(pv, sig=3):
    pv = np.asarray(pv, dtype=float)
    out = [""] * pv.size
    fixed = [i for i, p in enumerate(pv) if p >= 1e-4]
    if fixed:
        dec = max(_decimals_for(pv[i], sig) for i in fixed)
        for i in fixed:
            out[i] = f"{pv[i]:.{dec}f}"
    for i, p in enumerate(pv):
        if p < _EPS:
            out[i] = "<2e-16"
        elif p < 1e-4:
            out[i] = f"{p:.{sig - 1}e}"
    return out


def coefficient_table(terms, estimate, std_error, t_value, p_value) -> list:
    """Aligned coefficient rows with significance stars."""
    est_se = np.concatenate([np.asarray(estimate, float), np.asarray(std_error, float)])
    dec = _min_decimals([min(abs(v) for v in est_se if v != 0)] if np.any(est_se != 0) else [0], 4)
    cells = []
    for term, e, s, t, p in zip(terms, estimate, std_error, t_value,
                                _format_pvalues(p_value)):
        cells.append([term, f"{e:.{dec}f}", f"{s:.{dec}f}", f"{t:.3f}", p])
    header = ["", "Estimate", "Std. Error", "t value", "Pr(>|t|)"]
    widths = [max(len(r[i]) for r in cells + [header]) for i in range(5)]
    lines = [" ".join([header[0].ljust(widths[0])] + [header[i].rjust(widths[i]) for i in range(1, 5)])
             + "    "]
    for row, p in zip(cells, p_value):
        lines.append(" ".join([row[0].ljust(widths[0])] + [row[i].rjust(widths[i]) for i in range(1, 5)])
                     + " " + significance_stars(float(p)).ljust(3))
    return lines


def _sig(x, digits=4):
    if x == 0 or not np.isfinite(x):
        return f"{x}"
    return f"{x:.{digits}g}"


def _fmt_quantiles(q):
    mx = float(np.max(np.abs(q)))
    dig = max(0, 5 - int(np.ceil(np.log10(mx)))) if mx > 0 else 5
    z = np.round(q, dig)
    dec = _min_decimals(z, 4)
    cells = [f"{v:.{dec}f}" for v in z]
    names = ["Min", "1Q", "Median", "3Q", "Max"]
    w = max(len(c) for c in cells + names)
    return [" ".join(n.rjust(w) for n in names), " ".join(c.rjust(w) for c in cells)]


def format_summary(s: EquationSummary, intercept: bool = False) -> str:
    """Printed regression summary in the familiar residuals / coefficients / fit layout."""
    rhs = " + ".join(r for r in s.regressors if r != "const")
    lines = [f"Equation {s.name}:", f"{s.name} ~ {'' if intercept else '-1 + '}{rhs}", ""]
    lines += ["Residuals:"] + _fmt_quantiles(s.residual_quantiles) + [""]
    lines += ["Coefficients:"]
    lines += coefficient_table(s.regressors, s.estimate, s.std_error, s.t_value, s.p_value)
    lines += ["---", "Signif. codes:  0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1", ""]
    lines.append(f"Residual standard error: {_sig(s.residual_se)} on {s.df} degrees of freedom")
    lines.append(f"Multiple R-squared:  {_sig(s.r_squared)},\tAdjusted R-squared:  {_sig(s.adj_r_squared)}")
    fp = "< 2.2e-16" if s.f_p_value < _EPS else _sig(s.f_p_value)
    lines.append(f"F-statistic: {_sig(s.f_statistic)} on {s.f_df[0]} and {s.f_df[1]} DF,  p-value: {fp}")
    return "\n".join(line.rstrip() for line in lines) + "\n"


def format_fit(fit: VarFit) -> str:
    head = [f"VAR({fit.p}) on {', '.join(fit.names)}; deterministic = {fit.spec.deterministic}",
            f"Sample rows used: {fit.T_eff} of {fit.n_total}", ""]
    body = [format_summary(fit.summaries[n], fit.spec.has_const) for n in fit.names]
    return "\n".join(head) + "\n".join(body)
