"""Multivariate spline-EM imputation across correlated neighbour columns.

Each column ``j`` is modelled as a cubic regression-spline trend in time
plus a row-wise Gaussian residual shared across columns::

    x_t = B(t) beta + e_t,     e_t ~ N(0, Sigma)

The fit is an ECM iteration.  The E-step replaces each missing cell by its
conditional expectation given the observed cells of the same row and
accumulates the conditional covariances; the CM-steps refit the spline
coefficients by generalised least squares given ``Sigma`` and then update
``Sigma`` from the completed residuals.  Both CM-steps maximise the expected
complete-data likelihood, so the observed-data log-likelihood cannot
decrease between iterations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from ..errors import NonConverged, SingularCovarianceWarning, TooFewObservations
from ..series import Panel

MIN_OBSERVATIONS = 10
_RIDGE = 1e-8
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SplineEmConfig:
    spline_df: Union[str, float] = "auto"
    max_iter: int = 100
    tol: float = 1e-6
    # all-missing row runs longer than this stay missing
    max_blank_run: int = 30

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.spline_df != "auto" and not float(self.spline_df) > 0:
            raise ValueError("spline_df must be positive or 'auto'")


@dataclass
class SplineEmResult:
    panel: Panel
    loglik: list = field(default_factory=list)
    converged: bool = True
    n_iter: int = 0
    df: dict = field(default_factory=dict)
    # cells left missing because their row sits in an over-long all-missing run
    unfilled: np.ndarray = None
    sigma: np.ndarray = None


def spline_basis(n: int, df: int, sparse: bool = False):
    """Cubic B-spline design matrix on ``0..n-1`` with ``df`` columns and uniform knots."""
    df = int(df)
    if df < 4:
        raise ValueError("spline df must be >= 4")
    lo, hi = 0.0, float(max(n - 1, 1))
    inner = np.linspace(lo, hi, df - 2)[1:-1]
    knots = np.concatenate([[lo] * 4, inner, [hi] * 4])
    x = np.arange(n, dtype=float)
    B = BSpline.design_matrix(x, knots, 3)
    return B.tocsr() if sparse else B.toarray()


def _spline_ls(B, y):
    """Least squares through the normal equations, falling back to lstsq when singular."""
    G = (B.T @ B).toarray()
    try:
        if np.min(np.diag(G)) <= 1e-10 * np.max(np.diag(G)):
            raise LinAlgError("basis function without support")
        return cho_solve(cho_factor(G), B.T @ y)
    except LinAlgError:
        return np.linalg.lstsq(B.toarray(), y, rcond=None)[0]


def gcv_df(y: np.ndarray, rows: np.ndarray, n: int, lo: int = 4, hi: int = None) -> int:
    """Spline df minimising generalised cross-validation on the observed rows.

    Candidates run over the integers in ``[lo, hi]`` with ``hi`` defaulting
    to ``n // 10`` (but never below ``lo``).
    """
    m = rows.size
    hi = max(lo, n // 10 if hi is None else hi)
    hi = min(hi, m - 2)
    best, best_df = np.inf, lo
    for df in range(lo, max(lo, hi) + 1):
        B = spline_basis(n, df, sparse=True)[rows]
        coef = _spline_ls(B, y)
        rss = float(np.sum((y - B @ coef) ** 2))
        score = m * rss / (m - df) ** 2
        if score < best - 1e-12 * abs(best if np.isfinite(best) else 0.0):
            best, best_df = score, df
    return best_df


def _blank_runs(all_missing: np.ndarray, limit: int) -> np.ndarray:
    """Rows belonging to an all-missing run longer than ``limit``."""
    out = np.zeros_like(all_missing)
    n = all_missing.size
    i = 0
    while i < n:
        if all_missing[i]:
            j = i
            while j < n and all_missing[j]:
                j += 1
            if j - i > limit:
                out[i:j] = True
            i = j
        else:
            i += 1
    return out


def _chol(S):
    try:
        return cho_factor(S, lower=True), False
    except LinAlgError:
        ridge = _RIDGE * np.diag(np.diag(S)) + _RIDGE * np.eye(len(S)) * (np.trace(S) / len(S) or 1.0)
        return cho_factor(S + ridge, lower=True), True


def _regularise(sigma):
    """Ridge ``sigma`` when it is numerically singular."""
    w = np.linalg.eigvalsh(sigma)
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        return sigma + _RIDGE * np.diag(np.diag(sigma)) + 1e-300, True
    return sigma, False


class _Patterns:
    """Rows grouped by their missingness pattern."""

    def __init__(self, obs):
        keys, inverse = np.unique(obs, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        self.groups = [(keys[g].astype(bool), np.flatnonzero(inverse == g)) for g in range(len(keys))]


def _e_step(X, obs, M, sigma, patterns):
    n, k = X.shape
    Xhat = np.where(obs, X, M)
    C = np.zeros((k, k))
    loglik = 0.0
    ridged = False
    for pat, rows in patterns.groups:
        o = np.flatnonzero(pat)
        m = np.flatnonzero(~pat)
        if o.size == 0:
            C += rows.size * sigma
            continue
        S_oo = sigma[np.ix_(o, o)]
        cf, r = _chol(S_oo)
        ridged |= r
        resid = X[np.ix_(rows, o)] - M[np.ix_(rows, o)]
        sol = cho_solve(cf, resid.T)
        logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
        loglik -= 0.5 * (rows.size * (o.size * _LOG2PI + logdet) + float(np.sum(resid.T * sol)))
        if m.size:
            S_mo = sigma[np.ix_(m, o)]
            Xhat[np.ix_(rows, m)] = M[np.ix_(rows, m)] + (S_mo @ sol).T
            cond = sigma[np.ix_(m, m)] - S_mo @ cho_solve(cf, S_mo.T)
            C[np.ix_(m, m)] += rows.size * cond
    return Xhat, C, loglik, ridged


def _gls_trends(Xhat, bases, gram, sigma):
    """Spline coefficients maximising the complete-data likelihood given ``sigma``."""
    k = Xhat.shape[1]
    sizes = [b.shape[1] for b in bases]
    if len(set(sizes)) == 1:
        # identical regressors: GLS reduces to column-wise OLS
        B = bases[0]
        return B @ np.linalg.solve(gram[0][0], B.T @ Xhat)
    W = np.linalg.inv(sigma)
    offs = np.concatenate([[0], np.cumsum(sizes)])
    A = np.zeros((offs[-1], offs[-1]))
    rhs = np.zeros(offs[-1])
    BtX = [[bases[i].T @ Xhat[:, j] for j in range(k)] for i in range(k)]
    for i in range(k):
        for j in range(k):
            A[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = W[i, j] * gram[i][j]
            rhs[offs[i]:offs[i + 1]] += W[i, j] * BtX[i][j]
    beta = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return np.column_stack([bases[i] @ beta[offs[i]:offs[i + 1]] for i in range(k)])


def spline_em_fit(p: Panel, cfg: SplineEmConfig = SplineEmConfig()) -> SplineEmResult:
    """Run spline-EM on ``p`` and return the completed panel with diagnostics."""
    n, k = p.shape
    if k < 2:
        raise ValueError("spline-EM needs at least two columns")
    counts = p.present.sum(axis=0)
    for name, c in zip(p.names, counts):
        if c < MIN_OBSERVATIONS:
            raise TooFewObservations(f"{name}: {int(c)} present values, need {MIN_OBSERVATIONS}")
    if p.complete:
        return SplineEmResult(p, [], True, 0, {}, np.zeros(p.shape, dtype=bool))

    blank = _blank_runs(~p.present.any(axis=1), cfg.max_blank_run)
    keep = ~blank
    X = np.where(p.present, p.values, 0.0)
    obs = p.present.copy()

    dfs = {}
    bases = []
    for j, name in enumerate(p.names):
        rows = np.flatnonzero(obs[:, j])
        if cfg.spline_df == "auto":
            df = gcv_df(X[rows, j], rows, n)
        else:
            df = int(round(float(cfg.spline_df)))
            df = max(4, min(df, rows.size - 2))
        dfs[name] = df
        bases.append(spline_basis(n, df))

    Xk, obsk = X[keep], obs[keep]
    bases_k = [b[keep] for b in bases]
    gram = [[bases_k[i].T @ bases_k[j] for j in range(k)] for i in range(k)]
    patterns = _Patterns(obsk)

    # start: per-column OLS trend on observed rows, residual covariance from
    # the trend-filled panel
    M = np.empty_like(Xk)
    for j in range(k):
        rows = obsk[:, j]
        coef = np.linalg.lstsq(bases_k[j][rows], Xk[rows, j], rcond=None)[0]
        M[:, j] = bases_k[j] @ coef
    R = np.where(obsk, Xk - M, 0.0)
    sigma = (R.T @ R) / np.maximum(obsk.T.astype(float) @ obsk.astype(float), 1.0)
    sigma = 0.5 * (sigma + sigma.T)
    # pairwise estimates need not be PSD; fall back to the diagonal
    if np.linalg.eigvalsh(sigma)[0] <= 0:
        sigma = np.diag(np.diag(sigma))

    trace = []
    converged = False
    warned = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        sigma, ridged = _regularise(sigma)
        Xhat, C, ll, ridged2 = _e_step(Xk, obsk, M, sigma, patterns)
        if (ridged or ridged2) and not warned:
            warnings.warn("residual covariance is singular; adding a 1e-8 ridge",
                          SingularCovarianceWarning, stacklevel=2)
            warned = True
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= cfg.tol * abs(trace[-2]):
            converged = True
            break
        M = _gls_trends(Xhat, bases_k, gram, sigma)
        R = Xhat - M
        sigma = (R.T @ R + C) / Xk.shape[0]
        sigma = 0.5 * (sigma + sigma.T)

    if not converged:
        warnings.warn(f"spline-EM stopped after {cfg.max_iter} iterations without converging",
                      NonConverged, stacklevel=2)

    values = p.values.copy()
    filled = np.where(p.present[keep], p.values[keep], Xhat)
    values[keep] = filled
    present = p.present.copy()
    present[keep] = True
    unfilled = ~present
    return SplineEmResult(Panel(p.index, p.names, values, present), trace, converged, it,
                          dfs, unfilled, sigma)


def spline_em_impute(p: Panel, cfg: SplineEmConfig = SplineEmConfig()) -> Panel:
    """Impute missing cells of ``p`` by spline-EM; present cells are untouched."""
    return spline_em_fit(p, cfg).panel
