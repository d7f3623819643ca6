"""Survival functions for the chi-square, Student t and F distributions.

All three reduce to regularized incomplete gamma / beta functions, which
are taken from :mod:`scipy.special` (Cephes continued-fraction kernels).
"""

import numpy as np
from scipy.special import betainc, gammaincc


def chi_square_sf(x, df):
    """P(X > x) for X ~ chi-square(df)."""
    x = np.asarray(x, dtype=float)
    out = gammaincc(0.5 * df, 0.5 * np.maximum(x, 0.0))
    return float(out) if out.ndim == 0 else out


def student_t_sf(t, df):
    """One-sided upper tail P(T > t) for T ~ t(df).

    The two-sided p-value of a t-ratio is ``2 * student_t_sf(abs(t), df)``.
    """
    t = np.asarray(t, dtype=float)
    # P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    out = np.where(t >= 0, tail, 1.0 - tail)
    return float(out) if out.ndim == 0 else out


def two_sided_t_pvalue(t, df):
    t = np.asarray(t, dtype=float)
    out = betainc(0.5 * df, 0.5, df / (df + t * t))
    return float(out) if out.ndim == 0 else out


def f_sf(f, df1, df2):
    """P(F > f) for F ~ F(df1, df2)."""
    f = np.maximum(np.asarray(f, dtype=float), 0.0)
    out = betainc(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f))
    return float(out) if out.ndim == 0 else out
