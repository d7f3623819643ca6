"""Univariate structural state-space models for gap filling.

Two models are supported::

    local_level          y_t = mu_t + eps_t,   mu_{t+1} = mu_t + eta_t
    local_linear_trend   y_t = mu_t + eps_t,   mu_{t+1} = mu_t + nu_t + xi_t,
                                               nu_{t+1} = nu_t + zeta_t

Variances are fit by maximising the Gaussian prediction-error likelihood
(missing observations skip the update step), then each gap is filled with
the fixed-interval smoothed level.  The filter and smoother are written
out in scalar form; the state is at most two-dimensional and the loops run
inside a Nelder-Mead search, where numpy per-step overhead dominates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..errors import FitDiverged, TooFewObservations
from ..series import Series

KINDS = ("local_level", "local_linear_trend")
MIN_OBSERVATIONS = 10

_DIFFUSE = 1e7
_LOG_VAR_BOUNDS = (-30.0, 8.0)
# three fixed starting points per model, in log-variance units of the
# standardised series: (observation, level[, slope])
_STARTS = {
    "local_level": ((0.0, -2.0), (-3.0, 0.0), (-1.0, -6.0)),
    "local_linear_trend": ((0.0, -2.0, -6.0), (-3.0, 0.0, -8.0), (-1.0, -5.0, -3.0)),
}
_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class StateSpaceModel:
    """Fitted variances, in the units of the original series."""

    kind: str
    state_variances: tuple
    observation_variance: float
    loglik: float = float("nan")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")


def _filter_level(y, obs, h, q, smooth=False):
    n = len(y)
    first = obs.index(True)
    a, p = y[first], _DIFFUSE
    loglik = 0.0
    skip = 1
    if smooth:
        A, P, V, F, K = [0.0] * n, [0.0] * n, [0.0] * n, [0.0] * n, [0.0] * n
    for t in range(n):
        if smooth:
            A[t], P[t] = a, p
        if obs[t]:
            f = p + h
            v = y[t] - a
            k = p / f
            if skip:
                skip -= 1
            else:
                loglik -= 0.5 * (_LOG2PI + math.log(f) + v * v / f)
            if smooth:
                V[t], F[t], K[t] = v, f, k
            a += k * v
            p = p * (1.0 - k) + q
        else:
            p += q
    if not smooth:
        return loglik
    out = [0.0] * n
    r = 0.0
    for t in range(n - 1, -1, -1):
        if obs[t]:
            r = V[t] / F[t] + (1.0 - K[t]) * r
        out[t] = A[t] + P[t] * r
    return loglik, out


def _filter_trend(y, obs, h, ql, qb, smooth=False):
    n = len(y)
    first = obs.index(True)
    a1, a2 = y[first], 0.0
    p11, p12, p22 = _DIFFUSE, 0.0, _DIFFUSE
    loglik = 0.0
    skip = 2
    if smooth:
        store = [None] * n
    for t in range(n):
        if obs[t]:
            f = p11 + h
            v = y[t] - a1
            if skip:
                skip -= 1
            else:
                loglik -= 0.5 * (_LOG2PI + math.log(f) + v * v / f)
            if smooth:
                store[t] = (a1, p11, p12, p22, v, f)
            m1, m2 = p11, p12
            a1 += m1 * v / f
            a2 += m2 * v / f
            p11 -= m1 * m1 / f
            p12 -= m1 * m2 / f
            p22 -= m2 * m2 / f
        elif smooth:
            store[t] = (a1, p11, p12, p22, None, None)
        a1 = a1 + a2
        p11, p12 = p11 + 2.0 * p12 + p22 + ql, p12 + p22
        p22 = p22 + qb
    if not smooth:
        return loglik
    out = [0.0] * n
    r1 = r2 = 0.0
    for t in range(n - 1, -1, -1):
        a1, p11, p12, p22, v, f = store[t]
        if v is not None:
            k1, k2 = (p11 + p12) / f, p12 / f
            r1, r2 = v / f + (1.0 - k1) * r1 - k2 * r2, r1 + r2
        else:
            r1, r2 = r1, r1 + r2
        out[t] = a1 + p11 * r1 + p12 * r2
    return loglik, out


def _run(kind, y, obs, logvars, smooth=False):
    var = [math.exp(min(max(v, _LOG_VAR_BOUNDS[0]), _LOG_VAR_BOUNDS[1])) for v in logvars]
    if kind == "local_level":
        return _filter_level(y, obs, var[0], var[1], smooth)
    return _filter_trend(y, obs, var[0], var[1], var[2], smooth)


def _standardise(values, present):
    centre = float(values[present].mean())
    scale = float(values[present].std())
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    y = np.where(present, (values - centre) / scale, 0.0)
    return y.tolist(), present.tolist(), centre, scale


def fit_state_space(s: Series, kind: str = "local_level") -> StateSpaceModel:
    """Maximum-likelihood variances for ``kind`` on the present values of ``s``."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if int(s.present.sum()) < MIN_OBSERVATIONS:
        raise TooFewObservations(
            f"{s.name}: {int(s.present.sum())} present values, need {MIN_OBSERVATIONS}")
    y, obs, _, scale = _standardise(s.values, s.present)
    params, loglik = _maximise(kind, y, obs)
    var = np.exp(np.clip(params, *_LOG_VAR_BOUNDS)) * scale ** 2
    return StateSpaceModel(kind, tuple(float(v) for v in var[1:]), float(var[0]), loglik)


def _maximise(kind, y, obs):
    def objective(theta):
        ll = _run(kind, y, obs, theta)
        return -ll if np.isfinite(ll) else np.inf

    best = None
    for start in _STARTS[kind]:
        res = minimize(objective, np.array(start), method="Nelder-Mead",
                       options={"xatol": 1e-4, "fatol": 1e-9, "maxiter": 400 * len(start)})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitDiverged("likelihood could not be evaluated from any starting point")
    return np.clip(best.x, *_LOG_VAR_BOUNDS), -float(best.fun)


def kalman_smooth(s: Series, model: StateSpaceModel) -> np.ndarray:
    """Smoothed level at every timestamp of ``s`` under a fitted model."""
    y, obs, centre, scale = _standardise(s.values, s.present)
    logvars = [math.log(model.observation_variance / scale ** 2)]
    logvars += [math.log(v / scale ** 2) for v in model.state_variances]
    _, level = _run(model.kind, y, obs, logvars, smooth=True)
    return np.asarray(level) * scale + centre


def kalman_impute(s: Series, model_kind: str = "local_level") -> Series:
    """Fill the gaps of ``s`` with Kalman-smoothed levels.

    Present values are returned unchanged.  Raises ``TooFewObservations``
    below ten present points and ``FitDiverged`` if no likelihood
    evaluation succeeds.
    """
    if s.complete:
        return s
    model = fit_state_space(s, model_kind)
    level = kalman_smooth(s, model)
    values = np.where(s.present, s.values, level)
    return Series(s.name, s.times, values, np.ones(len(s), dtype=bool))


def kalman_impute_panel(p, model_kind: str = "local_level"):
    """Column-by-column :func:`kalman_impute` of a panel."""
    cols = [kalman_impute(s, model_kind) for s in p.columns()]
    if not cols:
        return p
    return p.with_values(np.column_stack([c.values for c in cols]),
                         np.column_stack([c.present for c in cols]))
