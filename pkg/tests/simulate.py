"""Seeded simulators shared by the unit and acceptance tests."""

import numpy as np

from stormcast.series import Panel


def daily_index(n, start="2000-01-01"):
    return np.datetime64(start, "m") + np.arange(n) * np.timedelta64(1, "D")


def ar1_pair(seed, n=730, phi=0.7, rho=0.9):
    """Two stationary AR(1) series whose cross-correlation is ``rho``."""
    rng = np.random.default_rng(seed)
    cov = np.array([[1.0, rho], [rho, 1.0]])
    e = rng.multivariate_normal(np.zeros(2), cov, size=n)
    x = np.empty((n, 2))
    x[0] = e[0] / np.sqrt(1 - phi ** 2)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return Panel.from_arrays(daily_index(n), {"a": x[:, 0], "b": x[:, 1]})


def var_sim(seed, A, n=1000, burn=200, cov=None, trend=None):
    """Simulate y_t = sum_i A_i y_{t-i} (+ trend * t) + e_t."""
    rng = np.random.default_rng(seed)
    k = A[0].shape[0]
    cov = np.eye(k) if cov is None else cov
    e = rng.multivariate_normal(np.zeros(k), cov, size=n + burn)
    y = np.zeros((n + burn, k))
    for t in range(len(A), n + burn):
        y[t] = e[t] + sum(A[i] @ y[t - 1 - i] for i in range(len(A)))
    y = y[burn:]
    if trend is not None:
        y = y + np.outer(np.arange(1, n + 1), trend)
    return y


def panel_from(y, names):
    return Panel.from_arrays(daily_index(y.shape[0]), {n: y[:, j] for j, n in enumerate(names)})


def wind_magnitude_panel(seed, n=400, extra=3):
    """Panel where MAG_t = 3 * wspd_{t-1} + noise, plus unrelated AR(1) columns."""
    rng = np.random.default_rng(seed)
    cols = {}
    w = np.empty(n)
    w[0] = 6.0
    for t in range(1, n):
        w[t] = 6.0 + 0.6 * (w[t - 1] - 6.0) + rng.normal(0, 1.5)
    cols["wspd"] = w
    for j in range(extra):
        z = np.empty(n)
        z[0] = 0.0
        for t in range(1, n):
            z[t] = 0.6 * z[t - 1] + rng.normal()
        cols[f"x{j}"] = z
    mag = np.zeros(n)
    mag[1:] = 3.0 * w[:-1] + rng.normal(0, 1.0, n - 1)
    cols["MAG"] = mag
    return Panel.from_arrays(daily_index(n), cols)
