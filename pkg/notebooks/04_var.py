"""
Vector autoregression of magnitude and wave height
==================================================

Simulate a trending bivariate system, pick the lag order by AIC, print the
per-equation regression summaries and forecast ten steps ahead.
"""

import numpy as np

from stormcast.series import Panel
from stormcast.var import VarSpec, aic_table, fit_var, forecast, format_fit, select_lag

rng = np.random.default_rng(4)
n = 400
A1 = np.array([[0.35, 6.0], [0.002, 0.6]])
A2 = np.array([[0.15, -5.0], [0.0, 0.1]])
y = np.zeros((n, 2))
for t in range(2, n):
    y[t] = A1 @ y[t - 1] + A2 @ y[t - 2] + np.array([0.03, 0.0005]) * t + rng.normal(0, [10, 0.3])
days = np.datetime64("2000-01-01", "m") + np.arange(n) * np.timedelta64(1, "D")
panel = Panel.from_arrays(days, {"MAG": y[:, 0], "WVHT": y[:, 1]})

spec = VarSpec(lag_max=6, deterministic="trend")
print({k: round(v, 4) for k, v in aic_table(panel, spec).items()})
lag = select_lag(panel, spec)
fit = fit_var(panel, spec, lag)
print(format_fit(fit))

fc = forecast(fit, h=10)
for j, name in enumerate(fc.names):
    print(name, "forecast", np.round(fc.mean[:, j], 2), "SE", np.round(np.sqrt(fc.variance[:, j]), 2))
