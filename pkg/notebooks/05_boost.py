"""
Boosted trees on lagged weather windows
=======================================

Each day's storm magnitude is predicted from the previous week of every
column.  A chronological split keeps the future out of training.  The same
features then feed a High/Low intensity classifier.
"""

import numpy as np

from stormcast.boost import (BoostParams, WindowSpec, build_features, default_threshold, evaluate_binary,
                             evaluate_regression, fit, importance, predict)
from stormcast.series import Panel

rng = np.random.default_rng(5)
n = 1500
wind = np.empty(n)
wind[0] = 6
for t in range(1, n):
    wind[t] = 6 + 0.6 * (wind[t - 1] - 6) + rng.normal(0, 1.5)
pres = 1015 - 0.8 * (wind - 6) + rng.normal(0, 1, n)
mag = np.r_[0.0, np.where(wind[:-1] > 7, 20 + 4 * wind[:-1], 0.0)] + rng.normal(0, 2, n).clip(0)
days = np.datetime64("2000-01-01", "m") + np.arange(n) * np.timedelta64(1, "D")
panel = Panel.from_arrays(days, {"wspd": wind, "pres": pres, "MAG": mag})

fm = build_features(panel, WindowSpec(window=7))
train = fm.rows(np.arange(len(fm)) < 1000)
test = fm.rows(np.arange(len(fm)) >= 1000)
model = fit(train, BoostParams(rounds=100, max_depth=3))
print("train", evaluate_regression(predict(model, train), train.y))
print("test ", evaluate_regression(predict(model, test), test.y))
for name, gain, count in importance(model)[:5]:
    print(f"{name:8s} gain {gain:12.1f} splits {count}")

thr = default_threshold(train.target)
spec = WindowSpec(window=7, task="binary", threshold=thr)
fb = build_features(panel, spec)
clf = fit(fb.rows(slice(0, 1000)), BoostParams(rounds=100, max_depth=3))
ev = evaluate_binary(predict(clf, fb.rows(slice(1000, None))), fb.y[1000:])
print(f"threshold {thr:.1f}; confusion (rows predicted Low/High, columns truth):", ev["confusion"].table())
print(f"TPR High {ev['tpr_high']:.3f}, TPR Low {ev['tpr_low']:.3f}")
