import json

import numpy as np
import pytest

from simulate import daily_index, wind_magnitude_panel
from stormcast.boost import (BoostedModel, BoostParams, ConfusionMatrix, FeatureMatrix, WindowSpec,
                             build_features, default_threshold, evaluate_binary, evaluate_regression,
                             fit, importance, importance_csv, predict)
from stormcast.errors import DegenerateLabels, MissingValues, SchemaMismatch, TooShort
from stormcast.series import Panel


def matrix(X, y, task="regression"):
    X = np.asarray(X, float).reshape(len(y), -1)
    return FeatureMatrix(X, [f"f{j}" for j in range(X.shape[1])], np.asarray(y, float), task=task)


def reference_tree(X, g, h, lam, gamma, mcw, depth):
    """Loop-based exact greedy builder; returns the leaf value reached by every row."""
    out = np.empty(len(g))

    def grow(rows, d):
        G, H = g[rows].sum(), h[rows].sum()
        best = None
        if d > 0:
            for f in range(X.shape[1]):
                vals = np.unique(X[rows, f])
                for a, b in zip(vals[:-1], vals[1:]):
                    thr = (a + b) / 2
                    L = rows[X[rows, f] < thr]
                    R = rows[X[rows, f] >= thr]
                    hl, hr = h[L].sum(), h[R].sum()
                    if hl < mcw or hr < mcw:
                        continue
                    gl, gr = g[L].sum(), g[R].sum()
                    gain = 0.5 * (gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - G ** 2 / (H + lam))
                    if best is None or gain > best[0] + 1e-12:
                        best = (gain, L, R)
        if best is None or not best[0] > gamma:
            out[rows] = -G / (H + lam)
            return
        grow(best[1], d - 1)
        grow(best[2], d - 1)

    grow(np.arange(len(g)), depth)
    return out


def test_feature_counts():
    p = Panel.from_arrays(daily_index(10), {"MAG": np.arange(10.0)})
    fm = build_features(p, WindowSpec(window=3))
    assert fm.X.shape == (7, 3) and fm.names == ["MAG.l1", "MAG.l2", "MAG.l3"]
    np.testing.assert_array_equal(fm.X[0], [2.0, 1.0, 0.0])
    np.testing.assert_array_equal(fm.y, np.arange(3.0, 10.0))
    cols = {f"c{j}": np.zeros(20) for j in range(13)}
    cols["MAG"] = np.zeros(20)
    assert build_features(Panel.from_arrays(daily_index(20), cols), WindowSpec()).X.shape[1] == 98


def test_binary_labels_and_threshold():
    p = Panel.from_arrays(daily_index(5), {"MAG": [0.0, 0.0, 52.0, 49.0, 50.0]})
    fm = build_features(p, WindowSpec(window=1, task="binary", threshold=50.0))
    np.testing.assert_array_equal(fm.y, [0, 1, 0, 1])
    assert default_threshold([0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]) == pytest.approx(9.1)
    with pytest.raises(DegenerateLabels):
        default_threshold([0.0, 0.0])
    with pytest.raises(ValueError):
        WindowSpec(task="binary")
    with pytest.raises(ValueError):
        WindowSpec(threshold=3.0)


def test_feature_errors():
    p = Panel.from_arrays(daily_index(3), {"MAG": [1.0, 2.0, 3.0]})
    with pytest.raises(TooShort):
        build_features(p, WindowSpec(window=3))
    q = Panel.from_arrays(daily_index(5), {"MAG": [1.0, np.nan, 3.0, 4.0, 5.0]})
    with pytest.raises(MissingValues):
        build_features(q, WindowSpec(window=1))


def test_four_point_oracle():
    fm = matrix([1, 2, 3, 4], [0, 0, 4, 4])
    m = fit(fm, BoostParams(rounds=1, eta=1.0, max_depth=1, reg_lambda=0.0, gamma=0.0, base_score=0.0))
    t = m.trees[0]
    assert t.left[0] >= 0 and 2 < t.threshold[0] < 3
    assert sorted(t.value[[t.left[0], t.right[0]]]) == [0.0, 4.0]
    assert t.gain[0] == pytest.approx(8.0)
    np.testing.assert_allclose(predict(m, fm), [0, 0, 4, 4])


def test_trace_oracle_leaf_values():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 6, size=(60, 3)).astype(float)
    y = X[:, 0] * 2 - X[:, 2] + rng.normal(0, 0.5, 60)
    params = BoostParams(rounds=1, eta=1.0, max_depth=3, reg_lambda=1.0, min_child_weight=2.0)
    m = fit(matrix(X, y), params)
    g = m.base_score - y
    want = reference_tree(X, g, np.ones(60), 1.0, 0.0, 2.0, 3)
    np.testing.assert_allclose(m.trees[0].predict(X), want, atol=1e-12)


def test_empty_ensemble_and_sigmoid():
    fm = matrix(np.arange(6), [1, 2, 3, 4, 5, 6])
    m = fit(fm, BoostParams(rounds=0))
    np.testing.assert_allclose(predict(m, fm), 3.5)
    b = fit(matrix(np.arange(6), [0, 1, 0, 1, 0, 1], "binary"), BoostParams(rounds=0, base_score=0.0))
    np.testing.assert_allclose(predict(b, matrix(np.arange(6), np.zeros(6), "binary")), 0.5)


@pytest.mark.parametrize("task", ["regression", "binary"])
def test_loss_is_monotone(task):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 5))
    y = X[:, 0] + np.sin(X[:, 1]) + rng.normal(0, 0.3, 300)
    if task == "binary":
        y = (y > 0.5).astype(float)
    m = fit(matrix(X, y, task), BoostParams(rounds=40, max_depth=3))
    assert len(m.train_loss) == 41
    assert np.all(np.diff(m.train_loss) <= 1e-12)


def test_constant_feature_makes_leaf_and_gains_exceed_gamma():
    m = fit(matrix(np.ones(10), np.arange(10.0)), BoostParams(rounds=3))
    assert all(t.left[0] < 0 for t in m.trees)
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 4))
    m = fit(matrix(X, X[:, 1] + rng.normal(0, 0.1, 200)), BoostParams(rounds=10, gamma=0.5))
    for t in m.trees:
        inner = t.left >= 0
        assert np.all(t.gain[inner] > 0.5)


def test_permutation_invariance_and_schema():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(150, 4))
    fm = matrix(X, X[:, 2] ** 2)
    m = fit(fm, BoostParams(rounds=15))
    perm = [2, 0, 3, 1]
    shuffled = FeatureMatrix(X[:, perm], [fm.names[j] for j in perm], fm.y)
    np.testing.assert_array_equal(predict(m, fm), predict(m, shuffled))
    with pytest.raises(SchemaMismatch):
        predict(m, FeatureMatrix(X, ["a", "b", "c", "d"], fm.y))
    with pytest.raises(SchemaMismatch):
        predict(m, FeatureMatrix(X[:, :3], fm.names[:3], fm.y))


def test_determinism():
    p = wind_magnitude_panel(4, n=200)
    fm = build_features(p, WindowSpec(window=3))
    a = fit(fm, BoostParams(rounds=10)).to_json()
    b = fit(fm, BoostParams(rounds=10)).to_json()
    assert a == b


def test_single_class_rejected():
    with pytest.raises(DegenerateLabels):
        fit(matrix(np.arange(5), np.zeros(5), "binary"))


def test_importance():
    fm = matrix([1, 2, 3, 4], [0, 0, 4, 4])
    m = fit(fm, BoostParams(rounds=1, eta=1.0, max_depth=1, reg_lambda=0.0))
    assert importance(m) == [("f0", pytest.approx(8.0), 1)]
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 3))
    X[:, 2] = 0.0
    m = fit(matrix(X, X[:, 0] + 0.5 * X[:, 1]), BoostParams(rounds=20))
    ranked = importance(m)
    assert "f2" not in [r[0] for r in ranked]
    total = sum(float(t.gain[t.left >= 0].sum()) for t in m.trees)
    assert sum(r[1] for r in ranked) == pytest.approx(total, rel=1e-12)
    assert [r[1] for r in ranked] == sorted((r[1] for r in ranked), reverse=True)
    assert importance_csv(ranked).splitlines()[0] == "feature,total_gain,split_count,share"


def test_lagged_wind_ranks_first():
    fm = build_features(wind_magnitude_panel(6), WindowSpec(window=7))
    assert importance(fit(fm, BoostParams(rounds=30)))[0][0] == "wspd.l1"


def test_json_round_trip():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(100, 3))
    fm = matrix(X, (X[:, 0] > 0).astype(float), "binary")
    m = fit(fm, BoostParams(rounds=8))
    back = BoostedModel.from_dict(json.loads(m.to_json()))
    np.testing.assert_array_equal(predict(m, fm), predict(back, fm))
    assert json.loads(m.to_json())["schema_version"] == 1


def test_regression_metrics():
    assert evaluate_regression([1, 2], [1, 2]) == {"rmse": 0.0, "mae": 0.0}
    assert evaluate_regression([3, -4], [0, 0])["rmse"] == pytest.approx(3.5355339059327378, abs=1e-12)
    pred = [2.5, 0.0, 2.0, 8.0, 4.0]
    truth = [3.0, -0.5, 2.0, 7.0, 6.0]
    # squared errors 0.25, 0.25, 0, 1, 4 -> mean 1.1; absolute errors sum to 4
    r = evaluate_regression(pred, truth)
    assert abs(r["rmse"] - np.sqrt(1.1)) < 1e-12 and abs(r["mae"] - 0.8) < 1e-12


def test_confusion_matrix():
    cm = ConfusionMatrix(tp=236, fp=696, fn=137, tn=2657)
    assert cm.table() == [[2657, 137], [696, 236]]
    assert round(cm.tpr_high, 3) == 0.633 and round(cm.tpr_low, 3) == 0.792
    r = evaluate_binary(np.array([0.9, 0.1, 0.8, 0.2]), np.array([1, 0, 1, 0]))
    assert r["tpr_high"] == r["tpr_low"] == r["accuracy"] == 1.0
    r = evaluate_binary(np.array([0.5, 0.49]), np.array([0, 1]))
    assert (r["confusion"].fp, r["confusion"].fn) == (1, 1)
    with pytest.raises(ValueError):
        evaluate_binary([0.5], [1], cutoff=1.0)
