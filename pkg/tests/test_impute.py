import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stormcast.errors import IncompleteCandidate, MaskTooAggressive, NonConverged, TooFewObservations
from stormcast.impute import (MaskSpec, MaskedCell, SplineEmConfig, apply_mask, fit_state_space,
                              kalman_impute, kalman_impute_panel, score_imputation, spline_em_fit,
                              spline_em_impute)
from stormcast.impute.spline_em import gcv_df, spline_basis
from stormcast.series import Panel, Series

from simulate import ar1_pair, daily_index


def test_constant_series_gap():
    # ten present points is the fitting floor, so the constant example runs at length 12
    s = Series.from_values("c", [5.0] * 5 + [np.nan] + [5.0] * 6)
    out = kalman_impute(s)
    assert abs(out.values[5] - 5.0) < 1e-6 and out.complete


def test_ramp_local_linear_trend():
    v = np.arange(1.0, 21.0)
    v[9] = np.nan
    out = kalman_impute(Series.from_values("r", v), "local_linear_trend")
    assert abs(out.values[9] - 10.0) < 0.1


def test_random_walk_beats_locf():
    rng = np.random.default_rng(3)
    walk = np.cumsum(rng.normal(size=500))
    hide = rng.random(500) < 0.10
    hide[0] = False
    s = Series.from_values("w", np.where(hide, np.nan, walk))
    filled = kalman_impute(s).values
    locf = s.values.copy()
    for t in range(1, 500):
        if np.isnan(locf[t]):
            locf[t] = locf[t - 1]
    rmse = lambda f: np.sqrt(np.mean((f[hide] - walk[hide]) ** 2))  # noqa: E731
    assert rmse(filled) < rmse(locf)


def test_kalman_present_unchanged_and_complete_passthrough():
    rng = np.random.default_rng(1)
    v = np.cumsum(rng.normal(size=80))
    v[[5, 6, 40]] = np.nan
    s = Series.from_values("x", v)
    out = kalman_impute(s)
    np.testing.assert_array_equal(out.values[s.present], s.values[s.present])
    full = Series.from_values("x", np.arange(30.0))
    assert kalman_impute(full) is full


def test_kalman_too_few():
    with pytest.raises(TooFewObservations):
        kalman_impute(Series.from_values("x", [1.0] * 9 + [np.nan]))
    with pytest.raises(ValueError):
        fit_state_space(Series.from_values("x", np.arange(20.0)), "arima")


def test_fitted_variances_positive():
    rng = np.random.default_rng(2)
    m = fit_state_space(Series.from_values("x", np.cumsum(rng.normal(size=200)) + rng.normal(size=200)))
    assert m.observation_variance > 0 and all(v > 0 for v in m.state_variances)
    assert np.isfinite(m.loglik)


def test_kalman_panel_columnwise():
    p = Panel.from_arrays(daily_index(30), {"a": np.r_[np.arange(10.0), np.nan, np.arange(11.0, 30)],
                                            "b": np.ones(30)})
    out = kalman_impute_panel(p)
    assert out.complete and np.array_equal(out.values[:, 1], np.ones(30))


def test_spline_em_exact_relation():
    rng = np.random.default_rng(0)
    n = 200
    a = np.sin(np.arange(n) / 7.0) * 3 + rng.normal(0, 0.5, n)
    b = 2 * a
    hide = rng.random(n) < 0.15
    p = Panel.from_arrays(daily_index(n), {"A": np.where(hide, np.nan, a), "B": b})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = spline_em_impute(p)
    assert np.max(np.abs(out.values[hide, 0] - b[hide] / 2)) < 1e-3


def test_spline_em_identity_on_complete():
    p = ar1_pair(0, n=100)
    out = spline_em_impute(p)
    assert out.equals(p) and np.array_equal(out.values, p.values)


def test_spline_em_beats_kalman_on_correlated_pair():
    p = ar1_pair(11)
    masked, truth = apply_mask(p, MaskSpec(point_fraction=0.10, rng_seed=11))
    report = score_imputation(truth, {"kalman": kalman_impute_panel(masked),
                                      "spline_em": spline_em_impute(masked)})
    for col in ("a", "b"):
        assert report.scores["spline_em"][col]["rmse"] < report.scores["kalman"][col]["rmse"]
    assert report.winner == "spline_em"


def test_em_ascent_and_present_cells():
    p = ar1_pair(5)
    masked, _ = apply_mask(p, MaskSpec(point_fraction=0.2, rng_seed=5))
    res = spline_em_fit(masked)
    assert np.all(np.diff(res.loglik) >= -1e-9)
    assert res.converged and res.n_iter == len(res.loglik)
    np.testing.assert_array_equal(res.panel.values[masked.present], masked.values[masked.present])
    assert res.panel.complete


def test_em_nonconverged_warning():
    masked, _ = apply_mask(ar1_pair(5), MaskSpec(point_fraction=0.2, rng_seed=5))
    with pytest.warns(NonConverged):
        res = spline_em_fit(masked, SplineEmConfig(max_iter=2, tol=1e-12))
    assert not res.converged and res.panel.complete


def test_long_blank_run_stays_missing():
    p = ar1_pair(2, n=300)
    v = p.values.copy()
    v[100:140] = np.nan          # 40-row all-missing run
    v[200:210] = np.nan          # 10-row run is filled
    out = spline_em_fit(p.with_values(v))
    assert out.unfilled[100:140].all() and not out.unfilled[200:210].any()
    assert not out.panel.present[100:140].any() and out.panel.present[200:210].all()


def test_spline_em_preconditions():
    p = ar1_pair(0, n=50)
    with pytest.raises(ValueError):
        spline_em_impute(p.select(["a"]))
    v = p.values.copy()
    v[5:, 0] = np.nan
    with pytest.raises(TooFewObservations):
        spline_em_impute(p.with_values(v))
    with pytest.raises(ValueError):
        SplineEmConfig(max_iter=0)


def test_gcv_df_range():
    rng = np.random.default_rng(0)
    n = 300
    rows = np.arange(n)
    y = np.sin(rows / 20.0) + rng.normal(0, 0.1, n)
    df = gcv_df(y, rows, n)
    assert 4 <= df <= 30
    B = spline_basis(n, df)
    assert B.shape == (n, df) and np.allclose(B.sum(axis=1), 1.0)


def full_column(n=1000):
    return Panel.from_arrays(daily_index(n), {"x": np.arange(n, dtype=float)})


def test_mask_noop_and_determinism():
    p = ar1_pair(0, n=100)
    out, truth = apply_mask(p, MaskSpec(point_fraction=0.0))
    assert out.equals(p) and truth == []
    a = apply_mask(p, MaskSpec(point_fraction=0.3, block_count=2, block_length=5, rng_seed=4))
    b = apply_mask(p, MaskSpec(point_fraction=0.3, block_count=2, block_length=5, rng_seed=4))
    assert a[0].equals(b[0]) and a[1] == b[1]


def test_mask_fraction_count():
    # 0.12 of 1000 cells: 120 expected, binomial sd ~10.3; allow four sd
    _, truth = apply_mask(full_column(), MaskSpec(point_fraction=0.12, rng_seed=0))
    assert abs(len(truth) - 120) <= 41


def test_mask_only_present_cells_and_blocks():
    p = ar1_pair(1, n=200)
    v = p.values.copy()
    v[::7, 0] = np.nan
    p = p.with_values(v)
    out, truth = apply_mask(p, MaskSpec(point_fraction=0.0, block_count=1, block_length=12, rng_seed=3))
    for c in truth:
        assert p.present[c.row, p.col(c.column)] and c.value == p.values[c.row, p.col(c.column)]
    rows = sorted(c.row for c in truth)
    assert len({c.column for c in truth}) == 1 and rows[-1] - rows[0] <= 11


def test_mask_too_aggressive():
    p = Panel.from_arrays(daily_index(12), {"x": np.arange(12.0)})
    with pytest.raises(MaskTooAggressive):
        apply_mask(p, MaskSpec(point_fraction=0.5, rng_seed=0))


def test_scoring_arithmetic():
    p = Panel.from_arrays(daily_index(3), {"x": [0.0, 0.0, 0.0]})
    truth = [MaskedCell(0, "x", 0.0), MaskedCell(1, "x", 0.0)]
    cand = p.with_values(np.array([[3.0], [-4.0], [0.0]]))
    r = score_imputation(truth, {"m": cand, "exact": p})
    assert r.scores["m"]["x"]["mae"] == 3.5
    assert abs(r.scores["m"]["x"]["rmse"] - np.sqrt(12.5)) < 1e-12
    assert r.scores["exact"]["__all__"] == {"rmse": 0.0, "mae": 0.0, "n": 2}
    assert r.winner == "exact"


def test_scoring_ties_and_incomplete():
    p = Panel.from_arrays(daily_index(2), {"x": [1.0, 2.0]})
    truth = [MaskedCell(0, "x", 0.0)]
    r = score_imputation(truth, {"zeta": p, "alpha": p})
    assert r.winner == "alpha"
    one = p.with_values(np.array([[1.0], [2.0]]))
    two = p.with_values(np.array([[2.0], [2.0]]))
    assert score_imputation(truth, {"first": one, "second": two}).winner == "first"
    with pytest.raises(IncompleteCandidate):
        score_imputation(truth, {"bad": p.with_values(np.array([[np.nan], [2.0]]))})


def test_report_json_schema():
    p = Panel.from_arrays(daily_index(2), {"x": [1.0, 2.0]})
    doc = json.loads(score_imputation([MaskedCell(0, "x", 0.0)], {"k": p}).to_json())
    assert doc["schema_version"] == 1 and doc["winner"] == "k"
    assert doc["scores"]["k"]["x"]["rmse"] >= doc["scores"]["k"]["x"]["mae"] >= 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.02, 0.3))
def test_present_cells_bit_identical(seed, frac):
    p = ar1_pair(seed, n=120)
    masked, _ = apply_mask(p, MaskSpec(point_fraction=frac, rng_seed=seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for out in (spline_em_impute(masked), kalman_impute_panel(masked)):
            assert out.complete
            np.testing.assert_array_equal(out.values[masked.present], masked.values[masked.present])
