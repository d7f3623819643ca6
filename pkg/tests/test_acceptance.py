"""Acceptance gate: one recorded PASS/FAIL line per criterion."""

import shutil
import time
import warnings
from pathlib import Path

import numpy as np

from simulate import ar1_pair, panel_from, var_sim, wind_magnitude_panel
from stormcast.boost import (BoostParams, ConfusionMatrix, FeatureMatrix, WindowSpec, build_features, fit,
                             importance, predict)
from stormcast.cli import main
from stormcast.decompose import stl_decompose
from stormcast.impute import (MaskSpec, apply_mask, kalman_impute_panel, score_imputation, spline_em_fit,
                              spline_em_impute)
from stormcast.ndbc import (SENTINELS, VARIABLES, format_ndbc, format_storm_events, parse_ndbc_file,
                            parse_storm_events_csv)
from stormcast.series import Series
from stormcast.stattests import adf_test, f_sf, ljung_box, student_t_sf
from stormcast.var import VarSpec, fit_var, forecast, select_lag

FIXTURES = Path(__file__).parent / "fixtures"
PIPELINE = FIXTURES / "pipeline"

A_VAR2 = [np.array([[0.5, 0.1], [0.0, 0.4]]), np.array([[-0.3, 0.0], [0.1, -0.2]])]


def test_c01_kernel_exactness(verdict):
    p1 = 2 * student_t_sf(6.692, 378)
    p2 = 2 * student_t_sf(2.713, 378)
    pf = f_sf(203.1, 13, 378)
    ok = abs(p1 / 7.97e-11 - 1) < 1e-2 and abs(p2 / 0.006970 - 1) < 1e-2 and pf < 2.2e-16
    verdict(1, "statistical kernels", ok, f"p(6.692)={p1:.4g}, p(2.713)={p2:.6f}, F p={pf:.3g}")


def test_c02_adjusted_r_squared(verdict):
    adj = 1 - (1 - 0.8748) * 391 / 378
    verdict(2, "adjusted R-squared identity", abs(adj - 0.8705) <= 5e-5, f"adj={adj:.6f}")


def test_c03_var_recovery(verdict):
    t0 = time.perf_counter()
    picked, covered = 0, 0
    for seed in range(100):
        p = panel_from(var_sim(seed, A_VAR2, n=1000), ["a", "b"])
        spec = VarSpec(6, "const")
        picked += select_lag(p, spec) == 2
        f = fit_var(p, spec, 2)
        for j, name in enumerate(f.names):
            s = f.summaries[name]
            truth = np.r_[A_VAR2[0][j], A_VAR2[1][j], 0.0]
            covered += bool(np.all(np.abs(s.estimate - truth) < 3 * s.std_error))
    secs = time.perf_counter() - t0
    ok = picked >= 90 and covered / 200 >= 0.99 and secs < 30
    verdict(3, "VAR recovery", ok, f"lag 2 chosen {picked}/100, equations within 3 SE "
            f"{covered}/200, {secs:.1f}s")


def test_c04_forecast_recursion(verdict):
    p = panel_from(var_sim(1, [np.array([[0.5, 0.1], [0.2, 0.3]])], n=400), ["a", "b"])
    f = fit_var(p, VarSpec(1, "none"), 1)
    A = f.coef
    last = np.array([0.7, -1.2])
    want = np.vstack([A @ last, A @ A @ last, A @ A @ A @ last])
    err = float(np.max(np.abs(forecast(f, last_obs=last[None, :], h=3).mean - want)))
    verdict(4, "forecast recursion", err < 1e-10, f"max error {err:.2e}")


def test_c05_c06_imputation(verdict):
    t0 = time.perf_counter()
    wins, ascent, intact = 0, True, True
    for seed in range(50):
        p = ar1_pair(seed, n=730, phi=0.7, rho=0.9)
        masked, truth = apply_mask(p, MaskSpec(point_fraction=0.12, rng_seed=seed))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = spline_em_fit(masked)
        ascent &= bool(np.all(np.diff(res.loglik) >= -1e-9))
        intact &= bool(np.array_equal(res.panel.values[masked.present], masked.values[masked.present]))
        rep = score_imputation(truth, {"kalman": kalman_impute_panel(masked), "spline_em": res.panel})
        wins += rep.scores["spline_em"]["__all__"]["rmse"] < rep.scores["kalman"]["__all__"]["rmse"]
    secs = time.perf_counter() - t0
    verdict(5, "imputation superiority", wins >= 45 and secs < 60, f"spline-EM wins {wins}/50, {secs:.1f}s")

    complete = ar1_pair(99, n=200)
    idem = spline_em_impute(complete).equals(complete) and kalman_impute_panel(complete).equals(complete)
    verdict(6, "imputation invariants", idem and intact and ascent,
            f"idempotent={idem}, present cells unchanged={intact}, EM ascent={ascent}")


def test_c07_stl(verdict):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        y = rng.normal(size=int(rng.integers(24, 120))) * 10
        for robust in (False, True):
            r = stl_decompose(Series.from_values("y", y), 12, robust=robust)
            worst = max(worst, float(np.max(np.abs(r.seasonal.values + r.trend.values + r.remainder.values - y))))
    t = np.arange(120)
    trend = t / 10.0
    r = stl_decompose(Series.from_values("y", trend + np.sin(2 * np.pi * t / 12)), 12)
    err = float(np.max(np.abs(r.trend.values[12:-12] - trend[12:-12])))
    verdict(7, "STL", worst < 1e-9 and err < 0.1, f"additivity error {worst:.1e}, interior trend error {err:.3f}")


def test_c08_adf_ljung_box(verdict):
    noise = sum(adf_test(np.random.default_rng(s).normal(size=500)).reject_at[0.01] for s in range(100))
    walk = sum(not adf_test(np.cumsum(np.random.default_rng(s).normal(size=500))).reject_at[0.05]
               for s in range(100))
    rng = np.random.default_rng(0)
    x = np.zeros(2000)
    e = rng.normal(size=2000)
    for t in range(1, 2000):
        x[t] = 0.9 * x[t - 1] + e[t]
    p_ar = ljung_box(x, 10).p_value
    q = ljung_box([3, 1, 4, 1, 5, 9, 2, 6, 5, 3], 2).Q
    q_err = abs(q - 1317926 / 4521015)
    ok = noise >= 95 and walk >= 90 and p_ar < 1e-15 and q_err < 1e-10
    verdict(8, "ADF and Ljung-Box", ok, f"white noise rejects {noise}/100, random walk retains {walk}/100, "
            f"AR(1) LB p={p_ar:.1e}, fixture Q error {q_err:.1e}")


def test_c09_boost(verdict):
    fm = FeatureMatrix(np.array([[1.0], [2.0], [3.0], [4.0]]), ["x"], np.array([0.0, 0.0, 4.0, 4.0]))
    m = fit(fm, BoostParams(rounds=1, eta=1.0, max_depth=1, reg_lambda=0.0, gamma=0.0, base_score=0.0))
    t = m.trees[0]
    leaves = sorted(float(v) + 0.0 for v in t.value[[t.left[0], t.right[0]]])
    oracle = t.threshold[0] == 2.5 and leaves == [0.0, 4.0] and np.array_equal(predict(m, fm), [0, 0, 4, 4])

    long = build_features(wind_magnitude_panel(0), WindowSpec(7))
    loss = np.array(fit(long, BoostParams(rounds=200)).train_loss)
    monotone = bool(np.all(np.diff(loss) <= 0))

    top = sum(importance(fit(build_features(wind_magnitude_panel(s), WindowSpec(7)),
                             BoostParams(rounds=30)))[0][0] == "wspd.l1" for s in range(100))
    verdict(9, "GBT oracle", oracle and monotone and top >= 95,
            f"4-point split {t.threshold[0]} leaves {leaves}, 200-round loss monotone={monotone}, "
            f"wspd.l1 first {top}/100")


def test_c10_confusion(verdict):
    cm = ConfusionMatrix(tp=236, fp=696, fn=137, tn=2657)
    ok = abs(cm.tpr_high - 0.6327) <= 1e-4 and abs(cm.tpr_low - 0.7924) <= 1e-4
    verdict(10, "confusion arithmetic", ok, f"tpr_high={cm.tpr_high:.4f}, tpr_low={cm.tpr_low:.4f}")


def test_c11_reproducibility(verdict, tmp_path):
    t0 = time.perf_counter()
    outs = []
    for k in range(2):
        cfg = tmp_path / f"config{k}.toml"
        shutil.copy(PIPELINE / "config.toml", cfg)
        for d in ("buoy", "events"):
            if not (tmp_path / d).exists():
                shutil.copytree(PIPELINE / d, tmp_path / d)
        out = tmp_path / f"run{k}"
        assert main(["-q", "report", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    secs = (time.perf_counter() - t0) / 2
    files = sorted(f.relative_to(outs[0]) for f in outs[0].rglob("*") if f.is_file() and f.name != "timings.log")
    same = [f for f in files if (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()]
    other = sorted(f.relative_to(outs[1]) for f in outs[1].rglob("*") if f.is_file() and f.name != "timings.log")
    ok = files == other and len(same) == len(files) and secs < 120
    verdict(11, "pipeline reproducibility", ok, f"{len(same)}/{len(files)} files identical, {secs:.1f}s per run")


def test_c12_parsers(verdict):
    eras = ["42036h1995", "42036h2001", "42039h2005", "42039h2009"]
    golden = trips = 0
    sentinels = 0
    for name in eras:
        obs = parse_ndbc_file((FIXTURES / "ndbc" / f"{name}.txt").read_bytes(), name[:5])
        text = format_ndbc(obs)
        golden += text == (FIXTURES / "ndbc" / "canonical" / f"{name}.txt").read_text()
        trips += parse_ndbc_file(text, name[:5]) == obs
        sentinels += sum(getattr(o, v) in SENTINELS[v] for o in obs for v in VARIABLES
                         if getattr(o, v) is not None)
    ev = parse_storm_events_csv((FIXTURES / "storm_events.csv").read_bytes())
    ev_text = format_storm_events(ev)
    ev_ok = ev_text == (FIXTURES / "storm_events.canonical.csv").read_text() and parse_storm_events_csv(ev_text) == ev
    ok = golden == trips == len(eras) and ev_ok and sentinels == 0
    verdict(12, "parser conformance", ok, f"NDBC golden {golden}/4, round trips {trips}/4, "
            f"StormEvents round trip={ev_ok}, sentinels={sentinels}")
