import xml.etree.ElementTree as ET

import numpy as np

from simulate import panel_from, var_sim
from stormcast import plotting
from stormcast.boost import BoostParams, FeatureMatrix, fit, importance
from stormcast.decompose import stl_decompose
from stormcast.series import Series
from stormcast.stattests import ccf
from stormcast.var import VarSpec, fit_var, forecast

SVG = "{http://www.w3.org/2000/svg}"


def figures():
    t = np.arange(48)
    y = t / 10 + np.sin(2 * np.pi * t / 12)
    s = Series.from_values("MAG", y)
    gappy = s.with_values(np.where(t % 7 == 3, np.nan, y), t % 7 != 3)
    yield "overlay", plotting.imputation_overlay(gappy, s)
    yield "stl", plotting.stl_figure(stl_decompose(s, 12))
    yield "ccf", plotting.ccf_figure(ccf(y, np.roll(y, 2), 6), "a & b <lagged>")
    v = fit_var(panel_from(var_sim(0, [np.eye(2) * 0.5], n=80), ["MAG", "WVHT"]), VarSpec(2, "const"), 1)
    yield "fit", plotting.var_fit_figure(v, "WVHT")
    yield "forecast", plotting.forecast_figure({"MAG": v.Y[:, 0], "WVHT": v.Y[:, 1]}, forecast(v, h=5),
                                               ["MAG", "WVHT"])
    X = np.column_stack([t, np.cos(t)]).astype(float)
    m = fit(FeatureMatrix(X, ["wspd.l1", "pres.l1"], y), BoostParams(rounds=5))
    yield "importance", plotting.importance_figure(importance(m))


def test_figures_are_valid_and_deterministic():
    first = dict(figures())
    second = dict(figures())
    for name, text in first.items():
        assert text == second[name], name
        root = ET.fromstring(text)
        assert root.tag == f"{SVG}svg"
        assert "nan" not in text and "inf" not in text


def test_overlay_colors_and_gaps():
    text = dict(figures())["overlay"]
    root = ET.fromstring(text)
    strokes = {e.get("stroke") for e in root.iter(f"{SVG}polyline")}
    assert {"black", "red"} <= strokes
    assert len([e for e in root.iter(f"{SVG}circle") if e.get("fill") == "red"]) == 7


def test_escaping_and_bars():
    figs = dict(figures())
    assert "a &amp; b &lt;lagged&gt;" in figs["ccf"]
    root = ET.fromstring(figs["importance"])
    assert len([e for e in root.iter(f"{SVG}rect") if e.get("fill") == "steelblue"]) >= 1


def test_save(tmp_path):
    text = dict(figures())["stl"]
    path = plotting.save(text, tmp_path / "stl.svg")
    assert path.read_bytes() == text.encode()
