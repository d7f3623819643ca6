"""Command-line pipeline: ingest, impute, trend tests, CCF, VAR and boosting.

Exit codes: 0 success, 2 missing input, 3 parse or config error, 4 every
download failed, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import gzip
import hashlib
import json
import logging
import re
import sys
import time
import urllib.error
import urllib.request
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .boost import (build_features, default_threshold, evaluate_binary, evaluate_regression, fit as fit_boost,
                    importance, importance_csv, predict, WindowSpec)
from .config import ConfigError, PipelineConfig, load_config
from .decompose import stl_decompose
from .errors import EmptyEventSet, FormatError, StormcastError
from .impute import apply_mask, kalman_impute, score_imputation, spline_em_fit
from .impute.kalman import MIN_OBSERVATIONS
from .ndbc import build_event_series, merge_panel, parse_ndbc_file, parse_storm_events_csv
from .series import Panel, Series, format_timestamp
from .stattests import adf_test, ccf, ljung_box, two_sided_t_pvalue
from .var import aic_table, fit_var, forecast, format_fit, select_lag

log = logging.getLogger("stormcast")

SCHEMA_VERSION = 1
BUOY_FILE = re.compile(r"^(?P<station>[A-Za-z0-9]+)h(?P<year>\d{4})\.txt(?:\.gz)?$", re.IGNORECASE)
STAGES = ("ingest", "impute", "trend", "ccf", "var", "boost")


class InputMissing(StormcastError):
    """A required input file or intermediate artifact does not exist."""


class FetchFailed(StormcastError):
    pass


# ---------------------------------------------------------------- helpers

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_bytes(path: Path) -> bytes:
    data = path.read_bytes()
    if path.suffix == ".gz" or data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _finite(x):
    """JSON-safe float (NaN and inf become None)."""
    x = float(x)
    return x if np.isfinite(x) else None


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


class Run:
    """Output directory, timings and the artifacts written so far."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.timings = []
        self.inputs = {}
        self.stages = []
        self.panel_raw = None
        self.panel = None

    def path(self, name) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def stage(self, name, fn):
        t0 = time.perf_counter()
        log.info("stage %s", name)
        result = fn(self)
        self.timings.append((name, time.perf_counter() - t0))
        self.stages.append(name)
        return result

    def load_panel(self, name, attr):
        p = self.out / name
        if not p.exists():
            raise InputMissing(f"{p}: no input files (run the previous stage first)")
        panel = Panel.from_csv(p)
        setattr(self, attr, panel)
        return panel

    def finish(self):
        """Write ``manifest.json`` (deterministic) and ``timings.log`` (wall clock)."""
        outputs = {}
        for f in sorted(self.out.rglob("*")):
            if f.is_file() and f.name not in ("manifest.json", "timings.log"):
                outputs[f.relative_to(self.out).as_posix()] = _sha256(f)
        manifest = {
            "schema_version": SCHEMA_VERSION, "tool_version": __version__,
            "config_sha256": self.cfg.digest(), "seeds": {"mask": self.cfg.impute.mask.rng_seed},
            "stages": self.stages, "inputs": dict(sorted(self.inputs.items())), "outputs": outputs,
        }
        _write_json(self.out / "manifest.json", manifest)
        with open(self.out / "timings.log", "w") as fh:
            for name, secs in self.timings:
                fh.write(f"{name}\t{secs:.3f}s\n")


# ---------------------------------------------------------------- stages

def _buoy_files(cfg: PipelineConfig):
    found = {}
    if cfg.buoy_dir.is_dir():
        for f in sorted(cfg.buoy_dir.iterdir()):
            m = BUOY_FILE.match(f.name)
            if m and m["station"] in cfg.stations:
                found.setdefault(m["station"], []).append(f)
    return found


def stage_ingest(run: Run) -> Panel:
    cfg = run.cfg
    files = _buoy_files(cfg)
    events_files = sorted(f for f in cfg.events_dir.glob("*.csv*")) if cfg.events_dir.is_dir() else []
    if not files and not events_files:
        raise InputMissing(f"no input files under {cfg.buoy_dir} or {cfg.events_dir}")
    absent = [s for s in cfg.stations if s not in files]
    if absent:
        raise InputMissing(f"no input files for stations {absent} in {cfg.buoy_dir}")
    if not events_files:
        raise InputMissing(f"no input files: no StormEvents CSV in {cfg.events_dir}")

    buoy = {}
    for station in cfg.stations:
        obs = []
        for f in files[station]:
            run.inputs[f"buoy/{f.name}"] = _sha256(f)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    obs.extend(parse_ndbc_file(_read_bytes(f), station))
            except FormatError as exc:
                exc.path = str(f)
                raise
        buoy[station] = obs
    events = []
    for f in events_files:
        run.inputs[f"events/{f.name}"] = _sha256(f)
        try:
            events.extend(parse_storm_events_csv(_read_bytes(f).decode("utf-8", errors="replace")))
        except FormatError as exc:
            exc.path = str(f)
            raise

    times = [o.time for obs in buoy.values() for o in obs]
    if not times:
        raise InputMissing("buoy files contain no observations")
    start = np.min(np.array(times, dtype="datetime64[m]")).astype("datetime64[D]")
    end = np.max(np.array(times, dtype="datetime64[m]")).astype("datetime64[D]")
    try:
        mag = build_event_series(events, cfg.event_types, cfg.event_states, cfg.fill, start, end)
    except EmptyEventSet as exc:
        raise InputMissing(f"no input files with matching events: {exc}") from None
    panel = merge_panel(buoy, mag, cfg.variables)
    keep = (panel.index >= start.astype("datetime64[m]")) & (panel.index <= end.astype("datetime64[m]"))
    panel = panel.rows(keep)
    panel.to_csv(run.path("panel_raw.csv"))
    _write_json(run.path("ingest.json"), {
        "schema_version": SCHEMA_VERSION,
        "rows": len(panel), "start": format_timestamp(panel.index[0]), "end": format_timestamp(panel.index[-1]),
        "columns": {n: {"present": int(panel.present[:, j].sum()), "missing": int((~panel.present[:, j]).sum())}
                    for j, n in enumerate(panel.names)},
        "events_parsed": len(events),
        "event_days": int((mag.values > 0).sum()),
        "inputs": dict(sorted(run.inputs.items())),
    })
    run.panel_raw = panel
    return panel


def _groups(cfg: PipelineConfig, names):
    """Column groups for joint imputation: neighbor stations sharing a variable."""
    out = []
    for var in cfg.variables:
        for g in cfg.neighbor_groups:
            cols = [f"{s}_{var}" for s in g if f"{s}_{var}" in names]
            if len(cols) >= 2:
                out.append(cols)
    return out


def _impute_kalman(panel: Panel, kind: str) -> Panel:
    values = panel.values.copy()
    for j, s in enumerate(panel.columns()):
        if not s.complete:
            values[:, j] = kalman_impute(s, kind).values
    return panel.with_values(values, np.ones(panel.shape, dtype=bool))


def _impute_spline(panel: Panel, cfg: PipelineConfig, traces=None) -> Panel:
    """Spline-EM within each neighbor group, then Kalman for whatever is left."""
    values = panel.values.copy()
    present = panel.present.copy()
    for cols in _groups(cfg, panel.names):
        sub = panel.select(cols)
        if sub.complete:
            continue
        res = spline_em_fit(sub, cfg.impute.spline)
        idx = [panel.col(c) for c in cols]
        values[:, idx] = res.panel.values
        present[:, idx] = res.panel.present
        if traces is not None:
            traces["+".join(cols)] = {"loglik": [_finite(v) for v in res.loglik], "n_iter": res.n_iter,
                                      "converged": res.converged, "df": res.df}
    return _impute_kalman(panel.with_values(values, present), cfg.impute.kalman_model)


def stage_impute(run: Run) -> Panel:
    cfg = run.cfg
    raw = run.panel_raw if run.panel_raw is not None else run.load_panel("panel_raw.csv", "panel_raw")
    counts = raw.present.sum(axis=0)
    dropped = [n for n, c in zip(raw.names, counts) if c < MIN_OBSERVATIONS]
    panel = raw.select([n for n in raw.names if n not in dropped])
    buoy_cols = [n for n in panel.names if n != "MAG"]
    buoy = panel.select(buoy_cols)

    report = None
    if not buoy.complete:
        masked, truth = apply_mask(buoy, cfg.impute.mask)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            candidates = {"kalman": _impute_kalman(masked, cfg.impute.kalman_model),
                          "spline_em": _impute_spline(masked, cfg)}
        report = score_imputation(truth, candidates)
    method = cfg.impute.method
    if method == "winner":
        method = report.winner if report is not None else "spline_em"

    traces = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        filled = _impute_spline(buoy, cfg, traces) if method == "spline_em" else \
            _impute_kalman(buoy, cfg.impute.kalman_model)
    for w in caught:
        log.warning("%s", w.message)
    mag = panel.select(["MAG"]) if "MAG" in panel.names else None
    if mag is not None and not mag.complete:
        mag = _impute_kalman(mag, cfg.impute.kalman_model)
    cols = {n: filled.values[:, j] for j, n in enumerate(filled.names)}
    if mag is not None:
        cols["MAG"] = mag.values[:, 0]
    done = Panel.from_arrays(panel.index, {n: cols[n] for n in panel.names})
    done.to_csv(run.path("panel.csv"))

    doc = {"schema_version": SCHEMA_VERSION, "method": method, "configured_method": cfg.impute.method,
           "dropped_columns": dropped, "mask": {"point_fraction": cfg.impute.mask.point_fraction,
                                                "block_count": cfg.impute.mask.block_count,
                                                "block_length": cfg.impute.mask.block_length,
                                                "seed": cfg.impute.mask.rng_seed},
           "comparison": report.to_dict() if report is not None else None,
           "spline_em": traces,
           "filled_cells": {n: int((~panel.present[:, j]).sum()) for j, n in enumerate(panel.names)}}
    _write_json(run.path("imputation_report.json"), doc)
    for j, n in enumerate(panel.names):
        if not panel.present[:, j].all():
            svg = plotting.imputation_overlay(panel.column(n), done.column(n))
            plotting.save(svg, run.path(f"imputation/{_slug(n)}.svg"))
    run.panel = done
    return done


def _completed(run: Run) -> Panel:
    return run.panel if run.panel is not None else run.load_panel("panel.csv", "panel")


def _require(panel: Panel, names, what):
    missing = [n for n in names if n not in panel.names]
    if missing:
        raise ConfigError(f"{what} refers to columns not in the panel: {missing}")


def trend_slope(y) -> dict:
    """OLS slope of ``y`` on 0..n-1 with its two-sided t-test."""
    y = np.asarray(y, dtype=float)
    n = y.size
    x = np.arange(n, dtype=float) - (n - 1) / 2.0
    b = float(x @ (y - y.mean()) / (x @ x))
    resid = y - y.mean() - b * x
    s2 = float(resid @ resid) / (n - 2)
    se = float(np.sqrt(s2 / (x @ x)))
    t = b / se if se > 0 else (np.inf if b else 0.0)
    p = float(two_sided_t_pvalue(t, n - 2)) if np.isfinite(t) else 0.0
    return {"slope": b, "std_error": se, "t": _finite(t), "p_value": p}


def stage_trend(run: Run) -> dict:
    cfg, tr = run.cfg, run.cfg.trend
    panel = _completed(run)
    _require(panel, ["MAG"], "trend")
    from .series import aggregate_monthly
    monthly = aggregate_monthly(panel.column("MAG"))
    res = stl_decompose(monthly, tr.period, tr.seasonal_window, tr.trend_window, tr.robust)
    adf = adf_test(monthly, tr.adf_regression)
    lb = ljung_box(monthly, min(tr.ljung_box_lags, len(monthly) - 1))
    slope = trend_slope(res.trend.values)
    doc = {"schema_version": SCHEMA_VERSION, "series": "MAG", "aggregation": "monthly mean",
           "n_months": len(monthly),
           "stl": {"period": tr.period, "seasonal_window": tr.seasonal_window,
                   "trend_window": tr.trend_window, "robust": tr.robust},
           "adf": adf.to_dict(), "ljung_box": lb.to_dict(), "trend_slope": slope,
           "increasing": bool(slope["slope"] > 0 and slope["p_value"] < 0.05)}
    _write_json(run.path("trend.json"), doc)
    res.to_csv(run.path("stl.csv"))
    plotting.save(plotting.stl_figure(res, "Monthly storm magnitude"), run.path("stl.svg"))
    return doc


def stage_ccf(run: Run) -> dict:
    cfg = run.cfg
    panel = _completed(run)
    pairs = list(cfg.ccf_pairs) or [("MAG", n) for n in panel.names if n != "MAG"]
    _require(panel, sorted({c for p in pairs for c in p}), "ccf.pairs")
    results = []
    for a, b in pairs:
        r = ccf(panel.column(a), panel.column(b), min(cfg.ccf_max_lag, len(panel) - 1))
        d = r.to_dict()
        d.update(a=a, b=b)
        results.append(d)
        plotting.save(plotting.ccf_figure(r, f"CCF: {a}[t+k] vs {b}[t]"),
                      run.path(f"ccf/{_slug(a)}__{_slug(b)}.svg"))
    doc = {"schema_version": SCHEMA_VERSION, "definition": "corr(a[t+k], b[t])", "pairs": results}
    _write_json(run.path("ccf.json"), doc)
    return doc


def stage_var(run: Run) -> dict:
    cfg = run.cfg
    panel = _completed(run)
    cols = list(cfg.var_columns) or ["MAG"] + [n for n in panel.names if n.endswith("_wvht")]
    _require(panel, cols, "var.columns")
    sub = panel.select(cols)
    table = aic_table(sub, cfg.var_spec)
    lag = select_lag(sub, cfg.var_spec)
    fit = fit_var(sub, cfg.var_spec, lag)
    fc = forecast(fit, h=cfg.var_horizon)
    run.path("var_summary.txt").write_text(format_fit(fit))
    doc = fit.to_dict()
    doc["aic"] = {str(k): _finite(v) for k, v in sorted(table.items())}
    doc["selected_lag"] = lag
    doc["stable"] = fit.is_stable()
    _write_json(run.path("var.json"), doc)
    fdoc = fc.to_dict()
    fdoc["schema_version"] = SCHEMA_VERSION
    _write_json(run.path("forecast.json"), fdoc)
    for name in cols:
        plotting.save(plotting.var_fit_figure(fit, name), run.path(f"var/fit_{_slug(name)}.svg"))
    history = {n: sub.values[:, j] for j, n in enumerate(sub.names)}
    plotting.save(plotting.forecast_figure(history, fc, cols), run.path("var/forecast.svg"))
    return doc


def default_boundary(index) -> np.datetime64:
    """Chronological split 20/35 of the way through the index, at a day boundary."""
    first = index[0].astype("datetime64[D]")
    span = int((index[-1].astype("datetime64[D]") - first).astype(int))
    return (first + np.timedelta64(int(round(span * 20 / 35)), "D")).astype("datetime64[m]")


def stage_boost(run: Run) -> dict:
    cfg, bs = run.cfg, run.cfg.boost
    panel = _completed(run)
    cols = list(bs.columns) or list(panel.names)
    if "MAG" not in cols:
        cols.append("MAG")
    _require(panel, cols, "boost.columns")
    panel = panel.select(cols)
    fm = build_features(panel, WindowSpec(bs.window, "MAG"))
    boundary = np.datetime64(cfg.split_boundary, "D").astype("datetime64[m]") if cfg.split_boundary \
        else default_boundary(panel.index)
    train_rows = fm.times < boundary
    if train_rows.sum() < 2 or (~train_rows).sum() < 1:
        raise StormcastError(f"split boundary {format_timestamp(boundary)} leaves an empty train or test set")
    doc = {"schema_version": SCHEMA_VERSION, "task": bs.task, "window": bs.window,
           "boundary": format_timestamp(boundary), "n_train": int(train_rows.sum()),
           "n_test": int((~train_rows).sum()), "n_features": len(fm.names)}
    if bs.task == "binary":
        thr = bs.threshold if bs.threshold is not None else default_threshold(fm.target[train_rows])
        fm = replace(fm, y=(fm.target >= thr).astype(float), task="binary")
        doc["threshold"] = thr
        doc["cutoff"] = bs.cutoff
    train, test = fm.rows(train_rows), fm.rows(~train_rows)
    model = fit_boost(train, bs.params)
    if bs.task == "regression":
        doc["train"] = evaluate_regression(predict(model, train), train.y)
        doc["test"] = evaluate_regression(predict(model, test), test.y)
    else:
        for label, part in (("train", train), ("test", test)):
            ev = evaluate_binary(predict(model, part), part.y, bs.cutoff)
            doc[label] = {"confusion": ev["confusion"].to_dict(), "tpr_high": _finite(ev["tpr_high"]),
                          "tpr_low": _finite(ev["tpr_low"]), "accuracy": _finite(ev["accuracy"]),
                          "positive_rate": float(part.y.mean())}
    doc["train_loss_monotone"] = bool(np.all(np.diff(model.train_loss) <= 1e-12 * max(model.train_loss[0], 1)))
    _write_json(run.path("boost_metrics.json"), doc)
    ranked = importance(model)
    run.path("importance.csv").write_text(importance_csv(ranked))
    plotting.save(plotting.importance_figure(ranked), run.path("importance.svg"))
    model.to_json(run.path("model.json"))
    run.path("train_loss.csv").write_text(
        "round,loss\n" + "".join(f"{i},{repr(float(v))}\n" for i, v in enumerate(model.train_loss)))
    return doc


STAGE_FUNCS = {"ingest": stage_ingest, "impute": stage_impute, "trend": stage_trend,
               "ccf": stage_ccf, "var": stage_var, "boost": stage_boost}


def run_pipeline(cfg: PipelineConfig, stages, stage_only=False) -> Run:
    """Run ``stages`` (with their prerequisites unless ``stage_only``)."""
    run = Run(cfg)
    todo = list(stages)
    if not stage_only:
        need = ["ingest", "impute"] if any(s != "ingest" for s in todo) else ["ingest"]
        todo = [s for s in need if s not in todo] + todo
    todo = sorted(set(todo), key=STAGES.index)
    for name in todo:
        run.stage(name, STAGE_FUNCS[name])
    run.finish()
    return run


# ---------------------------------------------------------------- fetch

def _download(url, dest: Path, attempts=3, backoff=0.5):
    last = None
    for k in range(attempts):
        try:
            with urllib.request.urlopen(url, timeout=30) as resp:
                data = resp.read()
            if data[:2] == b"\x1f\x8b":
                data = gzip.decompress(data)
            if not data.strip():
                raise ValueError("empty response")
            tmp = dest.with_suffix(dest.suffix + ".part")
            tmp.write_bytes(data)
            tmp.replace(dest)
            return True, None
        except (urllib.error.URLError, OSError, ValueError) as exc:
            last = exc
            if isinstance(exc, urllib.error.HTTPError) and exc.code == 404:
                break
            if k + 1 < attempts:
                time.sleep(backoff * 2 ** k)
    return False, last


def cmd_fetch(stations, years, url_template, dest, workers=4) -> dict:
    """Download ``<station>h<year>.txt`` archives into ``dest``, skipping existing files."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    jobs, skipped = [], []
    for s in stations:
        for y in years:
            target = dest / f"{s}h{y}.txt"
            if target.exists() and target.stat().st_size > 0:
                skipped.append(target.name)
            else:
                jobs.append((url_template.format(station=s, year=y), target))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda job: _download(*job), jobs))
    ok, failed = [], []
    for (url, target), (success, err) in zip(jobs, results):
        if success:
            ok.append(target.name)
        else:
            log.warning("download failed: %s (%s)", url, err)
            failed.append(target.name)
    if jobs and not ok:
        raise FetchFailed(f"all {len(jobs)} downloads failed")
    return {"downloaded": ok, "skipped": skipped, "failed": failed}


# ---------------------------------------------------------------- entry point

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline TOML file")
    common.add_argument("--out", help="output directory (overrides data.output_dir)")
    common.add_argument("--seed", type=int, help="random seed for the imputation mask")
    common.add_argument("--stage-only", action="store_true",
                        help="run just this stage from artifacts already in the output directory")
    parser = argparse.ArgumentParser(prog="stormcast", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("ingest", "parse buoy and storm-event files into a daily panel"),
                       ("impute", "fill gaps, comparing Kalman and spline-EM on masked cells"),
                       ("trend", "STL decomposition, ADF and Ljung-Box tests of monthly MAG"),
                       ("ccf", "cross-correlations against MAG"),
                       ("var", "VAR lag selection, fit summary and forecasts"),
                       ("boost", "gradient-boosted trees on lagged windows"),
                       ("report", "run every stage and write the manifest")]:
        sub.add_parser(name, parents=[common], help=text)
    f = sub.add_parser("fetch", help="download NDBC yearly archives")
    f.add_argument("--config", help="pipeline TOML file (stations, fetch.years, data.buoy_dir)")
    f.add_argument("--stations", nargs="+")
    f.add_argument("--years", nargs="+", type=int)
    f.add_argument("--url-template")
    f.add_argument("--out", help="destination directory")
    f.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    f.add_argument("--stage-only", action="store_true", help=argparse.SUPPRESS)
    return parser


def _load(path) -> PipelineConfig:
    if not Path(path).is_file():
        raise InputMissing(f"{path}: config file not found")
    return load_config(path)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "fetch":
            cfg = _load(args.config) if args.config else None
            stations = args.stations or (cfg.stations if cfg else None)
            years = args.years or (cfg.fetch_years if cfg else None)
            if not stations or not years:
                raise ConfigError("fetch needs stations and years (flags or config)")
            dest = args.out or (cfg.buoy_dir if cfg else "buoy")
            url = args.url_template or (cfg.fetch_url if cfg else PipelineConfig.fetch_url)
            res = cmd_fetch(stations, years, url, dest, cfg.fetch_workers if cfg else 4)
            log.info("downloaded %d, skipped %d, failed %d",
                     len(res["downloaded"]), len(res["skipped"]), len(res["failed"]))
            return 0
        cfg = _load(args.config).with_overrides(args.out, args.seed)
        stages = list(STAGES) if args.command == "report" else [args.command]
        run_pipeline(cfg, stages, stage_only=args.stage_only and args.command != "report")
        log.info("wrote %s", cfg.output_dir)
        return 0
    except InputMissing as exc:
        print(f"stormcast: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ConfigError) as exc:
        print(f"stormcast: {exc}", file=sys.stderr)
        return 3
    except FetchFailed as exc:
        print(f"stormcast: {exc}", file=sys.stderr)
        return 4
    except StormcastError as exc:
        print(f"stormcast: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
