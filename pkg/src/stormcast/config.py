"""Pipeline configuration: a TOML file, validated before any stage runs.

Schema (every key optional unless noted; relative paths resolve against
the config file's directory)::

    seed = 0

    [data]
    buoy_dir = "buoy"            # NDBC files named <station>h<year>.txt[.gz]
    events_dir = "events"        # StormEvents details *.csv[.gz]
    output_dir = "out"

    [stations]
    ids = ["42036", "42039"]     # required
    neighbor_groups = [["42036", "42039"]]
    variables = ["wspd", "wvht", "pres", "atmp", "tide"]

    [events]
    types = ["Hail", "Thunderstorm Wind", ...]
    states = ["FLORIDA", "GULF OF MEXICO"]
    fill = "zero"                # or "missing"

    [impute]
    method = "spline_em"         # "spline_em", "kalman" or "winner"
    kalman_model = "local_level" # or "local_linear_trend"
    spline_df = "auto"           # or a number
    max_iter = 100
    tol = 1e-6
    max_blank_run = 30
    [impute.mask]
    point_fraction = 0.12
    block_count = 0
    block_length = 1

    [trend]
    period = 12
    seasonal_window = 13
    trend_window = 0             # 0 = default rule
    robust = true
    adf_regression = "trend"
    ljung_box_lags = 12

    [ccf]
    max_lag = 30
    pairs = [["MAG", "42036_wvht"]]   # default: MAG against every other column

    [var]
    columns = ["MAG", "42036_wvht"]   # default: MAG and every *_wvht column
    lag_max = 6
    deterministic = "trend"
    horizon = 10

    [boost]
    task = "regression"          # or "binary"
    window = 7
    threshold = 0.0              # binary only; 0 = 90th percentile of nonzero training MAG
    cutoff = 0.5
    columns = []                 # default: every panel column
    rounds = 200
    eta = 0.1
    max_depth = 4
    min_child_weight = 1.0
    reg_lambda = 1.0
    gamma = 0.0

    [split]
    boundary = "2005-01-01"      # default: 20/35 of the way through the panel

    [fetch]
    years = [2005, 2006]
    url_template = "https://www.ndbc.noaa.gov/data/historical/stdmet/{station}h{year}.txt.gz"
    workers = 4
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .boost import BoostParams, WindowSpec
from .errors import StormcastError
from .impute import MaskSpec, SplineEmConfig
from .ndbc import DEFAULT_EVENT_TYPES, DEFAULT_STATES, VARIABLES
from .var import VarSpec


class ConfigError(StormcastError):
    """Unreadable config, unknown key, or invalid value."""


DEFAULT_URL = "https://www.ndbc.noaa.gov/data/historical/stdmet/{station}h{year}.txt.gz"


@dataclass(frozen=True)
class ImputeSettings:
    method: str = "spline_em"
    kalman_model: str = "local_level"
    spline: SplineEmConfig = SplineEmConfig()
    mask: MaskSpec = MaskSpec()


@dataclass(frozen=True)
class TrendSettings:
    period: int = 12
    seasonal_window: int = 13
    trend_window: Optional[int] = None
    robust: bool = True
    adf_regression: str = "trend"
    ljung_box_lags: int = 12


@dataclass(frozen=True)
class BoostSettings:
    task: str = "regression"
    window: int = 7
    threshold: Optional[float] = None
    cutoff: float = 0.5
    columns: tuple = ()
    params: BoostParams = BoostParams()


@dataclass(frozen=True)
class PipelineConfig:
    stations: tuple
    buoy_dir: Path
    events_dir: Path
    output_dir: Path
    neighbor_groups: tuple = ()
    variables: tuple = VARIABLES
    event_types: tuple = tuple(sorted(DEFAULT_EVENT_TYPES))
    event_states: tuple = tuple(sorted(DEFAULT_STATES))
    fill: str = "zero"
    seed: int = 0
    impute: ImputeSettings = ImputeSettings()
    trend: TrendSettings = TrendSettings()
    ccf_max_lag: int = 30
    ccf_pairs: tuple = ()
    var_columns: tuple = ()
    var_spec: VarSpec = VarSpec()
    var_horizon: int = 10
    boost: BoostSettings = BoostSettings()
    split_boundary: Optional[str] = None
    fetch_years: tuple = ()
    fetch_url: str = DEFAULT_URL
    fetch_workers: int = 4

    def with_overrides(self, output_dir=None, seed=None) -> "PipelineConfig":
        cfg = self
        if output_dir is not None:
            cfg = replace(cfg, output_dir=Path(output_dir))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed),
                          impute=replace(cfg.impute, mask=replace(cfg.impute.mask, rng_seed=int(seed))))
        return cfg

    def to_dict(self) -> dict:
        """Plain, JSON-serialisable view (paths as given, relative where possible)."""
        def plain(v):
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, tuple):
                return [plain(x) for x in v]
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = plain(asdict(v) if hasattr(v, "__dataclass_fields__") else v)
        return d

    def digest(self, ignore=("output_dir",)) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in ignore}
        for k in ("buoy_dir", "events_dir"):
            d[k] = Path(d[k]).name
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


_SCHEMA = {
    "seed": int,
    "data": {"buoy_dir": str, "events_dir": str, "output_dir": str},
    "stations": {"ids": list, "neighbor_groups": list, "variables": list},
    "events": {"types": list, "states": list, "fill": str},
    "impute": {"method": str, "kalman_model": str, "spline_df": (str, int, float), "max_iter": int,
               "tol": (int, float), "max_blank_run": int,
               "mask": {"point_fraction": (int, float), "block_count": int, "block_length": int}},
    "trend": {"period": int, "seasonal_window": int, "trend_window": int, "robust": bool,
              "adf_regression": str, "ljung_box_lags": int},
    "ccf": {"max_lag": int, "pairs": list},
    "var": {"columns": list, "lag_max": int, "deterministic": str, "horizon": int},
    "boost": {"task": str, "window": int, "threshold": (int, float), "cutoff": (int, float),
              "columns": list, "rounds": int, "eta": (int, float), "max_depth": int,
              "min_child_weight": (int, float), "reg_lambda": (int, float), "gamma": (int, float)},
    "split": {"boundary": str},
    "fetch": {"years": list, "url_template": str, "workers": int},
}


def _check(tree, schema, where=""):
    for key, value in tree.items():
        path = f"{where}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key {path!r}")
        expect = schema[key]
        if isinstance(expect, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a table")
            _check(value, expect, path + ".")
        else:
            allowed = expect if isinstance(expect, tuple) else (expect,)
            # bool is an int subclass; only accept it where asked for
            if not isinstance(value, allowed) or (isinstance(value, bool) and bool not in allowed):
                raise ConfigError(f"{path!r} has the wrong type")


def load_config(path) -> PipelineConfig:
    """Read and validate a TOML pipeline config."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(tree, path.parent)


def config_from_dict(tree: dict, base=".") -> PipelineConfig:
    _check(tree, _SCHEMA)
    base = Path(base)
    get = lambda sect, key, default=None: tree.get(sect, {}).get(key, default)  # noqa: E731

    ids = tuple(str(s) for s in get("stations", "ids", []))
    if not ids:
        raise ConfigError("stations.ids must list at least one station")
    if len(set(ids)) != len(ids):
        raise ConfigError("stations.ids contains duplicates")
    groups = tuple(tuple(str(s) for s in g) for g in get("stations", "neighbor_groups", []))
    for g in groups:
        unknown = [s for s in g if s not in ids]
        if unknown:
            raise ConfigError(f"neighbor group refers to unknown stations {unknown}")
    variables = tuple(get("stations", "variables", list(VARIABLES)))
    bad = [v for v in variables if v not in VARIABLES]
    if bad:
        raise ConfigError(f"unknown buoy variables {bad}")

    fill = get("events", "fill", "zero")
    if fill not in ("zero", "missing"):
        raise ConfigError("events.fill must be 'zero' or 'missing'")

    seed = int(tree.get("seed", 0))
    imp = tree.get("impute", {})
    method = imp.get("method", "spline_em")
    if method not in ("spline_em", "kalman", "winner"):
        raise ConfigError("impute.method must be spline_em, kalman or winner")
    try:
        spline = SplineEmConfig(spline_df=imp.get("spline_df", "auto"), max_iter=imp.get("max_iter", 100),
                                tol=float(imp.get("tol", 1e-6)), max_blank_run=imp.get("max_blank_run", 30))
        m = imp.get("mask", {})
        mask = MaskSpec(float(m.get("point_fraction", 0.12)), m.get("block_count", 0),
                        m.get("block_length", 1), seed)
        impute = ImputeSettings(method, imp.get("kalman_model", "local_level"), spline, mask)
        if impute.kalman_model not in ("local_level", "local_linear_trend"):
            raise ValueError("impute.kalman_model must be local_level or local_linear_trend")

        tr = tree.get("trend", {})
        trend = TrendSettings(tr.get("period", 12), tr.get("seasonal_window", 13),
                              tr.get("trend_window") or None, tr.get("robust", True),
                              tr.get("adf_regression", "trend"), tr.get("ljung_box_lags", 12))
        if trend.adf_regression not in ("none", "drift", "trend"):
            raise ValueError("trend.adf_regression must be none, drift or trend")

        v = tree.get("var", {})
        var_spec = VarSpec(lag_max=v.get("lag_max", 6), deterministic=v.get("deterministic", "trend"))
        horizon = v.get("horizon", 10)
        if horizon < 1:
            raise ValueError("var.horizon must be >= 1")

        b = tree.get("boost", {})
        params = BoostParams(rounds=b.get("rounds", 200), eta=float(b.get("eta", 0.1)),
                             max_depth=b.get("max_depth", 4),
                             min_child_weight=float(b.get("min_child_weight", 1.0)),
                             reg_lambda=float(b.get("reg_lambda", 1.0)), gamma=float(b.get("gamma", 0.0)))
        task = b.get("task", "regression")
        if task not in ("regression", "binary"):
            raise ValueError("boost.task must be regression or binary")
        threshold = b.get("threshold")
        if threshold is not None and task != "binary":
            raise ValueError("boost.threshold applies to the binary task only")
        cutoff = float(b.get("cutoff", 0.5))
        if not 0 < cutoff < 1:
            raise ValueError("boost.cutoff must be in (0, 1)")
        window = b.get("window", 7)
        if window < 1:
            raise ValueError("boost.window must be >= 1")
        boost = BoostSettings(task, window, float(threshold) if threshold else None, cutoff,
                              tuple(b.get("columns", [])), params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None

    pairs = tuple(tuple(p) for p in get("ccf", "pairs", []))
    if any(len(p) != 2 for p in pairs):
        raise ConfigError("ccf.pairs entries must be [a, b]")
    boundary = get("split", "boundary")
    if boundary is not None:
        try:
            import numpy as np
            np.datetime64(boundary, "D")
        except ValueError:
            raise ConfigError(f"split.boundary {boundary!r} is not a date") from None

    data = tree.get("data", {})
    return PipelineConfig(
        stations=ids,
        buoy_dir=base / data.get("buoy_dir", "buoy"),
        events_dir=base / data.get("events_dir", "events"),
        output_dir=base / data.get("output_dir", "out"),
        neighbor_groups=groups,
        variables=variables,
        event_types=tuple(get("events", "types", sorted(DEFAULT_EVENT_TYPES))),
        event_states=tuple(get("events", "states", sorted(DEFAULT_STATES))),
        fill=fill,
        seed=seed,
        impute=impute,
        trend=trend,
        ccf_max_lag=get("ccf", "max_lag", 30),
        ccf_pairs=pairs,
        var_columns=tuple(get("var", "columns", [])),
        var_spec=var_spec,
        var_horizon=horizon,
        boost=boost,
        split_boundary=boundary,
        fetch_years=tuple(int(y) for y in get("fetch", "years", [])),
        fetch_url=get("fetch", "url_template", DEFAULT_URL),
        fetch_workers=get("fetch", "workers", 4),
    )
