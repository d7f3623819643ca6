"""
The whole pipeline from one config file
=======================================

Runs every stage on the bundled two-buoy dataset, exactly as
``stormcast report --config tests/fixtures/pipeline/config.toml`` would.
"""

import json
import tempfile
from pathlib import Path

from stormcast.cli import run_pipeline
from stormcast.config import load_config

CONFIG = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "pipeline" / "config.toml"

out = Path(tempfile.mkdtemp())
cfg = load_config(CONFIG).with_overrides(output_dir=out)
run = run_pipeline(cfg, ["ingest", "impute", "trend", "ccf", "var", "boost"])
for name, secs in run.timings:
    print(f"{name:7s} {secs:6.2f}s")

trend = json.loads((out / "trend.json").read_text())
print("increasing trend:", trend["increasing"], "slope p =", f"{trend['trend_slope']['p_value']:.2g}")
print("imputation winner:", json.loads((out / "imputation_report.json").read_text())["comparison"]["winner"])
print((out / "var_summary.txt").read_text().split("\n\n")[0])
print("boost test metrics:", json.loads((out / "boost_metrics.json").read_text())["test"])
print("artifacts in", out)
