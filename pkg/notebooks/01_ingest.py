"""
Reading buoy archives and storm reports
=======================================

Parse the bundled NDBC yearly files (three header layouts appear among
them), decode the storm-event reports, and merge both into one daily panel.
"""

import gzip
from pathlib import Path

import numpy as np

from stormcast.ndbc import build_event_series, merge_panel, parse_ndbc_file, parse_storm_events_csv

DATA = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "pipeline"

# one list of observations per station; sentinels such as 99.00 or MM become None
buoy = {}
for path in sorted((DATA / "buoy").glob("*.txt.gz")):
    station = path.name[:5]
    buoy.setdefault(station, []).extend(parse_ndbc_file(gzip.decompress(path.read_bytes()), station))
for station, obs in buoy.items():
    print(station, len(obs), "observations, first:", obs[0])

events = parse_storm_events_csv((DATA / "events" / "StormEvents_details_2005-2008.csv").read_text())
print(len(events), "storm reports; first:", events[0])

# daily maximum magnitude of the wind events, zero on quiet days
mag = build_event_series(events, {"Thunderstorm Wind", "Marine Thunderstorm Wind"},
                         {"FLORIDA", "GULF OF MEXICO"}, "zero",
                         np.datetime64("2005-01-01"), np.datetime64("2008-12-31"))
print("event days:", int((mag.values > 0).sum()), "of", len(mag))

panel = merge_panel(buoy, mag, ["wspd", "wvht", "pres", "tide"])
for name, present in zip(panel.names, panel.present.sum(axis=0)):
    print(f"{name:12s} {present:5d} of {len(panel)} days observed")
