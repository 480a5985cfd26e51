"""Distances, bounding boxes and the four-step cleaning pipeline.

Run with ``python3 demos/01_geometry_and_cleaning.py``.  Uses the bundled
100-row sample in the Porto CSV layout.
"""
import io
from importlib import resources

import numpy as np

from hyperdest.geo import PORTO_BBOX, GeoPoint, haversine, path_length
from hyperdest.ingest import read_trajectories
from hyperdest.preprocess import PreprocessConfig, decide, roundtrip_factor, run_pipeline

# %% great-circle distances
a, b = GeoPoint(41.15, -8.61), GeoPoint(41.16, -8.61)
print("0.01 deg of latitude:", round(haversine(a, b), 5), "km")
print("three points on a meridian:", round(path_length([a, b, GeoPoint(41.17, -8.61)]), 4), "km")
print("Porto box:", PORTO_BBOX)

# %% read the sample; malformed rows go to a reject list, parsing carries on
text = resources.files("hyperdest").joinpath("data/porto_sample.csv").read_text()
rejects = []
trips = list(read_trajectories(io.StringIO(text), rejects))
print(f"{len(trips)} usable trips, {len(rejects)} rejected rows:")
for row, reason in rejects:
    print("  row", row, "-", reason)

# %% what each filter would say about a few trips
cfg = PreprocessConfig()
for t in trips[:10]:
    tau = roundtrip_factor(t)
    print(f"{t.meta.trip_id:>8}  N={len(t):3d}  tau={tau:7.2f}  ->  {decide(t, cfg)}")

# %% the full pipeline with its accounting
kept, report = run_pipeline(trips, cfg)
for k, v in report.as_dict().items():
    print(f"{k:>18}: {v}")
assert report.n_input == report.n_output + sum(v for k, v in report.as_dict().items()
                                               if k.startswith("removed_"))

# %% the kept trips all lie inside the box
pts = np.concatenate([t.points for t in kept])
print("lat range", pts[:, 0].min().round(4), pts[:, 0].max().round(4))
print("lon range", pts[:, 1].min().round(4), pts[:, 1].max().round(4))
