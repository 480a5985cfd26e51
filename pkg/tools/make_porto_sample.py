"""Regenerate ``src/hyperdest/data/porto_sample.csv``.

A 100-row file in the Porto competition layout, built from seeded synthetic
trips so it ships without licensing concerns.  The mix is chosen to touch
every preprocessing rule: short and overlong trips, GPS spikes, points
outside the city box, sightseeing loops, missing-data flags and a few rows
that do not parse at all.
"""
import csv
import sys
from pathlib import Path

import numpy as np

from hyperdest.ingest import PORTO_COLUMNS, RawTrip, format_row
from hyperdest.synth import SynthConfig, generate

OUT = Path(__file__).resolve().parents[1] / "src" / "hyperdest" / "data" / "porto_sample.csv"


def main(path=OUT):
    rng = np.random.default_rng(20130701)
    trips = generate(SynthConfig(n_trajectories=100, seed=7))
    rows = []
    for i, traj in enumerate(trips):
        pts = np.round(traj.points.copy(), 6)
        kind = i % 10
        if kind == 1:        # too short
            pts = pts[:5]
        elif kind == 2:      # single-point GPS spike
            k = len(pts) // 2
            pts[k] += [0.05, 0.05]
        elif kind == 3 and i % 20 == 3:    # north of the city box
            pts[:, 0] += 0.12
        elif kind == 3:      # teleport half way; smoothing cannot repair it
            pts[len(pts) // 2:] += [0.03, 0.03]
        elif kind == 5:      # out and back
            pts = np.concatenate([pts, pts[::-1][1:]])
        elif kind == 7 and i % 20 == 7:    # overlong
            pts = np.repeat(pts, 12, axis=0)[:500]
        call = "ABC"[i % 3]
        rt = RawTrip(
            trip_id=str(1372636800000000000 + i), call_type=call,
            origin_call=int(rng.integers(2000, 2010)) if call == "A" else None,
            origin_stand=int(rng.integers(1, 64)) if call == "B" else None,
            taxi_id=20000000 + int(traj.meta.taxi_id), timestamp=int(traj.meta.timestamp),
            day_type="A", missing_data=(i % 25 == 24), polyline=pts,
        )
        rows.append(format_row(rt))
    # rows that must land in the reject log
    rows[40][5] = "not-a-time"
    rows[60][8] = "[[-8.6, 41.1], [oops]]"
    rows[80][1] = "Z"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_ALL, lineterminator="\n")
        w.writerow(PORTO_COLUMNS)
        w.writerows(rows)


if __name__ == "__main__":
    main(*sys.argv[1:])
