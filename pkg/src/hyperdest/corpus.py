"""Line-oriented trajectory corpus format.

One JSON object per line::

    {"trip_id": "...", "timestamp": 1372636858, "taxi_id": 20000589,
     "stand": null, "customer": null, "call_type": "C", "day_type": "A",
     "points": [[41.141412, -8.618643], ...]}

Points are latitude first.  Lines starting with ``#`` are comments; an
optional first line ``# {...}`` carries a JSON header (producer, config).
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

from .ingest import MetadataRaw, Trajectory


def trajectory_to_record(traj: Trajectory) -> dict:
    m = traj.meta
    return {
        "trip_id": m.trip_id,
        "timestamp": int(m.timestamp),
        "taxi_id": int(m.taxi_id),
        "stand": m.stand,
        "customer": m.customer,
        "call_type": m.call_type,
        "day_type": m.day_type,
        "points": [[float(lat), float(lon)] for lat, lon in traj.points],
    }


def record_to_trajectory(rec: dict) -> Trajectory:
    meta = MetadataRaw(
        timestamp=int(rec["timestamp"]),
        taxi_id=int(rec["taxi_id"]),
        stand=rec.get("stand"),
        customer=rec.get("customer"),
        trip_id=rec.get("trip_id", ""),
        call_type=rec.get("call_type", ""),
        day_type=rec.get("day_type", ""),
    )
    return Trajectory(points=rec["points"], meta=meta)


def write_corpus(trajs: Iterable[Trajectory], out: IO[str], header: Optional[dict] = None) -> int:
    if header is not None:
        out.write("# " + json.dumps(header, sort_keys=True) + "\n")
    n = 0
    for traj in trajs:
        out.write(json.dumps(trajectory_to_record(traj), separators=(",", ":")) + "\n")
        n += 1
    return n


def iter_corpus(stream: Iterable[str]) -> Iterator[Trajectory]:
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            yield record_to_trajectory(json.loads(line))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"corpus line {lineno}: {exc}") from exc


def read_header(path: str | Path) -> Optional[dict]:
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# "):
        return json.loads(first[2:])
    return None


def load_corpus(path: str | Path) -> list[Trajectory]:
    with open(path) as fh:
        return list(iter_corpus(fh))


def save_corpus(trajs: Iterable[Trajectory], path: str | Path, header: Optional[dict] = None) -> int:
    with open(path, "w") as fh:
        return write_corpus(trajs, fh, header)
