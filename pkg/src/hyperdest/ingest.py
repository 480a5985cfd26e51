"""Reader for the Porto taxi-service CSV format.

Each row of the competition file looks like::

    "TRIP_ID","CALL_TYPE","ORIGIN_CALL","ORIGIN_STAND","TAXI_ID","TIMESTAMP","DAY_TYPE","MISSING_DATA","POLYLINE"
    "1372636858620000589","C","","","20000589","1372636858","A","False","[[-8.618643,41.141412],...]"

.. warning::
   POLYLINE stores **longitude first** (``[lon, lat]``).  Everything in this
   package is latitude first, so the swap happens exactly once, here.

Malformed rows never abort a parse; they are reported to the reject log
as ``(row_number, reason)`` where ``row_number`` counts data rows from 1.
"""
from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional

import numpy as np

PORTO_COLUMNS = (
    "TRIP_ID", "CALL_TYPE", "ORIGIN_CALL", "ORIGIN_STAND", "TAXI_ID",
    "TIMESTAMP", "DAY_TYPE", "MISSING_DATA", "POLYLINE",
)
_CATEGORIES = frozenset("ABC")
_ABSENT = frozenset(["", "NA", "nan", "NaN", "None"])

# Sampling interval of the Porto GPS feed, seconds.
DEFAULT_INTERVAL_S = 15.0

csv.field_size_limit(min(sys.maxsize, 2**31 - 1))


class MalformedRow(ValueError):
    pass


@dataclass
class RawTrip:
    trip_id: str
    call_type: str
    origin_call: Optional[int]
    origin_stand: Optional[int]
    taxi_id: int
    timestamp: int
    day_type: str
    missing_data: bool
    polyline: np.ndarray  # (N, 2), lat first

    def __eq__(self, other):
        if not isinstance(other, RawTrip):
            return NotImplemented
        return (self.trip_id, self.call_type, self.origin_call, self.origin_stand,
                self.taxi_id, self.timestamp, self.day_type, self.missing_data) == (
                other.trip_id, other.call_type, other.origin_call, other.origin_stand,
                other.taxi_id, other.timestamp, other.day_type, other.missing_data,
        ) and np.array_equal(self.polyline, other.polyline)


@dataclass
class MetadataRaw:
    timestamp: int  # unix seconds at trip start
    taxi_id: int
    stand: Optional[int] = None
    customer: Optional[int] = None
    trip_id: str = ""
    call_type: str = ""
    day_type: str = ""


@dataclass
class Trajectory:
    """Ordered GPS points (``(N, 2)`` lat/lon array) plus trip metadata."""

    points: np.ndarray
    meta: MetadataRaw = field(default_factory=lambda: MetadataRaw(0, 0))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    def __len__(self):
        return len(self.points)

    @property
    def destination(self) -> np.ndarray:
        return self.points[-1]


def _opt_int(text: str, name: str) -> Optional[int]:
    text = text.strip()
    if text in _ABSENT:
        return None
    return _int(text, name)


def _int(text: str, name: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(f"{name}: not a number {text!r}") from None
    if not math.isfinite(value) or value != int(value):
        raise MalformedRow(f"{name}: not an integer {text!r}")
    return int(value)


def _bool(text: str, name: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1"):
        return True
    if t in ("false", "0"):
        return False
    raise MalformedRow(f"{name}: not a boolean {text!r}")


def parse_polyline(text: str) -> np.ndarray:
    """Decode ``[[lon,lat],...]`` into an ``(N, 2)`` lat-first array."""
    try:
        raw = json.loads(text)
    except (json.JSONDecodeError, TypeError):
        raise MalformedRow("POLYLINE: unparseable") from None
    if not isinstance(raw, list):
        raise MalformedRow("POLYLINE: not a list")
    if not raw:
        return np.empty((0, 2))
    if not all(isinstance(p, list) and len(p) == 2 for p in raw):
        raise MalformedRow("POLYLINE: expected [lon, lat] pairs")
    try:
        lonlat = np.array(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise MalformedRow("POLYLINE: non-numeric coordinate") from None
    pts = lonlat[:, ::-1].copy()
    if not np.all(np.isfinite(pts)):
        raise MalformedRow("POLYLINE: non-finite coordinate")
    if np.any(np.abs(pts[:, 0]) > 90) or np.any(np.abs(pts[:, 1]) > 180):
        raise MalformedRow("POLYLINE: coordinate out of range")
    return pts


def format_polyline(points: np.ndarray) -> str:
    return json.dumps([[float(lon), float(lat)] for lat, lon in points], separators=(",", ":"))


def parse_row(row: list[str]) -> RawTrip:
    if len(row) != len(PORTO_COLUMNS):
        raise MalformedRow(f"expected {len(PORTO_COLUMNS)} fields, got {len(row)}")
    trip_id, call_type, origin_call, origin_stand, taxi_id, ts, day_type, missing, poly = row
    call_type = call_type.strip()
    day_type = day_type.strip()
    if call_type not in _CATEGORIES:
        raise MalformedRow(f"CALL_TYPE: {call_type!r} not in A/B/C")
    if day_type not in _CATEGORIES:
        raise MalformedRow(f"DAY_TYPE: {day_type!r} not in A/B/C")
    timestamp = _int(ts, "TIMESTAMP")
    if timestamp <= 0:
        raise MalformedRow(f"TIMESTAMP: must be positive, got {timestamp}")
    return RawTrip(
        trip_id=trip_id.strip(),
        call_type=call_type,
        origin_call=_opt_int(origin_call, "ORIGIN_CALL"),
        origin_stand=_opt_int(origin_stand, "ORIGIN_STAND"),
        taxi_id=_int(taxi_id, "TAXI_ID"),
        timestamp=timestamp,
        day_type=day_type,
        missing_data=_bool(missing, "MISSING_DATA"),
        polyline=parse_polyline(poly),
    )


def format_row(rt: RawTrip) -> list[str]:
    return [
        rt.trip_id, rt.call_type,
        "" if rt.origin_call is None else str(rt.origin_call),
        "" if rt.origin_stand is None else str(rt.origin_stand),
        str(rt.taxi_id), str(rt.timestamp), rt.day_type,
        "True" if rt.missing_data else "False",
        format_polyline(rt.polyline),
    ]


def write_csv(trips: Iterable[RawTrip], out: IO[str]) -> None:
    writer = csv.writer(out, quoting=csv.QUOTE_ALL, lineterminator="\n")
    writer.writerow(PORTO_COLUMNS)
    for rt in trips:
        writer.writerow(format_row(rt))


def parse_csv(stream: Iterable[str], rejects: Optional[list] = None) -> Iterator[RawTrip]:
    """Stream :class:`RawTrip` records from Porto-format CSV text.

    Parameters
    ----------
    stream : iterable of str
        An open text file or any iterable of lines.
    rejects : list, optional
        Receives ``(row_number, reason)`` tuples for malformed rows.

    Raises
    ------
    MalformedRow
        If the header does not match the Porto schema.
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return
    if tuple(h.strip() for h in header) != PORTO_COLUMNS:
        raise MalformedRow(f"header does not match Porto schema: {header}")
    for row_number, row in enumerate(reader, start=1):
        if not row:
            continue
        try:
            yield parse_row(row)
        except MalformedRow as exc:
            if rejects is not None:
                rejects.append((row_number, str(exc)))


def write_reject_log(rejects: Iterable[tuple[int, str]], out: IO[str]) -> None:
    for row_number, reason in rejects:
        out.write(f"{row_number}\t{reason}\n")


def to_trajectory(rt: RawTrip) -> Optional[Trajectory]:
    """Convert a parsed row; ``None`` means the trip must be skipped."""
    if rt.missing_data or len(rt.polyline) == 0:
        return None
    meta = MetadataRaw(
        timestamp=rt.timestamp,
        taxi_id=rt.taxi_id,
        stand=rt.origin_stand,
        customer=rt.origin_call,
        trip_id=rt.trip_id,
        call_type=rt.call_type,
        day_type=rt.day_type,
    )
    return Trajectory(points=rt.polyline.copy(), meta=meta)


def read_trajectories(stream: Iterable[str], rejects: Optional[list] = None) -> Iterator[Trajectory]:
    for rt in parse_csv(stream, rejects):
        traj = to_trajectory(rt)
        if traj is not None:
            yield traj
