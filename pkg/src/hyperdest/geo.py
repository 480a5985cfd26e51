"""Geodesic primitives: points, Haversine distance, bounding boxes, path lengths.

Coordinates are always given in decimal degrees, latitude first.  Distances
are kilometres on a sphere of mean Earth radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")

    def as_tuple(self) -> tuple[float, float]:
        return (self.lat, self.lon)


@dataclass(frozen=True)
class BoundingBox:
    """Closed lat/lon rectangle; points on the boundary count as inside."""

    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self):
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise ValueError(f"inverted bounding box {self}")

    @classmethod
    def parse(cls, text: str) -> "BoundingBox":
        """Parse ``"min_lat,max_lat,min_lon,max_lon"``."""
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"bbox needs 4 comma-separated numbers, got {text!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"{self.min_lat!r},{self.max_lat!r},{self.min_lon!r},{self.max_lon!r}"


# Porto metropolitan area; the boundaries are a judgement call, keep configurable.
PORTO_BBOX = BoundingBox(41.04, 41.26, -8.74, -8.45)


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km between two points."""
    return float(haversine_np(a.lat, a.lon, b.lat, b.lon))


def haversine_np(lat1, lon1, lat2, lon2):
    """Vectorised Haversine distance (km); arguments broadcast like numpy arrays."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.subtract(lon2, lon1))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    a = np.clip(a, 0.0, 1.0)
    return 2.0 * EARTH_RADIUS_KM * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))


def path_length(points: Sequence[GeoPoint] | np.ndarray) -> float:
    """Sum of consecutive Haversine distances along ``points``.

    Accepts a sequence of :class:`GeoPoint` or an ``(N, 2)`` lat/lon array.
    """
    arr = as_array(points)
    if len(arr) == 0:
        raise ValueError("path_length of an empty sequence")
    if len(arr) == 1:
        return 0.0
    return float(np.sum(segment_lengths(arr)))


def segment_lengths(arr: np.ndarray) -> np.ndarray:
    """Distances between consecutive rows of an ``(N, 2)`` lat/lon array."""
    return haversine_np(arr[:-1, 0], arr[:-1, 1], arr[1:, 0], arr[1:, 1])


def contains(bb: BoundingBox, p: GeoPoint) -> bool:
    return bb.min_lat <= p.lat <= bb.max_lat and bb.min_lon <= p.lon <= bb.max_lon


def contains_all(bb: BoundingBox, arr: np.ndarray) -> bool:
    """True iff every row of an ``(N, 2)`` lat/lon array lies inside ``bb``."""
    lat, lon = arr[:, 0], arr[:, 1]
    return bool(np.all((lat >= bb.min_lat) & (lat <= bb.max_lat)
                       & (lon >= bb.min_lon) & (lon <= bb.max_lon)))


def as_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.array([(p.lat, p.lon) for p in points], dtype=np.float64).reshape(-1, 2)
