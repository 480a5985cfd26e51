"""Reference points, soft geospatial encoding, temporal sinusoids and the
metadata vector fed to hypernetworks.

A GPS point is encoded against a fixed set of reference points by a
softmax over negated Haversine distances (km, unit temperature); its
embedding is the correspondingly weighted average of the reference
embedding rows.  The same reference set later decodes the model output.
"""
from __future__ import annotations

import csv
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import diffcore as dc
from .geo import EARTH_RADIUS_KM, haversine_np
from .ingest import MetadataRaw, Trajectory

PERIODS_H = {"day": 24.0, "week": 168.0, "year": 8760.0}
TIMESCALES = ("day", "week", "year")
PHASES = np.array([0.0, np.pi / 2, np.pi, 3 * np.pi / 2])
CATEGORY_DIM = 10
TEMPORAL_DIM = 4 * len(TIMESCALES)
Z_DIM = TEMPORAL_DIM + 3 * CATEGORY_DIM

ABSENT, UNKNOWN = 0, 1


class ReferenceSamplingError(RuntimeError):
    def __init__(self, achieved: int, wanted: int, draws: int):
        super().__init__(f"only {achieved} of {wanted} reference points reachable "
                         f"after {draws} draws")
        self.achieved = achieved
        self.wanted = wanted


@dataclass
class ReferenceSet:
    points: np.ndarray  # (n, 2) lat/lon
    min_sep_km: float = 0.1
    seed: Optional[int] = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 2)

    def __len__(self):
        return len(self.points)

    def digest(self) -> str:
        return hashlib.sha256(self.points.tobytes()).hexdigest()

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "lat", "lon"])
            for i, (lat, lon) in enumerate(self.points):
                w.writerow([i, repr(float(lat)), repr(float(lon))])

    @classmethod
    def load_csv(cls, path: str | Path, min_sep_km: float = 0.1) -> "ReferenceSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["index", "lat", "lon"]:
                raise ValueError(f"{path}: expected header index,lat,lon, got {header}")
            rows = [(int(i), float(lat), float(lon)) for i, lat, lon in reader]
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValueError(f"{path}: indices must run 0..n-1 in order")
        return cls(np.array([[lat, lon] for _, lat, lon in rows]).reshape(-1, 2), min_sep_km)


def _corpus_points(corpus) -> np.ndarray:
    if isinstance(corpus, np.ndarray):
        return corpus.reshape(-1, 2)
    arrays = [t.points for t in corpus]
    if not arrays:
        return np.empty((0, 2))
    return np.concatenate(arrays, axis=0)


def sample_references(corpus: Iterable[Trajectory] | np.ndarray, n: int = 4096,
                      min_sep_km: float = 0.1, seed: int = 0,
                      max_draws: Optional[int] = None) -> ReferenceSet:
    """Draw points uniformly from the corpus, keeping those at least
    ``min_sep_km`` from every point already kept, until ``n`` are kept.

    A point rejected once stays rejected (the kept set only grows), so
    drawing with replacement is equivalent to walking a random permutation
    of the pool.  That walk ends after at most ``len(pool)`` draws, which
    makes an infeasible request fail fast with the achieved count.

    Neighbour checks use a grid of ``min_sep_km`` cells; a point within
    ``min_sep_km`` can only sit in one of the 3x3 surrounding cells, so the
    check is exact.
    """
    pool = _corpus_points(corpus)
    if len(pool) == 0:
        raise ReferenceSamplingError(0, n, 0)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    if max_draws is not None:
        order = order[:max_draws]
    if min_sep_km > 0:
        cell_lat = np.degrees(min_sep_km / EARTH_RADIUS_KM)
        # longitude cells sized for the pole-most latitude, so never too narrow
        cos_min = max(np.cos(np.radians(np.abs(pool[:, 0]).max())), 1e-12)
        cell_lon = min(1.01 * cell_lat / cos_min, 360.0)
        keys = np.floor(pool[:, 0] / cell_lat).astype(np.int64), \
            np.floor(pool[:, 1] / cell_lon).astype(np.int64)
    grid: dict[tuple[int, int], list[int]] = {}
    chosen: list[int] = []
    draws = 0
    for idx in order:
        draws += 1
        if min_sep_km > 0:
            ka, kb = int(keys[0][idx]), int(keys[1][idx])
            near = [j for da in (-1, 0, 1) for db in (-1, 0, 1)
                    for j in grid.get((ka + da, kb + db), ())]
            if near:
                cand = pool[near]
                lat, lon = pool[idx]
                if haversine_np(lat, lon, cand[:, 0], cand[:, 1]).min() < min_sep_km:
                    continue
            grid.setdefault((ka, kb), []).append(idx)
        chosen.append(idx)
        if len(chosen) == n:
            break
    if len(chosen) < n:
        raise ReferenceSamplingError(len(chosen), n, draws)
    return ReferenceSet(pool[chosen].copy(), min_sep_km, seed)


def soft_weights(points: np.ndarray, refs: ReferenceSet | np.ndarray) -> np.ndarray:
    """Proximity weights ``delta`` of shape ``points.shape[:-1] + (n_ref,)``."""
    ref = refs.points if isinstance(refs, ReferenceSet) else np.asarray(refs)
    pts = np.asarray(points, dtype=np.float64)
    d = haversine_np(pts[..., None, 0], pts[..., None, 1], ref[:, 0], ref[:, 1])
    logits = -d
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def soft_encode(p, refs: ReferenceSet, table: dc.Tensor) -> tuple[np.ndarray, dc.Tensor]:
    """Return ``(delta, e)`` with ``e = delta @ table``.

    ``p`` may be a single ``(2,)`` point or any ``(..., 2)`` array.
    """
    delta = soft_weights(p, refs)
    if len(refs) != table.shape[0]:
        raise dc.ShapeError(f"{len(refs)} reference points but table has {table.shape[0]} rows")
    d = dc.Tensor(delta, dtype=table.data.dtype)
    if d.ndim == 1:
        return delta, dc.reshape(dc.matmul(dc.reshape(d, (1, -1)), table), (table.shape[1],))
    return delta, dc.matmul(d, table)


def temporal_encode(t_hours, period_h: float) -> np.ndarray:
    """``sin(2*pi*t/C + phi)`` for the four phase offsets; shape ``(..., 4)``."""
    t = np.asarray(t_hours, dtype=np.float64)
    # reduce first so the encoding is exactly periodic in t
    frac = np.mod(t, period_h) / period_h
    return np.sin(2.0 * np.pi * frac[..., None] + PHASES)


def hours_since_epoch(unix_seconds) -> np.ndarray:
    return np.asarray(unix_seconds, dtype=np.float64) / 3600.0


def temporal_features(unix_seconds, timescales: Sequence[str] = TIMESCALES) -> np.ndarray:
    """Twelve temporal slots [day | week | year]; masked-out scales are zero."""
    t = hours_since_epoch(unix_seconds)
    parts = []
    for name in TIMESCALES:
        enc = temporal_encode(t, PERIODS_H[name])
        parts.append(enc if name in timescales else np.zeros_like(enc))
    return np.concatenate(parts, axis=-1)


@dataclass
class CategoryVocab:
    """Maps raw ids to table rows: 0 absent, 1 unknown/rare, 2.. known ids."""

    index: dict[int, int] = field(default_factory=dict)

    @classmethod
    def fit(cls, values: Iterable[Optional[int]], min_count: int = 1) -> "CategoryVocab":
        counts = Counter(v for v in values if v is not None)
        keep = sorted(v for v, c in counts.items() if c >= min_count)
        return cls({v: i + 2 for i, v in enumerate(keep)})

    def __len__(self):
        return len(self.index) + 2

    def lookup(self, value: Optional[int]) -> int:
        if value is None:
            return ABSENT
        return self.index.get(value, UNKNOWN)

    def to_list(self) -> list[int]:
        return sorted(self.index, key=self.index.get)

    @classmethod
    def from_list(cls, ids: Sequence[int]) -> "CategoryVocab":
        return cls({int(v): i + 2 for i, v in enumerate(ids)})


@dataclass
class MetadataEncoder:
    driver: CategoryVocab
    stand: CategoryVocab
    customer: CategoryVocab

    @classmethod
    def fit(cls, metas: Sequence[MetadataRaw], customer_min_count: int = 50) -> "MetadataEncoder":
        return cls(
            driver=CategoryVocab.fit([m.taxi_id for m in metas]),
            stand=CategoryVocab.fit([m.stand for m in metas]),
            customer=CategoryVocab.fit([m.customer for m in metas], customer_min_count),
        )

    def indices(self, metas: Sequence[MetadataRaw]) -> np.ndarray:
        """``(B, 3)`` table rows for driver, stand, customer."""
        return np.array([[self.driver.lookup(m.taxi_id), self.stand.lookup(m.stand),
                          self.customer.lookup(m.customer)] for m in metas],
                        dtype=np.intp).reshape(-1, 3)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).to_list() for k in ("driver", "stand", "customer")}

    @classmethod
    def from_dict(cls, d: dict) -> "MetadataEncoder":
        return cls(**{k: CategoryVocab.from_list(d[k]) for k in ("driver", "stand", "customer")})


def build_z(metas: Sequence[MetadataRaw] | MetadataRaw, encoder: MetadataEncoder,
            tables: Sequence[dc.Tensor], timescales: Sequence[str] = TIMESCALES) -> dc.Tensor:
    """Hypernetwork input ``[day(4) | week(4) | year(4) | driver | stand | customer]``.

    ``tables`` are the driver, stand and customer embedding tables.  A single
    metadata record gives a ``(Z_DIM,)`` tensor, a sequence gives ``(B, Z_DIM)``.
    """
    single = isinstance(metas, MetadataRaw)
    metas = [metas] if single else list(metas)
    dtype = tables[0].data.dtype
    temporal = dc.Tensor(temporal_features([m.timestamp for m in metas], timescales), dtype=dtype)
    idx = encoder.indices(metas)
    parts = [temporal] + [dc.embedding(tab, idx[:, k]) for k, tab in enumerate(tables)]
    z = dc.concat(parts, axis=-1)
    return dc.reshape(z, (z.shape[-1],)) if single else z
