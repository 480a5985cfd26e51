"""Four-stage trajectory cleaning with per-stage accounting.

Stages run in this order:

1. duration: drop trips lasting 2 minutes or less, or 2 hours or more;
2. speed: median-filter GPS spikes implying more than 240 km/h (drop if
   the filter does not converge);
3. area: drop trips with any point outside the bounding box;
4. roundtrip: drop trips whose path length / beeline ratio is not < 3.5.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from . import geo
from .geo import BoundingBox
from .ingest import DEFAULT_INTERVAL_S, Trajectory


@dataclass
class PreprocessConfig:
    min_duration_s: float = 120.0
    max_duration_s: float = 7200.0
    max_speed_kmh: float = 240.0
    tau_max: float = 3.5
    bbox: BoundingBox = field(default_factory=lambda: geo.PORTO_BBOX)
    interval_s: float = DEFAULT_INTERVAL_S
    max_smooth_iter: int = 5


@dataclass
class FilterReport:
    n_input: int = 0
    n_output: int = 0
    removed_duration: int = 0
    removed_speed: int = 0
    removed_area: int = 0
    removed_roundtrip: int = 0
    n_smoothed: int = 0

    @property
    def n_removed(self) -> int:
        return self.removed_duration + self.removed_speed + self.removed_area + self.removed_roundtrip

    def is_consistent(self) -> bool:
        return self.n_input == self.n_output + self.n_removed

    def as_dict(self) -> dict:
        return asdict(self)


class SmoothResult(NamedTuple):
    trajectory: Trajectory
    iterations: int
    ok: bool


def duration_s(traj: Trajectory, interval_s: float = DEFAULT_INTERVAL_S) -> float:
    return (len(traj) - 1) * interval_s


def duration_filter(traj: Trajectory, cfg: PreprocessConfig = PreprocessConfig()) -> bool:
    """Keep predicate; boundaries at both ends are dropped."""
    d = duration_s(traj, cfg.interval_s)
    return len(traj) > 1 and cfg.min_duration_s < d < cfg.max_duration_s


def implied_speeds_kmh(points: np.ndarray, interval_s: float) -> np.ndarray:
    if len(points) < 2:
        return np.empty(0)
    return geo.segment_lengths(points) / (interval_s / 3600.0)


def _median_pass(points: np.ndarray, offending: np.ndarray) -> np.ndarray:
    out = points.copy()
    last = len(points) - 1
    for k in offending:
        if 0 < k < last:
            out[k] = np.median(points[k - 1:k + 2], axis=0)
        elif k == 0:
            out[k] = points[0:2].mean(axis=0)
        else:
            out[k] = points[last - 1:].mean(axis=0)
    return out


def speed_smooth(traj: Trajectory, cfg: PreprocessConfig = PreprocessConfig()) -> SmoothResult:
    """Median-filter points touching any segment faster than ``max_speed_kmh``.

    Every point at either end of an offending segment is replaced by the
    coordinate-wise median of itself and its two neighbours (endpoints: the
    mean of itself and its single neighbour), all from the pre-pass values.
    Repeats up to ``max_smooth_iter`` passes; ``ok`` is False if violations
    remain afterwards.
    """
    pts = traj.points
    for it in range(cfg.max_smooth_iter + 1):
        bad = np.flatnonzero(implied_speeds_kmh(pts, cfg.interval_s) > cfg.max_speed_kmh)
        if bad.size == 0:
            out = traj if it == 0 else replace(traj, points=pts)
            return SmoothResult(out, it, True)
        if it == cfg.max_smooth_iter:
            break
        offending = np.union1d(bad, bad + 1)
        pts = _median_pass(pts, offending)
    return SmoothResult(replace(traj, points=pts), cfg.max_smooth_iter, False)


def area_filter(traj: Trajectory, bb: BoundingBox = geo.PORTO_BBOX) -> bool:
    return len(traj) > 0 and geo.contains_all(bb, traj.points)


def roundtrip_factor(traj: Trajectory) -> float:
    """Path length over start-to-end beeline; ``inf`` when the trip returns home."""
    if len(traj) < 2:
        raise ValueError(f"roundtrip factor needs >= 2 points, got {len(traj)}")
    pts = traj.points
    beeline = float(geo.haversine_np(pts[0, 0], pts[0, 1], pts[-1, 0], pts[-1, 1]))
    path = geo.path_length(pts)
    if beeline == 0.0:
        return math.inf
    return path / beeline


def roundtrip_filter(traj: Trajectory, tau_max: float = 3.5) -> bool:
    if len(traj) < 2:
        return False
    return roundtrip_factor(traj) < tau_max


def iter_pipeline(trajs: Iterable[Trajectory], cfg: PreprocessConfig,
                  report: FilterReport) -> Iterator[Trajectory]:
    """Lazy version of :func:`run_pipeline`; ``report`` is updated in place."""
    for traj in trajs:
        report.n_input += 1
        if not duration_filter(traj, cfg):
            report.removed_duration += 1
            continue
        smoothed = speed_smooth(traj, cfg)
        if not smoothed.ok:
            report.removed_speed += 1
            continue
        traj = smoothed.trajectory
        if smoothed.iterations > 0:
            report.n_smoothed += 1
        if not area_filter(traj, cfg.bbox):
            report.removed_area += 1
            continue
        if not roundtrip_filter(traj, cfg.tau_max):
            report.removed_roundtrip += 1
            continue
        report.n_output += 1
        yield traj


def run_pipeline(trajs: Iterable[Trajectory], cfg: PreprocessConfig = PreprocessConfig()
                 ) -> tuple[list[Trajectory], FilterReport]:
    report = FilterReport()
    kept = list(iter_pipeline(trajs, cfg, report))
    return kept, report


def decide(traj: Trajectory, cfg: PreprocessConfig = PreprocessConfig()) -> str:
    """Name the stage that removes ``traj``, or ``"keep"``."""
    report = FilterReport()
    if list(iter_pipeline([traj], cfg, report)):
        return "keep"
    for stage in ("duration", "speed", "area", "roundtrip"):
        if getattr(report, f"removed_{stage}"):
            return stage
    raise AssertionError("unreachable")
