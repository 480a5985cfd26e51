"""Synthetic city whose destinations depend on the time of day.

Each trip starts at a uniform random point of the bounding box and drives
in a straight line at constant speed to one of ``n_hotspots`` fixed
destinations.  The destination is drawn from

    P(hotspot k | t) = softmax_k( concentration * cos(2 pi (t - peak_k) / period) )

so a model that can read the start time has strictly more information
than one that only sees the GPS prefix.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geo import BoundingBox, GeoPoint, haversine_np
from .ingest import DEFAULT_INTERVAL_S, MetadataRaw, Trajectory

KM_PER_DEG_LAT = math.pi / 180.0 * 6371.0
# 2013-07-01 00:00 UTC, the first day covered by the Porto data
DEFAULT_T0 = 1372636800


@dataclass
class SynthConfig:
    n_trajectories: int = 1000
    n_hotspots: int = 8
    hotspots: Optional[list] = None  # [(lat, lon), ...]; sampled when None
    peak_hours: Optional[list] = None  # evenly spread over the period when None
    period_h: float = 24.0
    concentration: float = 1.0
    sigma_km: float = 0.02
    speed_kmh: float = 30.0
    interval_s: float = DEFAULT_INTERVAL_S
    bbox: BoundingBox = field(default_factory=lambda: BoundingBox(41.10, 41.20, -8.68, -8.55))
    n_drivers: int = 20
    t0: int = DEFAULT_T0
    span_days: float = 365.0
    seed: int = 0

    def __post_init__(self):
        if self.n_hotspots < 1:
            raise ValueError("need at least one hotspot")
        if self.n_trajectories < 0:
            raise ValueError("n_trajectories must be >= 0")
        if self.hotspots is not None and len(self.hotspots) != self.n_hotspots:
            raise ValueError("hotspots list length must equal n_hotspots")
        if self.peak_hours is not None and len(self.peak_hours) != self.n_hotspots:
            raise ValueError("peak_hours length must equal n_hotspots")

    def resolved_hotspots(self) -> np.ndarray:
        if self.hotspots is not None:
            return np.asarray(self.hotspots, dtype=np.float64).reshape(-1, 2)
        rng = np.random.default_rng([self.seed, 1])
        bb = self.bbox
        # keep hotspots off the border and spread out: best-candidate sampling
        lat_m = 0.2 * (bb.max_lat - bb.min_lat)
        lon_m = 0.2 * (bb.max_lon - bb.min_lon)
        chosen = np.empty((0, 2))
        for _ in range(self.n_hotspots):
            cand = np.column_stack([
                rng.uniform(bb.min_lat + lat_m, bb.max_lat - lat_m, 32),
                rng.uniform(bb.min_lon + lon_m, bb.max_lon - lon_m, 32),
            ])
            if len(chosen):
                d = haversine_np(cand[:, None, 0], cand[:, None, 1], chosen[:, 0], chosen[:, 1])
                best = int(np.argmax(d.min(axis=1)))
            else:
                best = 0
            chosen = np.vstack([chosen, cand[best]])
        return chosen

    def resolved_peaks(self) -> np.ndarray:
        if self.peak_hours is not None:
            return np.asarray(self.peak_hours, dtype=np.float64)
        return np.arange(self.n_hotspots) * self.period_h / self.n_hotspots

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bbox"] = str(self.bbox)
        d["hotspots"] = self.resolved_hotspots().tolist()
        d["peak_hours"] = self.resolved_peaks().tolist()
        return d


def destination_probs(t_hours, cfg: SynthConfig) -> np.ndarray:
    """Hotspot probabilities at time(s) ``t_hours``; shape ``(..., n_hotspots)``."""
    t = np.asarray(t_hours, dtype=np.float64)[..., None]
    affinity = np.cos(2.0 * np.pi * (t - cfg.resolved_peaks()) / cfg.period_h)
    logits = cfg.concentration * affinity
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def _jitter(points: np.ndarray, sigma_km: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_km == 0:
        return points
    noise = rng.normal(0.0, sigma_km, points.shape)
    out = points.copy()
    out[:, 0] += noise[:, 0] / KM_PER_DEG_LAT
    out[:, 1] += noise[:, 1] / (KM_PER_DEG_LAT * np.cos(np.radians(points[:, 0])))
    return out


def straight_path(origin: np.ndarray, dest: np.ndarray, step_km: float) -> np.ndarray:
    dist = float(haversine_np(origin[0], origin[1], dest[0], dest[1]))
    n_seg = max(1, int(math.ceil(dist / step_km)))
    frac = np.arange(n_seg + 1)[:, None] / n_seg
    path = origin + frac * (dest - origin)
    path[-1] = dest
    return path


def generate_one(index: int, cfg: SynthConfig, hotspots: np.ndarray,
                 seed_seq: np.random.SeedSequence) -> Trajectory:
    rng = np.random.default_rng(seed_seq)
    bb = cfg.bbox
    ts = int(cfg.t0 + rng.integers(0, int(cfg.span_days * 86400)))
    probs = destination_probs(ts / 3600.0, cfg)
    k = int(rng.choice(len(hotspots), p=probs))
    origin = np.array([rng.uniform(bb.min_lat, bb.max_lat), rng.uniform(bb.min_lon, bb.max_lon)])
    step_km = cfg.speed_kmh * cfg.interval_s / 3600.0
    pts = _jitter(straight_path(origin, hotspots[k], step_km), cfg.sigma_km, rng)
    meta = MetadataRaw(timestamp=ts, taxi_id=int(rng.integers(0, cfg.n_drivers)),
                       trip_id=f"synth-{cfg.seed}-{index}", call_type="C", day_type="A")
    return Trajectory(pts, meta)


def generate(cfg: SynthConfig) -> list[Trajectory]:
    """Seeded corpus; trajectory ``i`` depends only on ``(cfg, i)``."""
    hotspots = cfg.resolved_hotspots()
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trajectories)
    return [generate_one(i, cfg, hotspots, s) for i, s in enumerate(seqs)]


def hotspot_index(traj: Trajectory, cfg: SynthConfig) -> int:
    """Index of the hotspot nearest the trajectory's final point."""
    h = cfg.resolved_hotspots()
    d = haversine_np(traj.points[-1, 0], traj.points[-1, 1], h[:, 0], h[:, 1])
    return int(np.argmin(d))


def geometric_median(points: np.ndarray, weights: np.ndarray, iters: int = 200) -> np.ndarray:
    """Weighted L1-optimal point (Weiszfeld), used by the Bayes predictors."""
    y = weights @ points
    for _ in range(iters):
        d = haversine_np(y[0], y[1], points[:, 0], points[:, 1])
        if np.any(d < 1e-9):
            return points[np.argmin(d)]
        w = weights / d
        y_new = w @ points / w.sum()
        if np.allclose(y_new, y, atol=1e-12, rtol=0):
            break
        y = y_new
    return y


def hotspot_posterior(prefix: np.ndarray, t_hours: Optional[float], cfg: SynthConfig) -> np.ndarray:
    """Posterior over hotspots given GPS prefix (and start time if given).

    The likelihood treats each observed point as the noise-free straight
    path from the first observation toward the hotspot plus isotropic
    Gaussian jitter; without ``t_hours`` the prior is the time-marginal,
    which is uniform for evenly spread peaks.
    """
    hotspots = cfg.resolved_hotspots()
    if t_hours is None:
        grid = np.linspace(0.0, cfg.period_h, 96, endpoint=False)
        prior = destination_probs(grid, cfg).mean(axis=0)
    else:
        prior = destination_probs(t_hours, cfg)
    n = len(prefix)
    loglik = np.zeros(len(hotspots))
    if n > 1:
        sigma = max(cfg.sigma_km, 1e-3)
        step_km = cfg.speed_kmh * cfg.interval_s / 3600.0
        o = prefix[0]
        for k, h in enumerate(hotspots):
            path = straight_path(o, h, step_km)
            expected = path[np.minimum(np.arange(n), len(path) - 1)]
            d = haversine_np(prefix[:, 0], prefix[:, 1], expected[:, 0], expected[:, 1])
            loglik[k] = -0.5 * np.sum((d / sigma) ** 2)
    logpost = np.log(prior + 1e-300) + loglik
    logpost -= logpost.max()
    post = np.exp(logpost)
    return post / post.sum()


def bayes_prediction(prefix: np.ndarray, t_hours: Optional[float], cfg: SynthConfig) -> np.ndarray:
    post = hotspot_posterior(prefix, t_hours, cfg)
    return geometric_median(cfg.resolved_hotspots(), post)
