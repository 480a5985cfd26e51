import math

import numpy as np
import pytest

from hyperdest.geo import contains_all, haversine_np
from hyperdest.synth import (
    SynthConfig, bayes_prediction, destination_probs, generate, geometric_median, hotspot_index,
    hotspot_posterior,
)


def test_single_hotspot_noise_free():
    cfg = SynthConfig(n_trajectories=30, n_hotspots=1, hotspots=[(41.15, -8.61)], sigma_km=0.0)
    for t in generate(cfg):
        assert np.array_equal(t.points[-1], [41.15, -8.61])
        assert contains_all(cfg.bbox, t.points)


def test_seeded_and_index_stable():
    a = generate(SynthConfig(n_trajectories=20, seed=4))
    b = generate(SynthConfig(n_trajectories=20, seed=4))
    c = generate(SynthConfig(n_trajectories=25, seed=4))
    for x, y, z in zip(a, b, c):
        assert np.array_equal(x.points, y.points) and x.meta == y.meta
        assert np.array_equal(x.points, z.points)
    assert generate(SynthConfig(n_trajectories=0)) == []


def test_geometry_speed_and_sampling():
    cfg = SynthConfig(n_trajectories=20, sigma_km=0.0)
    step = cfg.speed_kmh * cfg.interval_s / 3600.0
    for t in generate(cfg):
        if len(t) < 3:
            continue
        seg = haversine_np(t.points[:-1, 0], t.points[:-1, 1], t.points[1:, 0], t.points[1:, 1])
        assert seg.max() <= step * 1.001
        assert np.allclose(seg, seg[0], rtol=1e-3)


def test_destination_frequencies_match_softmax():
    # every trip starts at t0, which is midnight UTC
    cfg = SynthConfig(n_trajectories=10_000, n_hotspots=2, hotspots=[(41.12, -8.65), (41.18, -8.58)],
                      peak_hours=[0.0, 12.0], span_days=1.5 / 86400, sigma_km=0.0)
    assert (cfg.t0 / 3600.0) % 24 == 0
    p0 = math.e / (math.e + math.exp(-1.0))
    assert destination_probs(cfg.t0 / 3600.0, cfg)[0] == pytest.approx(p0, abs=1e-12)
    hits = sum(hotspot_index(t, cfg) == 0 for t in generate(cfg))
    sd = math.sqrt(10_000 * p0 * (1 - p0))
    assert abs(hits - 10_000 * p0) < 3 * sd


def test_probs_valid_distribution():
    cfg = SynthConfig(concentration=3.0)
    p = destination_probs(np.linspace(0, 48, 97), cfg)
    assert p.shape == (97, 8)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-12) and np.all(p > 0)
    peaks = cfg.resolved_peaks()
    assert np.argmax(destination_probs(peaks[3], cfg)) == 3


def test_hotspots_separated_and_inside():
    cfg = SynthConfig(seed=11)
    h = cfg.resolved_hotspots()
    assert h.shape == (8, 2) and contains_all(cfg.bbox, h)
    d = haversine_np(h[:, None, 0], h[:, None, 1], h[:, 0], h[:, 1])
    np.fill_diagonal(d, np.inf)
    assert d.min() > 1.0
    d = cfg.to_dict()
    assert d["hotspots"] == h.tolist() and len(d["peak_hours"]) == 8


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_hotspots=0)
    with pytest.raises(ValueError):
        SynthConfig(n_trajectories=-1)
    with pytest.raises(ValueError):
        SynthConfig(n_hotspots=2, hotspots=[(41.1, -8.6)])


def test_geometric_median_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.uniform([41.1, -8.7], [41.2, -8.5], size=(5, 2))
    w = rng.dirichlet(np.ones(5))
    m = geometric_median(pts, w)
    cost = lambda y: w @ haversine_np(y[0], y[1], pts[:, 0], pts[:, 1])
    grid = np.stack(np.meshgrid(np.linspace(41.1, 41.2, 201), np.linspace(-8.7, -8.5, 201)), -1)
    best = min(cost(g) for g in grid.reshape(-1, 2))
    assert cost(m) <= best + 1e-6


def bayes_mhd(corpus, cfg, use_time, q=0.1):
    total = 0.0
    for t in corpus:
        n = max(1, int(math.floor(q * len(t) + 0.5)))
        pred = bayes_prediction(t.points[:n], t.meta.timestamp / 3600.0 if use_time else None, cfg)
        total += haversine_np(pred[0], pred[1], t.points[-1, 0], t.points[-1, 1])
    return total / len(corpus)


def test_time_carries_information_at_early_prefix():
    cfg = SynthConfig(n_trajectories=200, seed=9, concentration=3.0)
    corpus = generate(cfg)
    with_t, without = bayes_mhd(corpus, cfg, True), bayes_mhd(corpus, cfg, False)
    assert with_t < 0.8 * without


def test_posterior_concentrates_with_more_points():
    cfg = SynthConfig(n_trajectories=1, seed=2, sigma_km=0.01)
    t = generate(cfg)[0]
    k = hotspot_index(t, cfg)
    late = hotspot_posterior(t.points[:max(2, int(0.8 * len(t)))], None, cfg)
    assert np.argmax(late) == k and late[k] > 0.9
