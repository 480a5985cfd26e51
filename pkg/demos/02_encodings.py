"""Soft geospatial encoding, sinusoidal time features and the metadata vector.

Run with ``python3 demos/02_encodings.py``.
"""
import numpy as np

from hyperdest import diffcore as dc
from hyperdest.encode import (
    MetadataEncoder, build_z, sample_references, soft_encode, soft_weights, temporal_features,
)
from hyperdest.geo import haversine_np
from hyperdest.synth import SynthConfig, generate

corpus = generate(SynthConfig(n_trajectories=300, seed=0))

# %% reference points: a seeded sample with a minimum separation
refs = sample_references(corpus, n=512, min_sep_km=0.1, seed=0)
d = haversine_np(refs.points[:, None, 0], refs.points[:, None, 1], refs.points[:, 0], refs.points[:, 1])
np.fill_diagonal(d, np.inf)
print(len(refs), "references, closest pair", d.min().round(3), "km")

# %% proximity weights: softmax of minus the distance in km
p = corpus[0].points[0]
w = soft_weights(p, refs)
top = np.argsort(w)[::-1][:5]
print("weights of the five nearest references:", w[top].round(3), "sum", w.sum())
print("their distances (km):", haversine_np(p[0], p[1], refs.points[top, 0], refs.points[top, 1]).round(3))

# %% the embedding of a point is the weighted mean of reference rows
E = dc.Tensor(np.random.default_rng(0).normal(size=(len(refs), 16)), requires_grad=True)
delta, e = soft_encode(p, refs, E)
print("embedding shape", e.shape, "matches delta @ E:", np.allclose(e.data, delta @ E.data))

# %% time: four phase-shifted sinusoids per day, week and year
t0 = corpus[0].meta.timestamp
feats = temporal_features(np.array([t0, t0 + 24 * 3600, t0 + 12 * 3600]))
print("day slots at t, t+24h, t+12h:\n", feats[:, :4].round(3))

# %% hypernetwork input: 12 time slots plus three 10-dim category embeddings
enc = MetadataEncoder.fit([t.meta for t in corpus])
rng = np.random.default_rng(1)
tables = [dc.Tensor(rng.normal(size=(len(v), 10))) for v in (enc.driver, enc.stand, enc.customer)]
z = build_z([t.meta for t in corpus[:4]], enc, tables)
print("z batch shape", z.shape)
