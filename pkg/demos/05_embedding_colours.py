"""Colour the learned reference embeddings and look for structure.

Writes ``embedding_colours.csv`` (lat, lon, r, g, b) in the working directory;
plot it with any scatter tool.  Nearby references around the same hotspot
end up with similar colours once training has moved the embeddings further
than their random start; a small initial spread makes that quick to see.
"""
import numpy as np

from hyperdest.encode import sample_references
from hyperdest.export import embedding_colors, export_embedding_colors
from hyperdest.geo import haversine_np
from hyperdest.model import ModelSpec
from hyperdest.synth import SynthConfig, generate
from hyperdest.train import TrainConfig, build_model, train

cfg = SynthConfig(n_trajectories=300, seed=1, concentration=4.0)
corpus = generate(cfg)
refs = sample_references(corpus, n=64, min_sep_km=0.3, seed=0)
tc = TrainConfig(epochs=5, batch_size=32, lr=1e-2, variant="naive_baseline")
spec = ModelSpec(variant="naive_baseline", n_ref=len(refs), embed_init_std=0.1)
hotspots = cfg.resolved_hotspots()
d = haversine_np(refs.points[:, None, 0], refs.points[:, None, 1], hotspots[:, 0], hotspots[:, 1])
near, close = d.argmin(1), np.where(d.min(1) < 1.0)[0]


def spread(E):
    col = embedding_colors(E).astype(float)
    same, other = [], []
    for i, a in enumerate(close):
        for b in close[i + 1:]:
            (same if near[a] == near[b] else other).append(np.linalg.norm(col[a] - col[b]))
    return np.mean(same), np.mean(other)


# %% colour distance between references near the same hotspot vs different ones
print("untrained: same hotspot %.0f, different %.0f" % spread(build_model(corpus, refs, tc, spec).E_ref.data))
model = train(corpus, refs, tc, spec).model
print("trained:   same hotspot %.0f, different %.0f" % spread(model.E_ref.data))

# %% write the file
colours = export_embedding_colors(model.E_ref.data, refs, "embedding_colours.csv")
print("wrote", len(colours), "rows to embedding_colours.csv")
