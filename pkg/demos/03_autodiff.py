"""The reverse-mode engine, weight normalization and gradient checks.

Run with ``python3 demos/03_autodiff.py``.
"""
import numpy as np

from hyperdest import diffcore as dc
from hyperdest.model import VARIANTS, Block, HyperLayer, trajectory_loss

rng = np.random.default_rng(0)

# %% a small graph and its gradients
W = dc.Tensor(rng.normal(size=(3, 3)), requires_grad=True, name="W")
x = dc.Tensor(rng.normal(size=(3, 1)))
target = np.array([[1.0], [0.0], [0.0]])
# squared error of a softmax over the three outputs
loss = lambda: dc.sum((dc.softmax(dc.matmul(W, x), axis=0) - target) ** 2)
dc.backward(loss())
print("dL/dW:\n", W.grad.round(5))
print("rel. error vs central differences:", dc.check_gradients(loss, [W]))

# %% weight normalization fixes the length of every generated row
hyper = HyperLayer(42, [Block("W", (8, 6), True), Block("b", (8,), False)], rng, "demo")
hyper.g["W"].data = rng.uniform(0.5, 2.0, 8)
z = dc.Tensor(rng.normal(size=(2, 42)))
theta = hyper(z)
print("row lengths:", np.linalg.norm(theta["W"].data, axis=-1)[0].round(6))
print("g          :", hyper.g["W"].data.round(6))
# only the direction of the raw output matters
v = hyper.raw(z)
scaled = hyper.split(dc.Tensor(7.5 * v.data))
print("max change when raw output is scaled by 7.5:", np.abs(scaled["W"].data - theta["W"].data).max())

# %% every architecture, end to end, at toy size
# points sit near (0, 0) where finite differences of distances keep their digits
from hyperdest.encode import MetadataEncoder, ReferenceSet
from hyperdest.ingest import MetadataRaw
from hyperdest.model import DestinationModel, ModelSpec

refs = ReferenceSet(rng.normal(0, 0.02, (5, 2)))
metas = [MetadataRaw(1372636858, 1, stand=2), MetadataRaw(1372640000, 2)]
enc = MetadataEncoder.fit(metas, customer_min_count=1)
pts = rng.normal(0, 0.02, (2, 3, 2))
dest = rng.normal(0, 0.02, (2, 2))
for variant in VARIANTS:
    spec = ModelSpec(variant=variant, n_ref=5, embed_dim=3, hidden=4, penultimate=6)
    model = DestinationModel(spec, refs, enc, seed=1)
    f = lambda: trajectory_loss(model(pts, metas), dest)
    errs = dc.check_gradients(f, model.parameters(), max_entries=20)
    print(f"{variant:>16}: worst relative error {max(errs.values()):.1e}")
