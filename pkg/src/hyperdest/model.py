"""Layer zoo and the five destination-prediction architectures.

Every variant maps a padded batch of point embeddings ``(B, T, m)`` to
softmax weights ``alpha`` over the reference points at every step, so a
single causal pass yields one destination guess per prefix.

=================  ==========================================================
variant            wiring after the point embeddings
=================  ==========================================================
pre_lstm           hyper-Linear(m->H) -> LSTM(H->H) -> head
hyper_lstm         hyper-LSTM(m->H) -> head
post_lstm          LSTM(m->H) -> hyper-Linear(H->H) -> head(64->128->n_ref)
concat_baseline    LSTM(m->H) -> concat(h, z) -> Linear(H+|z|->H) -> head
naive_baseline     LSTM(m->H) -> Linear(H->H) -> head
=================  ==========================================================

``head`` is Linear(H->128) -> Linear(128->n_ref) -> softmax, without
nonlinearities.  Hyper layers produce their weight matrices from the
metadata vector ``z`` through one linear map followed by per-row weight
normalisation; biases are generated but not normalised.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import diffcore as dc
from .encode import (
    CATEGORY_DIM, TEMPORAL_DIM, TIMESCALES, MetadataEncoder, ReferenceSet, build_z, soft_weights,
)
from .ingest import MetadataRaw

VARIANTS = ("pre_lstm", "hyper_lstm", "post_lstm", "concat_baseline", "naive_baseline")
HYPER_VARIANTS = ("pre_lstm", "hyper_lstm", "post_lstm")
VARIANT_ALIASES = {
    "pre-lstm": "pre_lstm", "hyper-lstm": "hyper_lstm", "post-lstm": "post_lstm",
    "concat": "concat_baseline", "naive": "naive_baseline",
}


def canonical_variant(name: str) -> str:
    name = VARIANT_ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {', '.join(VARIANT_ALIASES)}")
    return name


@dataclass
class ModelSpec:
    variant: str = "post_lstm"
    n_ref: int = 4096
    embed_dim: int = 16
    hidden: int = 64
    penultimate: int = 128
    category_dim: int = CATEGORY_DIM
    timescales: tuple = TIMESCALES
    embed_init_std: float = 1.0
    hyper_init: float = 0.05
    hyper_bias_init: float = 0.01

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        self.timescales = tuple(self.timescales)
        bad = set(self.timescales) - set(TIMESCALES)
        if bad:
            raise ValueError(f"unknown timescales {sorted(bad)}")

    @property
    def z_dim(self) -> int:
        return TEMPORAL_DIM + 3 * self.category_dim

    @property
    def uses_metadata(self) -> bool:
        return self.variant != "naive_baseline"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["timescales"] = list(self.timescales)
        return d


def _param(data, name: str) -> dc.Tensor:
    return dc.Tensor(data, requires_grad=True, name=name)


class Linear:
    """``x @ W.T + b`` over the last axis."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str):
        bound = 1.0 / np.sqrt(n_in)
        self.W = _param(rng.uniform(-bound, bound, (n_out, n_in)), f"{name}.W")
        self.b = _param(rng.uniform(-bound, bound, n_out), f"{name}.b")

    def parameters(self) -> list[dc.Tensor]:
        return [self.W, self.b]

    def __call__(self, x: dc.Tensor) -> dc.Tensor:
        return dc.matmul(x, dc.swapaxes(self.W, 0, 1)) + self.b


def lstm_step(x_proj: dc.Tensor, h: dc.Tensor, c: dc.Tensor, W_h: dc.Tensor
              ) -> tuple[dc.Tensor, dc.Tensor]:
    """One recurrence step.

    ``x_proj`` is the input projection plus bias, ``(B, 4H)``, gate order
    input, forget, candidate, output.  ``W_h`` is ``(4H, H)`` shared or
    ``(B, 4H, H)`` per sample.
    """
    H = h.shape[-1]
    if W_h.ndim == 2:
        rec = dc.matmul(h, dc.swapaxes(W_h, 0, 1))
    else:
        rec = dc.reshape(dc.matmul(dc.reshape(h, (h.shape[0], 1, H)), dc.swapaxes(W_h, 1, 2)),
                         (h.shape[0], 4 * H))
    gates = x_proj + rec
    i = dc.sigmoid(gates[:, 0:H])
    f = dc.sigmoid(gates[:, H:2 * H])
    g = dc.tanh(gates[:, 2 * H:3 * H])
    o = dc.sigmoid(gates[:, 3 * H:4 * H])
    c_new = f * c + i * g
    h_new = o * dc.tanh(c_new)
    return h_new, c_new


def run_lstm(x_proj: dc.Tensor, W_h: dc.Tensor, hidden: int) -> dc.Tensor:
    """Unroll over ``x_proj`` ``(B, T, 4H)`` from a zero state; returns ``(B, T, H)``."""
    B, T = x_proj.shape[:2]
    dtype = x_proj.data.dtype
    h = dc.Tensor(np.zeros((B, hidden), dtype=dtype))
    c = dc.Tensor(np.zeros((B, hidden), dtype=dtype))
    outs = []
    for t in range(T):
        h, c = lstm_step(x_proj[:, t], h, c, W_h)
        outs.append(h)
    return dc.stack(outs, axis=1)


class LSTM:
    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, name: str):
        bound = 1.0 / np.sqrt(hidden)
        self.hidden = hidden
        self.W_x = _param(rng.uniform(-bound, bound, (4 * hidden, n_in)), f"{name}.W_x")
        self.W_h = _param(rng.uniform(-bound, bound, (4 * hidden, hidden)), f"{name}.W_h")
        b = rng.uniform(-bound, bound, 4 * hidden)
        b[hidden:2 * hidden] += 1.0  # forget-gate bias
        self.b = _param(b, f"{name}.b")

    def parameters(self) -> list[dc.Tensor]:
        return [self.W_x, self.W_h, self.b]

    def __call__(self, x: dc.Tensor) -> dc.Tensor:
        x_proj = dc.matmul(x, dc.swapaxes(self.W_x, 0, 1)) + self.b
        return run_lstm(x_proj, self.W_h, self.hidden)


@dataclass
class Block:
    name: str
    shape: tuple
    normalized: bool

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class HyperLayer:
    """Linear map ``z -> theta`` generating the parameter blocks of a target layer.

    Weight-matrix blocks are reshaped and every row is rescaled to its own
    learned length ``g`` (initialised to 1); bias blocks pass through.
    """

    def __init__(self, z_dim: int, blocks: Sequence[Block], rng: np.random.Generator,
                 name: str, init: float = 0.05, bias_init: float = 0.01):
        self.blocks = list(blocks)
        self.z_dim = z_dim
        total = sum(b.size for b in self.blocks)
        self.A = _param(rng.uniform(-init, init, (total, z_dim)), f"{name}.A")
        self.c = _param(np.full(total, bias_init), f"{name}.c")
        self.g = {b.name: _param(np.ones(b.shape[0]), f"{name}.g.{b.name}")
                  for b in self.blocks if b.normalized}

    def parameters(self) -> list[dc.Tensor]:
        return [self.A, self.c] + list(self.g.values())

    def raw(self, z: dc.Tensor) -> dc.Tensor:
        """Pre-normalisation output ``A z + c``, shape ``(B, total)``."""
        return dc.matmul(z, dc.swapaxes(self.A, 0, 1)) + self.c

    def split(self, theta: dc.Tensor) -> dict[str, dc.Tensor]:
        lead = theta.shape[:-1]
        out, start = {}, 0
        for b in self.blocks:
            piece = dc.reshape(theta[..., start:start + b.size], lead + b.shape)
            start += b.size
            out[b.name] = dc.weight_norm(piece, self.g[b.name]) if b.normalized else piece
        return out

    def __call__(self, z: dc.Tensor) -> dict[str, dc.Tensor]:
        return self.split(self.raw(z))


def generate_params(layer: HyperLayer, z: dc.Tensor) -> dict[str, dc.Tensor]:
    return layer(z)


class DestinationModel:
    """All learnable parameters plus the forward pass for one architecture."""

    def __init__(self, spec: ModelSpec, refs: ReferenceSet, encoder: MetadataEncoder,
                 seed: int = 0):
        if spec.n_ref != len(refs):
            raise dc.ShapeError(f"spec.n_ref={spec.n_ref} but {len(refs)} reference points")
        self.spec = spec
        self.refs = refs
        self.encoder = encoder
        rng = np.random.default_rng(seed)
        m, H, P, Z = spec.embed_dim, spec.hidden, spec.penultimate, spec.z_dim
        sd = spec.embed_init_std
        self.E_ref = _param(rng.normal(0.0, sd, (spec.n_ref, m)), "E_ref")
        self.tables: list[dc.Tensor] = []
        if spec.uses_metadata:
            self.tables = [
                _param(rng.normal(0.0, sd, (len(vocab), spec.category_dim)), f"emb.{key}")
                for key, vocab in (("driver", encoder.driver), ("stand", encoder.stand),
                                   ("customer", encoder.customer))
            ]
        hyper_kw = dict(init=spec.hyper_init, bias_init=spec.hyper_bias_init)
        v = spec.variant
        self.hyper: Optional[HyperLayer] = None
        self.lstm: Optional[LSTM] = None
        self.mid: Optional[Linear] = None
        if v == "pre_lstm":
            self.hyper = HyperLayer(Z, [Block("W", (H, m), True), Block("b", (H,), False)],
                                    rng, "hyper", **hyper_kw)
            self.lstm = LSTM(H, H, rng, "lstm")
        elif v == "hyper_lstm":
            self.hyper = HyperLayer(Z, [Block("W_x", (4 * H, m), True),
                                        Block("W_h", (4 * H, H), True),
                                        Block("b", (4 * H,), False)], rng, "hyper", **hyper_kw)
        elif v == "post_lstm":
            self.lstm = LSTM(m, H, rng, "lstm")
            self.hyper = HyperLayer(Z, [Block("W", (H, H), True), Block("b", (H,), False)],
                                    rng, "hyper", **hyper_kw)
        elif v == "concat_baseline":
            self.lstm = LSTM(m, H, rng, "lstm")
            self.mid = Linear(H + Z, H, rng, "mid")
        else:
            self.lstm = LSTM(m, H, rng, "lstm")
            self.mid = Linear(H, H, rng, "mid")
        self.head1 = Linear(H, P, rng, "head1")
        self.head2 = Linear(P, spec.n_ref, rng, "head2")

    def parameters(self) -> list[dc.Tensor]:
        params = [self.E_ref] + self.tables
        for layer in (self.hyper, self.lstm, self.mid, self.head1, self.head2):
            if layer is not None:
                params += layer.parameters()
        return params

    def named_parameters(self) -> dict[str, dc.Tensor]:
        return {p.name: p for p in self.parameters()}

    # -- forward pieces -------------------------------------------------
    def metadata_vector(self, metas: Sequence[MetadataRaw]) -> Optional[dc.Tensor]:
        if not self.spec.uses_metadata:
            return None
        return build_z(metas, self.encoder, self.tables, self.spec.timescales)

    def embed(self, points: np.ndarray) -> dc.Tensor:
        """Soft-encode ``(B, T, 2)`` points into ``(B, T, m)`` embeddings."""
        delta = dc.Tensor(soft_weights(points, self.refs), dtype=self.E_ref.data.dtype)
        return dc.matmul(delta, self.E_ref)

    def forward(self, e: dc.Tensor, z: Optional[dc.Tensor]) -> dc.Tensor:
        """Reference weights ``alpha`` ``(B, T, n_ref)`` from embeddings ``(B, T, m)``."""
        spec = self.spec
        if e.ndim != 3 or e.shape[-1] != spec.embed_dim:
            raise dc.ShapeError(f"expected (B, T, {spec.embed_dim}) embeddings, got {e.shape}")
        if spec.uses_metadata:
            if z is None or z.shape != (e.shape[0], spec.z_dim):
                raise dc.ShapeError(f"expected z of shape ({e.shape[0]}, {spec.z_dim}), "
                                    f"got {None if z is None else z.shape}")
        v, H = spec.variant, spec.hidden
        if v == "pre_lstm":
            theta = self.hyper(z)
            x = _batched_linear(e, theta["W"], theta["b"])
            h = self.lstm(x)
        elif v == "hyper_lstm":
            theta = self.hyper(z)
            x_proj = _batched_linear(e, theta["W_x"], theta["b"])
            h = run_lstm(x_proj, theta["W_h"], H)
        elif v == "post_lstm":
            theta = self.hyper(z)
            h = _batched_linear(self.lstm(e), theta["W"], theta["b"])
        elif v == "concat_baseline":
            h = self.lstm(e)
            T = h.shape[1]
            zt = dc.reshape(z, (z.shape[0], 1, z.shape[1])) * np.ones((1, T, 1), dtype=h.data.dtype)
            h = self.mid(dc.concat([h, zt], axis=-1))
        else:
            h = self.mid(self.lstm(e))
        return dc.softmax(self.head2(self.head1(h)), axis=-1)

    def refs_tensor(self) -> dc.Tensor:
        return dc.Tensor(self.refs.points, dtype=self.E_ref.data.dtype)

    def __call__(self, points: np.ndarray, metas: Sequence[MetadataRaw]) -> dc.Tensor:
        """Predicted destinations ``(B, T, 2)`` for padded ``(B, T, 2)`` points."""
        alpha = self.forward(self.embed(points), self.metadata_vector(metas))
        return predict_point(alpha, self.refs_tensor())

    def predict(self, traj) -> np.ndarray:
        """One destination guess per prefix of a single trajectory, ``(N, 2)``."""
        return self(traj.points[None], [traj.meta]).data[0].astype(np.float64)


def _batched_linear(x: dc.Tensor, W: dc.Tensor, b: dc.Tensor) -> dc.Tensor:
    """Per-sample affine map: ``x`` ``(B, T, in)``, ``W`` ``(B, out, in)``, ``b`` ``(B, out)``."""
    out = dc.matmul(x, dc.swapaxes(W, 1, 2))
    return out + dc.reshape(b, (b.shape[0], 1, b.shape[1]))


def predict_point(alpha: dc.Tensor, refs: dc.Tensor) -> dc.Tensor:
    """Convex combination of reference coordinates, ``alpha @ refs``."""
    if alpha.ndim == 1:
        return dc.reshape(dc.matmul(dc.reshape(alpha, (1, -1)), refs), (2,))
    return dc.matmul(alpha, refs)


def trajectory_loss(pred: dc.Tensor, dest, mask: Optional[np.ndarray] = None) -> dc.Tensor:
    """Mean Haversine distance (km) from every prefix prediction to the destination.

    ``pred`` is ``(N, 2)`` or a padded batch ``(B, T, 2)`` with boolean
    ``mask`` ``(B, T)``; the batch result is the mean of per-trajectory
    losses.
    """
    dest = dc.as_tensor(dest)
    if pred.ndim == 2:
        return dc.mean(dc.haversine(pred, dc.reshape(dest, (1, 2))))
    B = pred.shape[0]
    d = dc.haversine(pred, dc.reshape(dest, (B, 1, 2)))
    if mask is None:
        mask = np.ones(d.shape, dtype=bool)
    m = mask.astype(d.data.dtype)
    per_traj = dc.sum(d * m, axis=1) / m.sum(axis=1)
    return dc.mean(per_traj)
