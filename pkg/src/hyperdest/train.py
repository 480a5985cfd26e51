"""Optimisation loop: padded batches, Adam, global-norm clipping, seeds."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import diffcore as dc
from .encode import TIMESCALES, MetadataEncoder, ReferenceSet
from .ingest import Trajectory
from .model import DestinationModel, ModelSpec, canonical_variant, trajectory_loss

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    seed: int = 0
    variant: str = "post_lstm"
    timescales: tuple = TIMESCALES
    customer_min_count: int = 50

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        self.timescales = tuple(self.timescales)
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr >= 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["timescales"] = list(self.timescales)
        return d


class Adam:
    def __init__(self, params: Sequence[dc.Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def global_grad_norm(params: Sequence[dc.Tensor]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params))


def clip_gradients(params: Sequence[dc.Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


def pad_and_mask(batch: Sequence[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    """Stack trajectories into ``(B, T, 2)`` points and a ``(B, T)`` validity mask.

    Padding repeats each trajectory's last point; padded steps are masked
    out of the loss, and the recurrence is causal, so they cannot affect
    real steps.
    """
    T = max(len(t) for t in batch)
    pts = np.empty((len(batch), T, 2))
    mask = np.zeros((len(batch), T), dtype=bool)
    for i, traj in enumerate(batch):
        n = len(traj)
        pts[i, :n] = traj.points
        pts[i, n:] = traj.points[-1]
        mask[i, :n] = True
    return pts, mask


def batch_loss(model: DestinationModel, batch: Sequence[Trajectory]) -> dc.Tensor:
    pts, mask = pad_and_mask(batch)
    dest = np.array([t.points[-1] for t in batch])
    pred = model(pts, [t.meta for t in batch])
    return trajectory_loss(pred, dest, mask)


def split_validation(corpus: Sequence[Trajectory], seed: int = 0,
                     n_val: Optional[int] = None) -> tuple[list[Trajectory], list[Trajectory]]:
    """Seeded shuffle split: 10,000 held out for corpora of >= 20,000, else 10%."""
    n = len(corpus)
    if n_val is None:
        n_val = 10_000 if n >= 20_000 else int(round(0.1 * n))
    order = np.random.default_rng(seed).permutation(n)
    val = [corpus[i] for i in order[:n_val]]
    train = [corpus[i] for i in order[n_val:]]
    return train, val


@dataclass
class TrainResult:
    model: DestinationModel
    optimizer: Adam
    config: TrainConfig
    step_losses: list = field(default_factory=list)  # (epoch, step, loss_km)
    epoch_losses: list = field(default_factory=list)

    def write_loss_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "step", "loss_km"])
            for epoch, step, loss in self.step_losses:
                w.writerow([epoch, step, repr(loss)])


def build_model(corpus: Sequence[Trajectory], refs: ReferenceSet, config: TrainConfig,
                spec: Optional[ModelSpec] = None) -> DestinationModel:
    if spec is None:
        spec = ModelSpec(variant=config.variant, n_ref=len(refs), timescales=config.timescales)
    encoder = MetadataEncoder.fit([t.meta for t in corpus], config.customer_min_count)
    return DestinationModel(spec, refs, encoder, seed=config.seed)


def train(corpus: Sequence[Trajectory], refs: ReferenceSet, config: TrainConfig = TrainConfig(),
          spec: Optional[ModelSpec] = None, model: Optional[DestinationModel] = None,
          callback: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Fit a model with every prefix of every trajectory contributing to the loss.

    The loss of a batch is the mean over its trajectories of the per-trajectory
    mean prefix error.  Deterministic for a fixed ``config.seed``.

    Raises
    ------
    NumericalError
        If a batch loss is not finite; the message names epoch and step.
    """
    corpus = [t for t in corpus if len(t) > 0]
    if not corpus:
        raise ValueError("empty training corpus")
    if model is None:
        model = build_model(corpus, refs, config, spec)
    params = model.parameters()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.adam_eps)
    result = TrainResult(model, opt, config)
    rng = np.random.default_rng(config.seed)
    n = len(corpus)
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = [corpus[i] for i in order[start:start + config.batch_size]]
            dc.zero_grad(params)
            loss = batch_loss(model, batch)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch}, step {step}")
            dc.backward(loss)
            clip_gradients(params, config.clip_norm)
            opt.step()
            result.step_losses.append((epoch, step, value))
            total += value * len(batch)
            step += 1
        result.epoch_losses.append(total / n)
        log.info("epoch %d: mean loss %.4f km", epoch, total / n)
        if callback is not None:
            callback(epoch, total / n)
    return result
