"""Mean Haversine distance metrics and comparison tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import diffcore as dc
from .geo import haversine_np
from .ingest import Trajectory
from .model import DestinationModel
from .train import pad_and_mask

PREFIX_FRACTIONS = (0.1, 0.3, 0.5, 0.7, 0.9)

Predictor = Callable[[Sequence[Trajectory]], list]


@dataclass
class EvalReport:
    mhd_km: float
    mhd_at: dict = field(default_factory=dict)
    count: int = 0
    label: str = ""

    def row(self) -> list[float]:
        return [self.mhd_km] + [self.mhd_at[q] for q in PREFIX_FRACTIONS]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "count", "MHD"] + [f"MHD_{q}" for q in PREFIX_FRACTIONS])
        w.writerow([self.label, self.count] + [repr(v) for v in self.row()])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rows = list(csv.reader(io.StringIO(text)))
        values = [float(v) for v in rows[1][2:]]
        return cls(values[0], dict(zip(PREFIX_FRACTIONS, values[1:])), int(rows[1][1]), rows[1][0])


def prefix_index(q: float, n: int) -> int:
    """0-based index of the prediction made after the first ``q`` of ``n`` points.

    The 1-based prefix length is ``max(1, round(q * n))`` with halves rounded up.
    """
    return max(1, int(math.floor(q * n + 0.5))) - 1


def model_predictor(model: DestinationModel, batch_size: int = 256) -> Predictor:
    """Wrap a model as a batched per-prefix predictor."""

    def predict(trajs: Sequence[Trajectory]) -> list[np.ndarray]:
        out = []
        with dc.no_grad():
            for start in range(0, len(trajs), batch_size):
                batch = trajs[start:start + batch_size]
                pts, _ = pad_and_mask(batch)
                pred = model(pts, [t.meta for t in batch]).data.astype(np.float64)
                out.extend(pred[i, :len(t)] for i, t in enumerate(batch))
        return out

    return predict


def evaluate(predictor: Union[DestinationModel, Predictor], corpus: Sequence[Trajectory],
             label: str = "") -> EvalReport:
    """MHD over all prefixes and at the standard prefix fractions.

    ``predictor`` is a model or any callable returning, for each trajectory,
    an ``(N, 2)`` array of per-prefix destination guesses.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("cannot evaluate on an empty validation set")
    if isinstance(predictor, DestinationModel):
        predictor = model_predictor(predictor)
    preds = predictor(corpus)
    per_traj = []
    at = {q: [] for q in PREFIX_FRACTIONS}
    for traj, pred in zip(corpus, preds):
        pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
        if len(pred) != len(traj):
            raise ValueError(f"predictor returned {len(pred)} guesses for {len(traj)} points")
        dest = traj.points[-1]
        d = haversine_np(pred[:, 0], pred[:, 1], dest[0], dest[1])
        per_traj.append(math.fsum(d) / len(d))
        for q in PREFIX_FRACTIONS:
            at[q].append(float(d[prefix_index(q, len(d))]))
    n = len(corpus)
    return EvalReport(
        mhd_km=math.fsum(per_traj) / n,
        mhd_at={q: math.fsum(v) / n for q, v in at.items()},
        count=n,
        label=label,
    )


PUBLISHED_NOTE = "published, not reproduced"
# Porto results reported for the original models (km); None where not reported.
PUBLISHED_ROWS = [
    ("pre-LSTM", [1.354, 2.482, 1.844, 1.225, 0.729, 0.394]),
    ("hyper-LSTM", [1.320, 2.459, 1.825, 1.214, 0.691, 0.334]),
    ("post-LSTM", [1.317, 2.429, 1.800, 1.195, 0.678, 0.335]),
    ("Concatenation", [1.432, None, None, None, None, None]),
    ("No metadata", [1.382, None, None, None, None, None]),
    ("Day only", [1.322, None, None, None, None, None]),
    ("Week only", [1.329, None, None, None, None, None]),
    ("Year only", [1.337, None, None, None, None, None]),
]


def compare(reports: Sequence[EvalReport], include_published: bool = True) -> str:
    """Aligned plain-text table of MHD and MHD_q columns (km)."""
    header = ["model", "MHD"] + [f"MHD_{q}" for q in PREFIX_FRACTIONS]
    rows = [[r.label or f"model {i}"] + [f"{v:.3f}" for v in r.row()]
            for i, r in enumerate(reports)]
    if include_published:
        rows += [[f"{name} ({PUBLISHED_NOTE})"] + ["-" if v is None else f"{v:.3f}" for v in vals]
                 for name, vals in PUBLISHED_ROWS]
    widths = [max(len(r[c]) for r in rows + [header]) for c in range(len(header))]
    lines = []
    for i, r in enumerate([header] + rows):
        cells = [r[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
