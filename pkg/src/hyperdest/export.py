"""Colour-coded export of the learned reference embeddings.

Rows of the reference embedding table are projected onto their first three
principal components, each component min-max scaled to 0..255 and read as
an RGB colour.  Plot ``lat, lon`` coloured by ``r, g, b`` to see which
places the model treats alike.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .encode import ReferenceSet


def principal_components(X: np.ndarray, k: int = 3) -> np.ndarray:
    """Scores of the centred rows of ``X`` on the top ``k`` components.

    Sign of each component is fixed so its largest-magnitude loading is
    positive, making the projection deterministic.
    """
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    vt = vt[:k]
    signs = np.sign(vt[np.arange(len(vt)), np.argmax(np.abs(vt), axis=1)])
    signs[signs == 0] = 1.0
    scores = Xc @ (vt * signs[:, None]).T
    if scores.shape[1] < k:
        scores = np.pad(scores, ((0, 0), (0, k - scores.shape[1])))
    return scores


def embedding_colors(E: np.ndarray) -> np.ndarray:
    """``(n, 3)`` integer colours in 0..255; constant components map to 0."""
    scores = principal_components(np.asarray(E, dtype=np.float64), 3)
    lo, hi = scores.min(axis=0), scores.max(axis=0)
    span = hi - lo
    scaled = np.where(span > 1e-12, (scores - lo) / np.where(span > 1e-12, span, 1.0), 0.0)
    return np.rint(scaled * 255).astype(int)


def export_embedding_colors(E: np.ndarray, refs: ReferenceSet, path: str | Path) -> np.ndarray:
    colors = embedding_colors(E)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "r", "g", "b"])
        for (lat, lon), (r, g, b) in zip(refs.points, colors):
            w.writerow([repr(float(lat)), repr(float(lon)), r, g, b])
    return colors
