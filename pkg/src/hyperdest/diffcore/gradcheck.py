"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(f: Callable[[], Tensor], param: Tensor, eps: float = 1e-5,
                   entries: Optional[np.ndarray] = None) -> np.ndarray:
    """Central differences of the scalar ``f()`` with respect to ``param.data``.

    Only the flat positions in ``entries`` are perturbed (all by default);
    the rest of the result stays zero.
    """
    grad = np.zeros_like(param.data)
    if not param.data.flags.c_contiguous:
        param.data = np.ascontiguousarray(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in (range(flat.size) if entries is None else entries):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f().data)
        flat[i] = orig - eps
        fm = float(f().data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``, zero when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
                    max_entries: Optional[int] = None, seed: int = 0) -> dict[str, float]:
    """Relative error between reverse-mode and numerical gradients, per parameter.

    ``f`` must rebuild the computation from ``params`` on every call.  With
    ``max_entries``, larger tensors are compared on a seeded random subset
    of that many positions.
    """
    for p in params:
        p.zero_grad()
    backward(f())
    rng = np.random.default_rng(seed)
    errors = {}
    for i, p in enumerate(params):
        analytic = p.grad.reshape(-1).copy()
        entries = None
        if max_entries is not None and p.data.size > max_entries:
            entries = np.sort(rng.choice(p.data.size, size=max_entries, replace=False))
        numeric = numerical_grad(f, p, eps, entries).reshape(-1)
        if entries is not None:
            analytic, numeric = analytic[entries], numeric[entries]
        errors[p.name or f"param{i}"] = relative_error(analytic, numeric)
    return errors
