"""Differentiable operations.

Binary elementwise ops follow numpy broadcasting; gradients are summed
back to each operand's shape.  That is the only broadcasting rule used
(bias rows, per-row scales, batch-shared weights).
"""
from __future__ import annotations

import numpy as np

from ..geo import EARTH_RADIUS_KM
from .tensor import SliceGrad, Tensor, as_tensor, make_node


class ShapeError(ValueError):
    pass


class DegenerateWeightError(ValueError):
    """A weight row too close to zero to be normalised."""


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return make_node(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return make_node(out, (a, b), bw, "div")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_node(ad ** exponent, (a,),
                     lambda g: (g * exponent * ad ** (exponent - 1),), "power")


def matmul(a, b) -> Tensor:
    """``np.matmul`` for operands of rank >= 2 (leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions differ, {a.shape} @ {b.shape}") from None
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_node(ad @ bd, (a, b), bw, "matmul")


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return make_node(np.log(xd), (x,), lambda g: (g / xd,), "log")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_node(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))  # overflow-free logistic
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), bw, "softmax")


def sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / float(n))


def l2_norm(x, axis: int = -1, keepdims: bool = True) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    n = np.sqrt((xd * xd).sum(axis=axis, keepdims=True))

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(n > 0, g * xd / n, 0.0),)

    out = n if keepdims else np.squeeze(n, axis=axis)
    return make_node(out, (x,), bw, "l2_norm")


WEIGHT_NORM_EPS = 1e-12


def weight_norm(v, g) -> Tensor:
    """Rescale each row (last axis) of ``v`` to length ``g``: ``w = g * v / ||v||``.

    ``g`` holds one scale per row and broadcasts against ``v.shape[:-1]``.
    """
    v, g = as_tensor(v), as_tensor(g)
    norms = l2_norm(v, axis=-1, keepdims=True)
    smallest = float(norms.data.min()) if norms.data.size else 1.0
    if smallest < WEIGHT_NORM_EPS:
        raise DegenerateWeightError(f"weight row norm {smallest:.3g} below {WEIGHT_NORM_EPS}")
    scale = reshape(g, g.shape + (1,))
    return mul(v, div(scale, norms))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def swapaxes(x, a: int, b: int) -> Tensor:
    x = as_tensor(x)
    return make_node(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    return make_node(x.data[idx], (x,), lambda g: (SliceGrad(idx, g),), "getitem")


def embedding(table, idx) -> Tensor:
    """Rows ``table[idx]`` for an integer index array."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range for table with {table.shape[0]} rows")
    shape, dtype = table.shape, table.data.dtype

    def bw(g):
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, idx, g)
        return (out,)

    return make_node(table.data[idx], (table,), bw, "embedding")


def concat(xs, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make_node(out, xs, bw, "concat")


def stack(xs, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.stack([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[x.shape for x in xs]}") from None

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return make_node(out, xs, bw, "stack")


# Below this the arctangent form has a derivative singularity; switch to the
# small-angle expansion d = r * sqrt(dphi^2 + cos(phi1) cos(phi2) dlam^2).
HAVERSINE_SMALL_A = 1e-15


def haversine(p, q) -> Tensor:
    """Great-circle distance (km) between ``(..., 2)`` lat/lon degree tensors."""
    p, q = as_tensor(p), as_tensor(q)
    if p.shape[-1:] != (2,) or q.shape[-1:] != (2,):
        raise ShapeError(f"haversine needs (..., 2) inputs, got {p.shape} and {q.shape}")
    _broadcast_shape(p, q, "haversine")
    k = np.pi / 180.0
    r = EARTH_RADIUS_KM
    phi1, lam1 = p.data[..., 0] * k, p.data[..., 1] * k
    phi2, lam2 = q.data[..., 0] * k, q.data[..., 1] * k
    dphi, dlam = phi2 - phi1, lam2 - lam1
    c1, c2 = np.cos(phi1), np.cos(phi2)
    s1, s2 = np.sin(phi1), np.sin(phi2)
    sl2 = np.sin(dlam / 2.0) ** 2
    a = np.clip(np.sin(dphi / 2.0) ** 2 + c1 * c2 * sl2, 0.0, 1.0)
    small = a < HAVERSINE_SMALL_A

    dist = 2.0 * r * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))
    qn = np.sqrt(dphi ** 2 + c1 * c2 * dlam ** 2)
    dist = np.where(small, r * qn, dist)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            dd_da = np.where(small | (a >= 1.0), 0.0, r / np.sqrt(a * (1.0 - a)))
            sdp = 0.5 * np.sin(dphi)
            g_phi1 = dd_da * (-sdp - s1 * c2 * sl2)
            g_phi2 = dd_da * (sdp - c1 * s2 * sl2)
            g_lam2 = dd_da * (0.5 * c1 * c2 * np.sin(dlam))
            # small-angle branch
            inv = np.where(qn > 0, r / (2.0 * qn), 0.0)
            s_phi1 = inv * (-2.0 * dphi - s1 * c2 * dlam ** 2)
            s_phi2 = inv * (2.0 * dphi - c1 * s2 * dlam ** 2)
            s_lam2 = inv * (2.0 * c1 * c2 * dlam)
        g_phi1 = np.where(small, s_phi1, g_phi1) * g * k
        g_phi2 = np.where(small, s_phi2, g_phi2) * g * k
        g_lam2 = np.where(small, s_lam2, g_lam2) * g * k
        gp = np.stack([g_phi1, -g_lam2], axis=-1)
        gq = np.stack([g_phi2, g_lam2], axis=-1)
        return (_unbroadcast(gp, p.shape) if p.requires_grad else None,
                _unbroadcast(gq, q.shape) if q.requires_grad else None)

    return make_node(dist.astype(p.data.dtype, copy=False), (p, q), bw, "haversine")
