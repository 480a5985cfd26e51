"""Reverse-mode differentiation over numpy arrays.

A :class:`Tensor` wraps an ``ndarray``.  Every operation on tensors that
need gradients records its parents and a closure mapping the output
gradient to parent gradients.  :func:`backward` walks the recorded graph
in reverse topological order and accumulates (``+=``) into ``.grad`` of
every leaf with ``requires_grad``.

The graph is rebuilt on every forward pass, which keeps variable-length
recurrences trivial.
"""
from __future__ import annotations

import os
from typing import Callable, Optional, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float64
_DEBUG = bool(os.environ.get("HYPERDEST_DEBUG"))


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_debug(flag: bool) -> None:
    """Check every forward result for NaN/Inf when enabled."""
    global _DEBUG
    _DEBUG = flag


class NonFiniteError(FloatingPointError):
    pass


_GRAD_ENABLED = True


class no_grad:
    """Context manager: operations inside record no graph (inference only)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "name")

    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False, name: str = "", dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(self.data) if requires_grad else None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Optional[Callable] = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        label = self.name or self.op
        return f"Tensor({label}, shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def swapaxes(self, a, b):
        from . import ops
        return ops.swapaxes(self, a, b)

    @property
    def T(self):
        return self.swapaxes(-1, -2)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Create the output of an operation.

    ``backward_fn(g)`` receives the output gradient and returns one gradient
    (or ``None``) per parent, in order.
    """
    if _DEBUG and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = ""
    out.op = op
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    else:
        out.requires_grad = False
        out.parents = ()
        out.backward_fn = None
    return out


class SliceGrad:
    """Gradient that is zero except on ``parent[index]``.

    Lets slicing ops skip materialising a full-size zero array per slice.
    """

    __slots__ = ("index", "value", "basic")

    def __init__(self, index, value):
        self.index = index
        self.value = value
        self.basic = _is_basic_index(index)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(i is None or i is Ellipsis or isinstance(i, (int, np.integer, slice)) for i in items)


class Graph:
    """Operations reachable from a result, in topological order (inputs first)."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in reversed(node.parents):
                if id(parent) not in seen:
                    stack.append((parent, False))

    def __len__(self):
        return len(self.nodes)

    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if not n.parents]


def backward(loss: Tensor) -> Graph:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every trainable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = Graph(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    owned: set[int] = set()  # keys whose array may be updated in place
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        parent_grads = node.backward_fn(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if isinstance(pg, SliceGrad):
                if key not in grads:
                    grads[key] = np.zeros_like(parent.data)
                    owned.add(key)
                elif key not in owned:
                    grads[key] = np.array(grads[key])
                    owned.add(key)
                if pg.basic:
                    grads[key][pg.index] += pg.value
                else:
                    np.add.at(grads[key], pg.index, pg.value)
            elif key in grads:
                grads[key] = grads[key] + pg
                owned.add(key)
            else:
                grads[key] = pg
    return graph


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()
