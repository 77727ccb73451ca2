"""Graph nodes and the reverse-mode sweep.

A :class:`Node` wraps a numpy array. Operations in :mod:`morphparse.autodiff.ops`
create new nodes and, when any input requires a gradient, attach a closure that
maps the output gradient to one gradient per parent. :func:`backward` walks the
graph once in reverse topological order. Only leaf nodes (parameters and user
inputs created with ``requires_grad=True``) keep a persistent ``.grad``;
intermediate gradients live for the duration of one sweep.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_state = threading.local()
_default_dtype = np.float32

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype) -> None:
    """Set the float type used for new parameters and constants."""
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    _default_dtype = dtype


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction in the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Node:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "op")

    def __init__(self, value, requires_grad: bool = False, dtype=None):
        if dtype is None:
            dtype = value.dtype if isinstance(value, np.ndarray) and value.dtype.kind == "f" else _default_dtype
        self.value = np.asarray(value, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents: tuple = ()
        self.backward_fn: Optional[BackwardFn] = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops

        return ops.index(self, key)


class Parameter(Node):
    """A trainable leaf node with a name and an L2 rate."""

    __slots__ = ("name", "l2_rate")

    ALLOWED_L2 = (0.0, 1e-6, 1e-5)

    def __init__(self, value, name: str = "", l2_rate: float = 0.0, dtype=None):
        super().__init__(value, requires_grad=True, dtype=dtype or _default_dtype)
        if l2_rate not in self.ALLOWED_L2:
            raise ValueError(f"l2_rate must be one of {self.ALLOWED_L2}, got {l2_rate}")
        self.name = name
        self.l2_rate = l2_rate

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, l2={self.l2_rate})"


def as_node(x, dtype=None) -> Node:
    if isinstance(x, Node):
        return x
    return Node(np.asarray(x), requires_grad=False, dtype=dtype or _default_dtype)


def make_node(value: np.ndarray, parents: Sequence[Node], backward_fn: BackwardFn, op: str) -> Node:
    """Create an op output, recording the graph only if some parent needs it."""
    out = Node(value, dtype=value.dtype)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
        out.op = op
    return out


class SliceGrad:
    """Gradient that is non-zero only on ``parent[key]``; avoids dense temporaries."""

    __slots__ = ("key", "value")

    def __init__(self, key, value: np.ndarray):
        self.key = key
        self.value = value


def _topological_order(root: Node) -> list:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Node, parameters: Optional[Sequence[Node]] = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Leaves listed in ``parameters`` that the loss does not reach get an
    explicit zero gradient instead of ``None``.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if parameters is not None:
        for p in parameters:
            if p.grad is None:
                p.grad = np.zeros_like(p.value)
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    grads = {id(loss): np.ones_like(loss.value)}
    owned = set()
    for node in reversed(order):
        g = grads.pop(id(node), None)
        owned.discard(id(node))
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node.backward_fn(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            buf = grads.get(key)
            if isinstance(pg, SliceGrad):
                if buf is None:
                    buf = np.zeros_like(parent.value)
                elif key not in owned:
                    buf = buf.copy()
                buf[pg.key] += pg.value
                grads[key] = buf
                owned.add(key)
                continue
            if pg.shape != parent.value.shape:
                raise AssertionError(f"{node.op}: gradient shape {pg.shape} != {parent.value.shape}")
            if buf is None:
                grads[key] = pg
            elif key in owned:
                buf += pg
            else:
                grads[key] = buf + pg
                owned.add(key)
