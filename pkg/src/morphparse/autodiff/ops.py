"""Differentiable primitives over :class:`~morphparse.autodiff.core.Node`.

Every function accepts nodes (or plain arrays, treated as constants) and returns
a node. Backward closures return one gradient per parent, ``None`` where the
parent does not need one.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .core import Node, SliceGrad, as_node, make_node


class ShapeError(ValueError):
    pass


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(op: str, a: Node, b: Node) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Node:
    a = as_node(a)
    b = as_node(b, dtype=a.dtype)
    _check_broadcast("add", a, b)
    value = a.value + b.value

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(value, (a, b), backward_fn, "add")


def sub(a, b) -> Node:
    a = as_node(a)
    b = as_node(b, dtype=a.dtype)
    _check_broadcast("sub", a, b)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.value - b.value, (a, b), backward_fn, "sub")


def mul(a, b) -> Node:
    a = as_node(a)
    b = as_node(b, dtype=a.dtype)
    _check_broadcast("mul", a, b)

    def backward_fn(g):
        ga = _unbroadcast(g * b.value, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.value, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.value * b.value, (a, b), backward_fn, "mul")


def matmul(a, b) -> Node:
    """``a @ b`` for ``(..., k) @ (k, m)`` or batched ``(B, n, k) @ (B, k, m)``."""
    a = as_node(a)
    b = as_node(b, dtype=a.dtype)
    if b.ndim == 2:
        if a.shape[-1] != b.shape[0]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    elif a.ndim == 3 and b.ndim == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    else:
        raise ShapeError(f"matmul: unsupported shapes {a.shape} and {b.shape}")
    value = a.value @ b.value

    def backward_fn(g):
        if b.ndim == 2:
            ga = g @ b.value.T if a.requires_grad else None
            gb = None
            if b.requires_grad:
                k = a.shape[-1]
                gb = a.value.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        ga = g @ b.value.transpose(0, 2, 1) if a.requires_grad else None
        gb = a.value.transpose(0, 2, 1) @ g if b.requires_grad else None
        return ga, gb

    return make_node(value, (a, b), backward_fn, "matmul")


def sum(x, axis=None) -> Node:  # noqa: A001 - mirrors numpy naming
    x = as_node(x)
    value = np.asarray(x.value.sum(axis=axis))

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return make_node(value, (x,), backward_fn, "sum")


def mean(x) -> Node:
    x = as_node(x)
    n = x.value.size

    def backward_fn(g):
        return (np.full(x.shape, g / n, dtype=x.dtype),)

    return make_node(np.asarray(x.value.mean()), (x,), backward_fn, "mean")


# ---------------------------------------------------------------- structure


def concat(nodes: Sequence, axis: int = -1) -> Node:
    nodes = [as_node(n) for n in nodes]
    ndim = nodes[0].ndim
    axis = axis % ndim
    for n in nodes[1:]:
        if n.ndim != ndim or any(n.shape[i] != nodes[0].shape[i] for i in range(ndim) if i != axis):
            raise ShapeError(f"concat: incompatible shapes {[m.shape for m in nodes]} on axis {axis}")
    value = np.concatenate([n.value for n in nodes], axis=axis)
    bounds = np.cumsum([0] + [n.shape[axis] for n in nodes])

    def backward_fn(g):
        out = []
        for i, n in enumerate(nodes):
            if not n.requires_grad:
                out.append(None)
                continue
            sl = [slice(None)] * ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return out

    return make_node(value, nodes, backward_fn, "concat")


def stack(nodes: Sequence, axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    value = np.stack([n.value for n in nodes], axis=axis)

    def backward_fn(g):
        return [np.take(g, i, axis=axis) if n.requires_grad else None for i, n in enumerate(nodes)]

    return make_node(value, nodes, backward_fn, "stack")


def reshape(x, shape) -> Node:
    x = as_node(x)
    value = x.value.reshape(shape)

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return make_node(value, (x,), backward_fn, "reshape")


def transpose(x, axes) -> Node:
    x = as_node(x)
    inverse = np.argsort(axes)

    def backward_fn(g):
        return (g.transpose(inverse),)

    return make_node(x.value.transpose(axes), (x,), backward_fn, "transpose")


def index(x, key) -> Node:
    """Basic (slice/int) indexing."""
    x = as_node(x)
    value = x.value[key]

    def backward_fn(g):
        return (SliceGrad(key, g),)

    return make_node(np.ascontiguousarray(value), (x,), backward_fn, "index")


def take(x, indices, axis: int = 0) -> Node:
    """Gather slices along ``axis`` with an integer index array of any shape."""
    x = as_node(x)
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[axis]):
        raise IndexError(f"take: index out of range for axis of size {x.shape[axis]}")
    value = np.take(x.value, indices, axis=axis)

    def backward_fn(g):
        out = np.zeros_like(x.value)
        moved = np.moveaxis(out, axis, 0)
        g_moved = np.moveaxis(g, list(range(axis, axis + indices.ndim)), list(range(indices.ndim)))
        np.add.at(moved, indices.reshape(-1), g_moved.reshape((-1,) + moved.shape[1:]))
        return (out,)

    return make_node(value, (x,), backward_fn, "take")


def embedding_lookup(table, ids) -> Node:
    return take(table, ids, axis=0)


def take_along_time(x, idx) -> Node:
    """``out[b, t] = x[b, idx[b, t]]`` for a ``(B, T, ...)`` input."""
    x = as_node(x)
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(x.shape[0])[:, None]
    value = x.value[rows, idx]

    def backward_fn(g):
        out = np.zeros_like(x.value)
        np.add.at(out, (np.broadcast_to(rows, idx.shape), idx), g)
        return (out,)

    return make_node(value, (x,), backward_fn, "take_along_time")


def broadcast_to(x, shape) -> Node:
    x = as_node(x)
    try:
        value = np.broadcast_to(x.value, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {tuple(shape)}") from None

    def backward_fn(g):
        return (_unbroadcast(g, x.shape),)

    return make_node(value, (x,), backward_fn, "broadcast_to")


def masked_fill(x, mask, fill_value: float) -> Node:
    """Replace entries where ``mask`` is true by a constant (no gradient there)."""
    x = as_node(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    value = np.where(mask, x.dtype.type(fill_value), x.value)

    def backward_fn(g):
        return (np.where(mask, 0, g).astype(g.dtype, copy=False),)

    return make_node(value, (x,), backward_fn, "masked_fill")


def blend(a, b, mask) -> Node:
    """``where(mask, a, b)`` with a constant boolean mask."""
    a = as_node(a)
    b = as_node(b, dtype=a.dtype)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), np.broadcast_shapes(a.shape, b.shape))
    value = np.where(mask, a.value, b.value)

    def backward_fn(g):
        ga = _unbroadcast(np.where(mask, g, 0), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.where(mask, 0, g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(value, (a, b), backward_fn, "blend")


# ---------------------------------------------------------------- activations


def tanh(x) -> Node:
    x = as_node(x)
    y = np.tanh(x.value)

    def backward_fn(g):
        return (g * (1.0 - y * y),)

    return make_node(y, (x,), backward_fn, "tanh")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def sigmoid(x) -> Node:
    x = as_node(x)
    y = _sigmoid(x.value)

    def backward_fn(g):
        return (g * y * (1.0 - y),)

    return make_node(y, (x,), backward_fn, "sigmoid")


def relu(x) -> Node:
    x = as_node(x)
    positive = x.value > 0
    y = np.where(positive, x.value, 0).astype(x.dtype, copy=False)

    def backward_fn(g):
        return (g * positive,)

    return make_node(y, (x,), backward_fn, "relu")


def _softmax(v: np.ndarray, axis: int) -> np.ndarray:
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis: int = -1) -> Node:
    x = as_node(x)
    y = _softmax(x.value, axis)

    def backward_fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_node(y, (x,), backward_fn, "softmax")


def log_softmax(x, axis: int = -1) -> Node:
    x = as_node(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    p = np.exp(y)

    def backward_fn(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make_node(y, (x,), backward_fn, "log_softmax")


def dropout(x, rate: float, train: bool, rng: Optional[np.random.Generator] = None, shared_axes=()) -> Node:
    """Inverted dropout; ``shared_axes`` reuse one mask along those axes (variational)."""
    x = as_node(x)
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask_shape = tuple(1 if i in shared_axes else s for i, s in enumerate(x.shape))
    keep = 1.0 - rate
    mask = (rng.random(mask_shape) < keep).astype(x.dtype) / x.dtype.type(keep)
    return mul(x, mask)


# ---------------------------------------------------------------- convolution


def conv1d(x, weight, bias=None, dilation: int = 1) -> Node:
    """Same-padded 1-D convolution over axis 1 of a ``(N, L, C_in)`` input.

    ``weight`` has shape ``(K, C_in, C_out)`` with odd ``K``; zero padding keeps
    the output length equal to the input length.
    """
    x = as_node(x)
    weight = as_node(weight, dtype=x.dtype)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[2] != weight.shape[1]:
        raise ShapeError(f"conv1d: incompatible shapes {x.shape} and {weight.shape}")
    k, c_in, c_out = weight.shape
    if k % 2 != 1:
        raise ShapeError(f"conv1d: kernel size must be odd, got {k}")
    n, length, _ = x.shape
    pad = dilation * (k - 1) // 2
    if k == 1:
        cols = x.value
    else:
        xp = np.pad(x.value, ((0, 0), (pad, pad), (0, 0)))
        cols = np.concatenate([xp[:, j * dilation : j * dilation + length, :] for j in range(k)], axis=2)
    w2 = weight.value.reshape(k * c_in, c_out)
    value = cols @ w2
    parents = [x, weight]
    if bias is not None:
        bias = as_node(bias, dtype=x.dtype)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv1d: bias shape {bias.shape} != ({c_out},)")
        value = value + bias.value
        parents.append(bias)

    def backward_fn(g):
        gw = (cols.reshape(-1, k * c_in).T @ g.reshape(-1, c_out)).reshape(k, c_in, c_out) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = g @ w2.T
            if k == 1:
                gx = gcols
            else:
                gxp = np.zeros((n, length + 2 * pad, c_in), dtype=x.dtype)
                for j in range(k):
                    gxp[:, j * dilation : j * dilation + length, :] += gcols[:, :, j * c_in : (j + 1) * c_in]
                gx = gxp[:, pad : pad + length, :]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.reshape(-1, c_out).sum(axis=0) if bias.requires_grad else None)
        return grads

    return make_node(value, parents, backward_fn, "conv1d")


def max_pool_over_time(x, mask=None) -> Node:
    """Max over axis 1 of ``(N, L, C)``; ``mask`` (N, L) marks valid positions."""
    x = as_node(x)
    v = x.value
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=1).all():
            raise ValueError("max_pool_over_time: a row has no valid position")
        v = np.where(mask[:, :, None], v, -np.inf)
    arg = v.argmax(axis=1)  # (N, C)
    rows = np.arange(v.shape[0])[:, None]
    cols = np.arange(v.shape[2])[None, :]
    value = np.ascontiguousarray(x.value[rows, arg, cols])

    def backward_fn(g):
        out = np.zeros_like(x.value)
        out[rows, arg, cols] = g
        return (out,)

    return make_node(value, (x,), backward_fn, "max_pool_over_time")


def mean_over_set(table, sets: Sequence[Sequence[int]], empty_index: Optional[int] = None) -> Node:
    """Row ``i`` is the mean of ``table[sets[i]]``; empty sets use ``empty_index``."""
    table = as_node(table)
    weights = np.zeros((len(sets), table.shape[0]), dtype=table.dtype)
    for i, members in enumerate(sets):
        members = sorted(set(members))
        if not members:
            if empty_index is None:
                raise ValueError("mean_over_set: empty set without an empty_index")
            members = [empty_index]
        weights[i, members] = 1.0 / len(members)
    return matmul(weights, table)


# ---------------------------------------------------------------- recurrent


def lstm_gates(x_proj, h, recurrent) -> Node:
    """Pre-activations ``x_proj + h @ recurrent`` of shape (B, 4H)."""
    return add(x_proj, matmul(h, recurrent))


def lstm_state(z, c) -> Node:
    """New cell state from gate pre-activations ordered [input, forget, cell, output]."""
    z = as_node(z)
    c = as_node(c, dtype=z.dtype)
    hidden = c.shape[-1]
    zi, zf, zg = (z.value[:, k * hidden : (k + 1) * hidden] for k in range(3))
    i, f, gg = _sigmoid(zi), _sigmoid(zf), np.tanh(zg)
    value = f * c.value + i * gg

    def backward_fn(g):
        gz = np.zeros_like(z.value)
        gz[:, :hidden] = g * gg * i * (1.0 - i)
        gz[:, hidden : 2 * hidden] = g * c.value * f * (1.0 - f)
        gz[:, 2 * hidden : 3 * hidden] = g * i * (1.0 - gg * gg)
        return gz, g * f

    return make_node(value, (z, c), backward_fn, "lstm_state")


def lstm_output(z, c) -> Node:
    """Hidden state ``sigmoid(output gate) * tanh(c)``."""
    z = as_node(z)
    c = as_node(c, dtype=z.dtype)
    hidden = c.shape[-1]
    o = _sigmoid(z.value[:, 3 * hidden :])
    tc = np.tanh(c.value)

    def backward_fn(g):
        gz = np.zeros_like(z.value)
        gz[:, 3 * hidden :] = g * tc * o * (1.0 - o)
        return gz, g * o * (1.0 - tc * tc)

    return make_node(o * tc, (z, c), backward_fn, "lstm_output")


def lstm_cell(x_proj, h, c, recurrent):
    """One LSTM step; ``x_proj`` already holds ``x @ W + b``. Returns ``(h, c)``."""
    x_proj = as_node(x_proj)
    h = as_node(h, dtype=x_proj.dtype)
    hidden = h.shape[-1]
    if x_proj.shape[-1] != 4 * hidden or recurrent.shape != (hidden, 4 * hidden):
        raise ShapeError(
            f"lstm_cell: incompatible shapes x_proj={x_proj.shape}, h={h.shape}, recurrent={recurrent.shape}"
        )
    z = lstm_gates(x_proj, h, recurrent)
    c_new = lstm_state(z, c)
    h_new = lstm_output(z, c_new)
    return h_new, c_new


# ---------------------------------------------------------------- losses


def cross_entropy(logits, targets, weights=None) -> Node:
    """Weighted mean of ``-log softmax(logits)[target]`` over rows of a (N, C) input.

    Rows with zero weight are ignored; an all-zero weight vector gives 0.
    """
    logits = as_node(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.intp).reshape(-1)
    n, c = logits.shape
    if targets.shape[0] != n:
        raise ShapeError(f"cross_entropy: {n} rows but {targets.shape[0]} targets")
    w = np.ones(n, dtype=logits.dtype) if weights is None else np.asarray(weights, dtype=logits.dtype).reshape(-1)
    active = w != 0
    if np.any((targets[active] < 0) | (targets[active] >= c)):
        raise IndexError("cross_entropy: target outside the class range")
    safe_targets = np.where(active, targets, 0)
    total = w.sum()
    v = logits.value
    shifted = v - v.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    picked = logp[np.arange(n), safe_targets]
    if total == 0:
        value = np.asarray(0.0, dtype=logits.dtype)
    else:
        value = np.asarray(-(np.where(active, w * picked, 0.0)).sum() / total, dtype=logits.dtype)

    def backward_fn(g):
        if total == 0:
            return (np.zeros_like(v),)
        p = np.exp(logp)
        p[np.arange(n), safe_targets] -= 1.0
        return ((g * (w / total))[:, None] * p,)

    return make_node(value, (logits,), backward_fn, "cross_entropy")
