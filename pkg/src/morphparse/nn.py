"""Layers built on the autodiff primitives.

Weights use Xavier-uniform initialisation and biases start at zero. Each layer
declares the L2 rate of its parameters: 1e-6 for recurrent and convolutional
layers, 1e-5 for trainable embedding tables, 0 for fully connected layers.
"""

from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .autodiff import Node, Parameter, get_default_dtype, ops

L2_RECURRENT_CONV = 1e-6
L2_EMBEDDING = 1e-5


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(get_default_dtype())


class Module:
    """Container whose parameters are discovered by walking its attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key in sorted(vars(self)):
            value = vars(self)[key]
            yield from _named(value, f"{prefix}{key}")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name


def _named(value, name: str):
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _named(item, f"{name}.{i}")
    elif isinstance(value, dict):
        for k in sorted(value):
            yield from _named(value[k], f"{name}.{k}")


class Dense(Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int, activation: Optional[str] = None):
        self.weight = Parameter(xavier_uniform(rng, (in_dim, out_dim), in_dim, out_dim))
        self.bias = Parameter(np.zeros(out_dim, dtype=get_default_dtype()))
        self.activation = activation
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, x) -> Node:
        y = ops.add(ops.matmul(x, self.weight), self.bias)
        if self.activation == "tanh":
            return ops.tanh(y)
        if self.activation == "relu":
            return ops.relu(y)
        return y


class Conv1d(Module):
    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, kernel_size: int = 3,
                 dilation: int = 1):
        if dilation not in (1, 2, 4):
            raise ValueError(f"dilation must be 1, 2 or 4, got {dilation}")
        self.weight = Parameter(
            xavier_uniform(rng, (kernel_size, in_channels, out_channels), kernel_size * in_channels,
                           kernel_size * out_channels),
            l2_rate=L2_RECURRENT_CONV,
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype()), l2_rate=L2_RECURRENT_CONV)
        self.dilation = dilation
        self.out_channels = out_channels

    def __call__(self, x) -> Node:
        return ops.conv1d(x, self.weight, self.bias, dilation=self.dilation)


class Embedding(Module):
    def __init__(self, rng: np.random.Generator, num: int, dim: int):
        scale = 1.0 / np.sqrt(dim)
        self.table = Parameter(rng.normal(0.0, scale, size=(num, dim)).astype(get_default_dtype()),
                               l2_rate=L2_EMBEDDING)
        self.dim = dim

    def __call__(self, ids) -> Node:
        return ops.embedding_lookup(self.table, ids)


class LSTM(Module):
    """Unidirectional LSTM over a left-aligned, padded ``(B, T, D)`` batch."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int):
        dtype = get_default_dtype()
        self.input_weight = Parameter(xavier_uniform(rng, (in_dim, 4 * hidden), in_dim, 4 * hidden),
                                      l2_rate=L2_RECURRENT_CONV)
        self.recurrent_weight = Parameter(xavier_uniform(rng, (hidden, 4 * hidden), hidden, 4 * hidden),
                                          l2_rate=L2_RECURRENT_CONV)
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden : 2 * hidden] = 1.0
        self.bias = Parameter(bias, l2_rate=L2_RECURRENT_CONV)
        self.hidden = hidden

    def __call__(self, x: Node, mask: np.ndarray, recurrent_mask: Optional[np.ndarray] = None) -> Node:
        """Run the recurrence; ``mask`` (B, T) marks real tokens.

        ``recurrent_mask`` (B, H) is a fixed dropout mask multiplied into the
        state fed back at every step.
        """
        batch, steps, _ = x.shape
        projected = ops.add(ops.matmul(x, self.input_weight), self.bias)
        h = Node(np.zeros((batch, self.hidden), dtype=x.dtype))
        c = Node(np.zeros((batch, self.hidden), dtype=x.dtype))
        outputs = []
        for t in range(steps):
            fed = ops.mul(h, recurrent_mask) if recurrent_mask is not None else h
            h_new, c_new = ops.lstm_cell(ops.index(projected, (slice(None), t)), fed, c, self.recurrent_weight)
            step_mask = mask[:, t : t + 1]
            if step_mask.all():
                h, c = h_new, c_new
            else:
                h = ops.blend(h_new, h, step_mask)
                c = ops.blend(c_new, c, step_mask)
            outputs.append(h)
        return ops.stack(outputs, axis=1)


def parameter_dims(module: Module) -> Dict[str, tuple]:
    return {name: p.shape for name, p in module.named_parameters()}
