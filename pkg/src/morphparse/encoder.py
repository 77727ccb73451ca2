"""Stacked bidirectional LSTM producing global (contextual) token vectors."""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from . import nn
from .autodiff import Node, ops


def reverse_index(lengths: np.ndarray, steps: int) -> np.ndarray:
    """Per-row index that reverses the first ``lengths[b]`` steps and keeps padding in place."""
    t = np.arange(steps)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(t < lengths, lengths - 1 - t, t)


def _variational_mask(rng: np.random.Generator, shape, rate: float, dtype) -> np.ndarray:
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(dtype) / dtype.type(keep)


class BiLSTMEncoder(nn.Module):
    def __init__(self, rng: np.random.Generator, input_dim: int, hidden: int = 512, layers: int = 2,
                 dropout: float = 0.33):
        self.forward_layers: List[nn.LSTM] = []
        self.backward_layers: List[nn.LSTM] = []
        dim = input_dim
        for _ in range(layers):
            self.forward_layers.append(nn.LSTM(rng, dim, hidden))
            self.backward_layers.append(nn.LSTM(rng, dim, hidden))
            dim = 2 * hidden
        self.hidden = hidden
        self.dropout = dropout
        self.output_dim = 2 * hidden

    def __call__(self, x: Node, mask: np.ndarray, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Node:
        """``x`` is (B, T, D) with ``mask`` (B, T); returns (B, T, 2 * hidden).

        Dropout masks are shared over time: one on the input features, one on
        the recurrent state of each direction of each layer, one on each layer
        output (the last of which is the dropout on top of the stack).
        """
        batch, steps, _ = x.shape
        lengths = mask.sum(axis=1)
        rev = reverse_index(lengths, steps)
        x = ops.dropout(x, self.dropout, train, rng, shared_axes=(1,))
        for fwd, bwd in zip(self.forward_layers, self.backward_layers):
            rec_f = rec_b = None
            if train and self.dropout > 0:
                rec_f = _variational_mask(rng, (batch, self.hidden), self.dropout, x.dtype)
                rec_b = _variational_mask(rng, (batch, self.hidden), self.dropout, x.dtype)
            out_f = fwd(x, mask, rec_f)
            out_b = ops.take_along_time(bwd(ops.take_along_time(x, rev), mask, rec_b), rev)
            x = ops.concat([out_f, out_b], axis=-1)
            x = ops.dropout(x, self.dropout, train, rng, shared_axes=(1,))
        # padded steps carry the last real state; zero them for the heads
        return ops.mul(x, mask[:, :, None].astype(x.dtype))
