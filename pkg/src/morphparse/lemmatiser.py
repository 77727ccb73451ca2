"""Position-wise character lemmatiser conditioned on the token's global vector.

The input grid is ``<w> chars </w>`` plus a fixed number of pad slots so a
lemma may be a few characters longer than its form. Each position predicts
one lemma character; the first END or PAD prediction ends the lemma.
"""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from . import nn
from .autodiff import Node, ops
from .vocab import END, PAD, Vocab


class Lemmatiser(nn.Module):
    def __init__(self, rng: np.random.Generator, num_input_chars: int, num_lemma_chars: int, global_dim: int,
                 char_dim: int = 256, context_dim: int = 32, filters: int = 256,
                 dilations: Sequence[int] = (1, 2, 4), dropout: float = 0.25):
        self.char_embedding = nn.Embedding(rng, num_input_chars, char_dim)
        self.context = nn.Dense(rng, global_dim, context_dim, activation="tanh")
        self.convs = []
        in_dim = char_dim + context_dim
        for d in dilations:
            self.convs.append(nn.Conv1d(rng, in_dim, filters, kernel_size=3, dilation=d))
            in_dim = filters
        self.output = nn.Conv1d(rng, in_dim, num_lemma_chars, kernel_size=1)
        self.dropout = dropout

    def __call__(self, grid_chars: np.ndarray, grid_mask: np.ndarray, flat_globals: Node, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Node:
        """Logits of shape (N, G, |lemma chars|) for N tokens with grids of width G."""
        n, width = grid_chars.shape
        chars = self.char_embedding(grid_chars)
        ctx = ops.dropout(self.context(flat_globals), self.dropout, train, rng)
        ctx = ops.broadcast_to(ops.reshape(ctx, (n, 1, ctx.shape[-1])), (n, width, ctx.shape[-1]))
        keep = grid_mask[:, :, None].astype(chars.dtype)
        x = ops.mul(ops.concat([chars, ctx], axis=-1), keep)
        for conv in self.convs:
            x = ops.mul(ops.relu(conv(x)), keep)
        return self.output(x)


def lemma_loss(logits: Node, targets: np.ndarray, weights: np.ndarray) -> Node:
    """Mean cross-entropy over all supervised grid positions."""
    classes = logits.shape[-1]
    flat = ops.reshape(logits, (logits.shape[0] * logits.shape[1], classes))
    return ops.cross_entropy(flat, targets.reshape(-1), weights.reshape(-1))


def decode_lemma(position_ids: Sequence[int], vocab: Vocab) -> str:
    """Characters up to the first END/PAD; other specials are dropped."""
    out = []
    stop = {vocab.index(END), vocab.index(PAD)}
    skip = {vocab.stoi[s] for s in vocab.specials if s not in (END, PAD)}
    for i in position_ids:
        i = int(i)
        if i in stop:
            break
        if i in skip:
            continue
        out.append(vocab.symbol(i))
    return "".join(out)


def decode_lemmas(logits: np.ndarray, grid_lengths: np.ndarray, vocab: Vocab) -> List[str]:
    best = np.asarray(logits).argmax(axis=-1)
    return [decode_lemma(best[k, : int(grid_lengths[k])], vocab) for k in range(best.shape[0])]

