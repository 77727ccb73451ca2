"""Arc scoring, arc labelling and tree decoding.

A trainable root vector is prepended to the global sequence, so head index 0
is the root and heads ``1..n`` are the tokens. Row ``i`` of the adjacency
matrix is dependent ``i + 1``'s softmax distribution over heads ``0..n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import nn
from .autodiff import Node, Parameter, get_default_dtype, ops
from .mst import decode_tree


def arc_mask(lengths: np.ndarray, steps: int) -> np.ndarray:
    """True where arc (dependent t, head j) is forbidden: self arcs and padded heads."""
    dep = np.arange(steps)[None, :, None]
    head = np.arange(steps + 1)[None, None, :]
    lengths = np.asarray(lengths)[:, None, None]
    return (head == dep + 1) | (head > lengths)


@dataclass
class ParserOutput:
    arc_logits: Node  # (B, T, T+1) masked dot-product scores
    adjacency: Node  # (B, T, T+1) row-softmaxed
    label_logits: Node  # (B, T, |deprel|)
    deprel_hidden: Node  # (B, T, label_dim), the dependent projection


class ArcScorer(nn.Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, dim: int = 512):
        self.head = nn.Dense(rng, in_dim, dim, activation="tanh")
        self.dependent = nn.Dense(rng, in_dim, dim, activation="tanh")

    def scores(self, with_root: Node, train: bool = False, rng=None, dropout: float = 0.0) -> Node:
        """Raw dot-product scores (B, T, T+1) from the root-prefixed globals."""
        heads = ops.dropout(self.head(with_root), dropout, train, rng)
        deps = ops.dropout(self.dependent(ops.index(with_root, (slice(None), slice(1, None)))), dropout, train, rng)
        return ops.matmul(deps, ops.transpose(heads, (0, 2, 1)))


class LabelScorer(nn.Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, num_labels: int, dim: int = 128):
        self.head = nn.Dense(rng, in_dim, dim, activation="tanh")
        self.dependent = nn.Dense(rng, in_dim, dim, activation="tanh")
        self.classifier = nn.Dense(rng, 2 * dim, num_labels)

    def __call__(self, with_root: Node, adjacency: Node, train: bool = False, rng=None, dropout: float = 0.0):
        """Returns ``(logits, dependent projection)``."""
        heads = self.head(with_root)
        deps = self.dependent(ops.index(with_root, (slice(None), slice(1, None))))
        weighted = ops.matmul(adjacency, heads)
        z = ops.concat([deps, weighted], axis=-1)
        return self.classifier(ops.dropout(z, dropout, train, rng)), deps


class Parser(nn.Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, num_labels: int = 0, arc_dim: int = 512,
                 label_dim: int = 128, dropout: float = 0.25):
        self.root = Parameter(rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=in_dim).astype(get_default_dtype()))
        self.arcs = ArcScorer(rng, in_dim, arc_dim)
        self.labels = LabelScorer(rng, in_dim, num_labels, label_dim) if num_labels else None
        self.dropout = dropout

    def with_root(self, globals_: Node) -> Node:
        batch, _, dim = globals_.shape
        root = ops.broadcast_to(ops.reshape(self.root, (1, 1, dim)), (batch, 1, dim))
        return ops.concat([root, globals_], axis=1)

    def __call__(self, globals_: Node, lengths: np.ndarray, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> ParserOutput:
        steps = globals_.shape[1]
        g = self.with_root(globals_)
        scores = self.arcs.scores(g, train, rng, self.dropout)
        arc_logits = ops.masked_fill(scores, arc_mask(lengths, steps), -np.inf)
        adjacency = ops.softmax(arc_logits, axis=-1)
        logits = hidden = None
        if self.labels is not None:
            logits, hidden = self.labels(g, adjacency, train, rng, self.dropout)
        return ParserOutput(arc_logits, adjacency, logits, hidden)


def head_loss(arc_logits: Node, gold_heads: np.ndarray, weights: np.ndarray) -> Node:
    """Mean cross-entropy of each dependent's masked arc scores against its gold head.

    ``arc_logits`` is (N, T+1); forbidden arcs hold ``-inf`` so the implied
    distribution is exactly the adjacency row.
    """
    return ops.cross_entropy(arc_logits, gold_heads, weights)


def label_loss(label_logits: Node, gold: np.ndarray, weights: np.ndarray) -> Node:
    return ops.cross_entropy(label_logits, gold, weights)


def decode_heads(adjacency: np.ndarray, single_root: bool = True) -> List[int]:
    """Chu-Liu-Edmonds over one sentence's ``(n, n+1)`` probability matrix."""
    return decode_tree(adjacency, single_root=single_root)
