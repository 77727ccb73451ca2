"""UPOS / XPOS / UFeats classifiers over global vectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import nn
from .autodiff import Node, ops
from .vocab import Vocab


class TwoLayerClassifier(nn.Module):
    """FC (tanh) hidden layer followed by a linear output layer."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int, classes: int, dropout: float = 0.25):
        self.hidden_layer = nn.Dense(rng, in_dim, hidden, activation="tanh")
        self.output_layer = nn.Dense(rng, hidden, classes)
        self.dropout = dropout

    def __call__(self, x: Node, train: bool = False, rng: Optional[np.random.Generator] = None):
        """Returns ``(logits, hidden)``; ``hidden`` is taken before dropout."""
        hidden = self.hidden_layer(x)
        logits = self.output_layer(ops.dropout(hidden, self.dropout, train, rng))
        return logits, hidden


@dataclass
class TaggerOutput:
    logits: Dict[str, Node]
    feats_logits: Dict[str, Node]
    upos_hidden: Optional[Node] = None


class Tagger(nn.Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, num_upos: int = 0, num_xpos: int = 0,
                 feats: Optional[Dict[str, int]] = None, upos_hidden: int = 64, hidden: int = 128,
                 dropout: float = 0.25):
        self.upos = TwoLayerClassifier(rng, in_dim, upos_hidden, num_upos, dropout) if num_upos else None
        self.xpos = TwoLayerClassifier(rng, in_dim, hidden, num_xpos, dropout) if num_xpos else None
        self.feats = {c: TwoLayerClassifier(rng, in_dim, hidden, n, dropout) for c, n in sorted((feats or {}).items())}

    def __call__(self, flat: Node, train: bool = False, rng: Optional[np.random.Generator] = None) -> TaggerOutput:
        """``flat`` holds one global vector per token, shape (N, D)."""
        out = TaggerOutput({}, {})
        if self.upos is not None:
            out.logits["upos"], out.upos_hidden = self.upos(flat, train, rng)
        if self.xpos is not None:
            out.logits["xpos"], _ = self.xpos(flat, train, rng)
        for cat, clf in self.feats.items():
            out.feats_logits[cat], _ = clf(flat, train, rng)
        return out


def tagger_loss(out: TaggerOutput, gold: dict, weights: dict) -> Dict[str, Node]:
    """Per-target token-mean cross-entropies; ufeats sums its categories."""
    losses = {}
    for name in ("upos", "xpos"):
        if name in out.logits and name in gold:
            losses[name] = ops.cross_entropy(out.logits[name], gold[name], weights[name])
    if out.feats_logits and "ufeats" in gold:
        total = None
        for cat, logits in out.feats_logits.items():
            ce = ops.cross_entropy(logits, gold["ufeats"][cat], weights["ufeats"])
            total = ce if total is None else ops.add(total, ce)
        losses["ufeats"] = total
    return losses


def decode_feats(feats_probs: Dict[str, np.ndarray], vocabs: Dict[str, Vocab]) -> List[Dict[str, str]]:
    """Argmax per category; NA (and UNK) predictions are left out of the map."""
    if not feats_probs:
        return []
    n = len(next(iter(feats_probs.values())))
    out: List[Dict[str, str]] = [{} for _ in range(n)]
    for cat, probs in feats_probs.items():
        vocab = vocabs[cat]
        for k, i in enumerate(np.asarray(probs).argmax(axis=1)):
            symbol = vocab.symbol(int(i))
            if symbol not in vocab.specials:
                out[k][cat] = symbol
    return out


def decode_labels(probs: np.ndarray, vocab: Vocab) -> List[str]:
    return [vocab.symbol(int(i)) for i in np.asarray(probs).argmax(axis=1)]

