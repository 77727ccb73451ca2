"""Turn sentences into padded index arrays for one forward pass."""

from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from .autodiff import Node, get_default_dtype, ops
from .conllu import Sentence
from .extractors import pad_ids
from .vocab import BOW, END, EOW, NA, PAD, Vocabularies, char_ids, feature_ids

LEMMA_SLACK = 8


def lemma_grid(vocab_chars, word: str, slack: int = LEMMA_SLACK) -> List[int]:
    """``<w> chars </w>`` followed by ``slack`` pad slots."""
    return char_ids(vocab_chars, word) + [vocab_chars.index(PAD)] * slack


def lemma_targets(vocab_lemma, lemma: str, grid_len: int) -> List[int]:
    """Lemma chars, then END, then PAD up to the grid length (truncated if longer)."""
    ids = [vocab_lemma.index(ch) for ch in lemma] + [vocab_lemma.index(END)]
    ids += [vocab_lemma.index(PAD)] * (grid_len - len(ids))
    return ids[:grid_len]


class Batch:
    def __init__(self, sentences: Sequence[Sentence], vocabs: Vocabularies, features: Sequence[str] = ("char",),
                 targets: Sequence[str] = (), external: Optional[Sequence[np.ndarray]] = None):
        self.sentences = list(sentences)
        if not self.sentences or any(len(s) == 0 for s in self.sentences):
            raise ValueError("a batch needs non-empty sentences")
        dtype = get_default_dtype()
        self.lengths = np.array([len(s) for s in self.sentences])
        self.size = len(self.sentences)
        self.steps = int(self.lengths.max())
        self.mask = np.arange(self.steps)[None, :] < self.lengths[:, None]
        tokens = [t for s in self.sentences for t in s]
        self.num_tokens = len(tokens)
        # flat position of (b, t); padding points at an extra zero row
        self.token_index = np.full((self.size, self.steps), self.num_tokens, dtype=np.intp)
        self.flat_rows = np.zeros(self.num_tokens, dtype=np.intp)
        k = 0
        for b, s in enumerate(self.sentences):
            for t in range(len(s)):
                self.token_index[b, t] = k
                self.flat_rows[k] = b * self.steps + t
                k += 1

        if "char" in features:
            self.word_chars, self.word_char_mask = pad_ids([char_ids(vocabs.chars, t.form) for t in tokens])
        if "lemma" in features:
            self.lemma_chars, self.lemma_char_mask = pad_ids([char_ids(vocabs.chars, t.lemma) for t in tokens])
        if "upos" in features:
            self.upos_in = np.array([vocabs.upos.index(t.upos) for t in tokens], dtype=np.intp)
        if "xpos" in features:
            self.xpos_in = np.array([vocabs.xpos.index(t.xpos) for t in tokens], dtype=np.intp)
        if "ufeats" in features:
            self.feats_in = [feature_ids(vocabs.feat_symbols, t.feats) for t in tokens]
        if "word" in features:
            if external is None:
                raise ValueError("the word feature needs external vectors for every sentence")
            self.external = np.concatenate([np.asarray(e, dtype=dtype) for e in external], axis=0)
            if self.external.shape[0] != self.num_tokens:
                raise ValueError("external vectors do not match the token count")

        # lemmatiser grid is needed at inference too
        if "lemma" in targets:
            grids = [lemma_grid(vocabs.chars, t.form) for t in tokens]
            self.grid_chars, self.grid_mask = pad_ids(grids, pad=vocabs.chars.index(PAD))
            self.grid_lengths = np.array([len(g) for g in grids])
        self._gold(tokens, vocabs, targets)

    def _gold(self, tokens, vocabs: Vocabularies, targets: Sequence[str]) -> None:
        dtype = get_default_dtype()
        self.gold = {}
        self.gold_weight = {}
        if "upos" in targets:
            self.gold["upos"] = np.array([vocabs.upos.index(t.upos) if t.upos != "_" else 0 for t in tokens])
            self.gold_weight["upos"] = np.array([t.upos != "_" for t in tokens], dtype=dtype)
        if "xpos" in targets:
            self.gold["xpos"] = np.array([vocabs.xpos.index(t.xpos) if t.xpos != "_" else 0 for t in tokens])
            self.gold_weight["xpos"] = np.array([t.xpos != "_" for t in tokens], dtype=dtype)
        if "ufeats" in targets:
            self.gold["ufeats"] = {
                cat: np.array([v.index(t.feats[cat]) if cat in t.feats else v.index(NA) for t in tokens])
                for cat, v in vocabs.feats.items()
            }
            # "_" is a legitimate gold value here: every category is NA
            self.gold_weight["ufeats"] = np.ones(len(tokens), dtype=dtype)
        if "lemma" in targets:
            width = self.grid_chars.shape[1]
            rows = np.full((len(tokens), width), vocabs.lemma_chars.index(PAD), dtype=np.intp)
            weight = np.zeros((len(tokens), width), dtype=dtype)
            for k, t in enumerate(tokens):
                n = int(self.grid_lengths[k])
                if t.lemma != "_":
                    rows[k, :n] = lemma_targets(vocabs.lemma_chars, t.lemma, n)
                    weight[k, :n] = 1.0
            self.gold["lemma"] = rows
            self.gold_weight["lemma"] = weight
        if "head" in targets:
            self.gold["head"] = np.array([t.head if t.head is not None else 0 for t in tokens])
            self.gold_weight["head"] = np.array([t.head is not None for t in tokens], dtype=dtype)
        if "deprel" in targets:
            self.gold["deprel"] = np.array([vocabs.deprel.index(t.deprel) if t.deprel != "_" else 0 for t in tokens])
            self.gold_weight["deprel"] = np.array(
                [t.deprel != "_" and t.head is not None for t in tokens], dtype=dtype)

    # ------------------------------------------------------------ layout helpers

    def unflatten(self, flat: Node) -> Node:
        """(N, D) token rows to a zero-padded (B, T, D) tensor."""
        zero = Node(np.zeros((1,) + flat.shape[1:], dtype=flat.dtype))
        return ops.take(ops.concat([flat, zero], axis=0), self.token_index, axis=0)

    def flatten(self, padded: Node) -> Node:
        """(B, T, ...) to (N, ...) keeping only real tokens."""
        merged = ops.reshape(padded, (self.size * self.steps,) + padded.shape[2:])
        return ops.take(merged, self.flat_rows, axis=0)

    def sentence_slices(self):
        start = 0
        for n in self.lengths:
            yield slice(start, start + int(n))
            start += int(n)


def batches(sentences: Sequence[Sentence], batch_size: int, rng: Optional[np.random.Generator] = None,
            bucket: bool = True) -> List[List[int]]:
    """Index groups of at most ``batch_size`` sentences.

    With bucketing, sentences are sorted by length (ties broken by a random
    permutation when ``rng`` is given) and the batch order is shuffled.
    """
    n = len(sentences)
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    if bucket:
        lengths = np.array([len(sentences[i]) for i in order])
        order = order[np.argsort(lengths, kind="stable")]
    groups = [order[i : i + batch_size].tolist() for i in range(0, n, batch_size)]
    if rng is not None:
        groups = [groups[i] for i in rng.permutation(len(groups))]
    return groups
