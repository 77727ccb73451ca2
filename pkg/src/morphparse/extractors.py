"""Local feature extractors: character CNN, frozen external vectors, tag/feat embeddings."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import nn
from .autodiff import Node, get_default_dtype, ops
from .vocab import Vocab, char_ids

logger = logging.getLogger(__name__)

FEATURE_ORDER = ("char", "word", "lemma", "upos", "xpos", "ufeats")
TARGETS = ("upos", "xpos", "ufeats", "lemma", "head", "deprel")


class FeatureConfigError(ValueError):
    pass


def check_features(features: Sequence[str], targets: Sequence[str]) -> List[str]:
    """Validate a feature list against the targets; returns it in canonical order."""
    unknown = set(features) - set(FEATURE_ORDER)
    if unknown:
        raise FeatureConfigError(f"unknown features: {sorted(unknown)}")
    bad_targets = set(targets) - set(TARGETS)
    if bad_targets:
        raise FeatureConfigError(f"unknown targets: {sorted(bad_targets)}")
    overlap = set(features) & set(targets)
    if overlap:
        raise FeatureConfigError(f"features cannot also be prediction targets: {sorted(overlap)}")
    if "deprel" in targets and "head" not in targets:
        raise FeatureConfigError("the deprel target requires the head target")
    if not features:
        raise FeatureConfigError("at least one input feature is required")
    return [f for f in FEATURE_ORDER if f in features]


# ---------------------------------------------------------------- char CNN


def pad_ids(seqs: Sequence[Sequence[int]], pad: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), pad, dtype=np.intp)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


class CharCNN(nn.Module):
    """Dilated CNN over ``<w> chars </w>`` with max pooling to one vector per word."""

    def __init__(self, rng: np.random.Generator, num_chars: int, char_dim: int = 64,
                 filters: Sequence[int] = (512, 256, 64), dilations: Sequence[int] = (1, 2, 4), kernel_size: int = 3):
        if len(filters) != len(dilations):
            raise ValueError("filters and dilations must have the same length")
        self.embedding = nn.Embedding(rng, num_chars, char_dim)
        self.convs = []
        in_dim = char_dim
        for f, d in zip(filters, dilations):
            self.convs.append(nn.Conv1d(rng, in_dim, f, kernel_size=kernel_size, dilation=d))
            in_dim = f
        self.output_dim = in_dim

    def __call__(self, ids: np.ndarray, mask: np.ndarray) -> Node:
        x = self.embedding(ids)
        keep = mask[:, :, None].astype(x.dtype)
        x = ops.mul(x, keep)
        for conv in self.convs:
            # zero the padding so every word sees the same input regardless of batch width
            x = ops.mul(ops.relu(conv(x)), keep)
        return ops.max_pool_over_time(x, mask)

    def embed_words(self, vocab: Vocab, words: Sequence[str]) -> Node:
        ids, mask = pad_ids([char_ids(vocab, w) for w in words])
        return self(ids, mask)


# ---------------------------------------------------------------- external vectors


class WordVectors:
    """Frozen word vectors keyed by form, lowercase fallback, zero vector for OOV."""

    def __init__(self, words: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(words):
            raise ValueError(f"vector table shape {matrix.shape} does not match {len(words)} words")
        self.words = list(words)
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self.index = {}
        for i, w in enumerate(self.words):
            self.index.setdefault(w, i)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def lookup(self, word: str) -> int:
        i = self.index.get(word)
        if i is None:
            i = self.index.get(word.lower(), -1)
        return i

    def vectors(self, forms: Sequence[str], dtype=None) -> np.ndarray:
        out = np.zeros((len(forms), self.dim), dtype=dtype or get_default_dtype())
        for k, f in enumerate(forms):
            i = self.lookup(f)
            if i >= 0:
                out[k] = self.matrix[i]
        return out

    def for_sentences(self, sentences, start_index: int = 0) -> List[np.ndarray]:
        return [self.vectors(s.forms) for s in sentences]

    @classmethod
    def load(cls, path: Union[str, Path]) -> "WordVectors":
        """Read whitespace-separated text vectors, with an optional ``count dim`` header."""
        words, rows = [], []
        dim = None
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.rstrip("\n").split(" ") if "\t" not in line else line.rstrip("\n").split("\t")
                parts = [p for p in parts if p != ""]
                if not parts:
                    continue
                if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    dim = int(parts[1])
                    continue
                if dim is None:
                    dim = len(parts) - 1
                if len(parts) != dim + 1:
                    raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
                words.append(parts[0])
                rows.append([float(v) for v in parts[1:]])
        if dim is None:
            raise ValueError(f"{path}: no vectors found")
        matrix = np.array(rows, dtype=np.float32).reshape(len(rows), dim)
        logger.info("loaded %d vectors of dimension %d from %s", len(words), dim, path)
        return cls(words, matrix)


class TokenVectors:
    """Pre-computed per-token vectors keyed by (sentence index, token id).

    File format: one line per token, ``sentence_index token_id v1 ... vd``
    (0-based sentence index, 1-based token id). Subword pooling, if any, is the
    producer's job.
    """

    def __init__(self, table: Dict[Tuple[int, int], np.ndarray], dim: int):
        self.table = table
        self.dim = dim

    def for_sentences(self, sentences, start_index: int = 0) -> List[np.ndarray]:
        out = []
        for k, s in enumerate(sentences):
            rows = np.zeros((len(s), self.dim), dtype=get_default_dtype())
            for t in range(len(s)):
                v = self.table.get((start_index + k, t + 1))
                if v is not None:
                    rows[t] = v
            out.append(rows)
        return out

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TokenVectors":
        table = {}
        dim = None
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.split()
                if not parts:
                    continue
                if dim is None:
                    dim = len(parts) - 2
                if len(parts) != dim + 2:
                    raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 2}")
                table[(int(parts[0]), int(parts[1]))] = np.array(parts[2:], dtype=np.float32)
        if dim is None:
            raise ValueError(f"{path}: no vectors found")
        return cls(table, dim)


# ---------------------------------------------------------------- feature bundle


class LocalFeatures(nn.Module):
    """Concatenate the enabled local features in the order of ``FEATURE_ORDER``."""

    def __init__(self, rng: np.random.Generator, features: Sequence[str], num_chars: int, num_upos: int = 0,
                 num_xpos: int = 0, num_feat_symbols: int = 0, external_dim: int = 0, char_dim: int = 64,
                 char_filters: Sequence[int] = (512, 256, 64), char_dilations: Sequence[int] = (1, 2, 4),
                 projection_dim: int = 100, tag_dim: int = 32, fc_dropout: float = 0.25):
        self.features = list(features)
        self.fc_dropout = fc_dropout
        dims = {}
        if "char" in features:
            self.char_cnn = CharCNN(rng, num_chars, char_dim, char_filters, char_dilations)
            dims["char"] = self.char_cnn.output_dim
        if "word" in features:
            if external_dim <= 0:
                raise FeatureConfigError("the word feature needs external vectors")
            self.word_projection = nn.Dense(rng, external_dim, projection_dim, activation="tanh")
            dims["word"] = projection_dim
        if "lemma" in features:
            self.lemma_cnn = CharCNN(rng, num_chars, char_dim, char_filters, char_dilations)
            dims["lemma"] = self.lemma_cnn.output_dim
        if "upos" in features:
            self.upos_embedding = nn.Embedding(rng, num_upos, tag_dim)
            dims["upos"] = tag_dim
        if "xpos" in features:
            self.xpos_embedding = nn.Embedding(rng, num_xpos, tag_dim)
            dims["xpos"] = tag_dim
        if "ufeats" in features:
            self.feats_embedding = nn.Embedding(rng, num_feat_symbols, tag_dim)
            dims["ufeats"] = tag_dim
        self.dims = dims
        self.output_dim = sum(dims.values())

    def embed_feats(self, feat_id_sets: Sequence[Sequence[int]], empty_index: int = 0) -> Node:
        """Mean of the feature-value embeddings of each token; the EMPTY row for none."""
        return ops.mean_over_set(self.feats_embedding.table, feat_id_sets, empty_index=empty_index)

    def __call__(self, batch, train: bool = False, rng: Optional[np.random.Generator] = None) -> Node:
        """Per-token local vectors of shape (B, T, output_dim)."""
        parts = []
        for name in self.features:
            if name == "char":
                flat = self.char_cnn(batch.word_chars, batch.word_char_mask)
            elif name == "word":
                flat = self.word_projection(batch.external)
                flat = ops.dropout(flat, self.fc_dropout, train, rng)
            elif name == "lemma":
                flat = self.lemma_cnn(batch.lemma_chars, batch.lemma_char_mask)
            elif name == "upos":
                flat = self.upos_embedding(batch.upos_in)
            elif name == "xpos":
                flat = self.xpos_embedding(batch.xpos_in)
            else:
                flat = self.embed_feats(batch.feats_in)
            parts.append(flat)
        flat = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-1)
        return batch.unflatten(flat)
