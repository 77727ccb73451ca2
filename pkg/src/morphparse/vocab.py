"""Symbol/index maps built from a training treebank."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

from .conllu import Treebank

PAD = "<pad>"
UNK = "<unk>"
BOW = "<w>"
EOW = "</w>"
END = "<end>"
EMPTY = "<empty>"
NA = "<na>"


class Vocab:
    def __init__(self, symbols: Iterable[str], specials: Sequence[str] = (UNK,)):
        self.itos: List[str] = list(specials)
        for s in symbols:
            if s not in self.itos:
                self.itos.append(s)
        self.stoi: Dict[str, int] = {s: i for i, s in enumerate(self.itos)}
        self.specials = tuple(specials)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.stoi

    def index(self, symbol: str) -> int:
        i = self.stoi.get(symbol)
        if i is None:
            if UNK not in self.stoi:
                raise KeyError(symbol)
            return self.stoi[UNK]
        return i

    def symbol(self, i: int) -> str:
        return self.itos[i]

    def to_dict(self) -> dict:
        return {"specials": list(self.specials), "symbols": self.itos[len(self.specials):]}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(d["symbols"], specials=d["specials"])

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos and self.specials == other.specials

    def __repr__(self) -> str:
        return f"Vocab({len(self)} symbols)"


def _column_empty(values: Iterable[str]) -> bool:
    return all(v == "_" for v in values)


@dataclass
class Vocabularies:
    chars: Vocab
    lemma_chars: Vocab
    upos: Vocab
    xpos: Vocab
    deprel: Vocab
    feats: Dict[str, Vocab] = field(default_factory=dict)
    feat_symbols: Vocab = field(default_factory=lambda: Vocab([], specials=(EMPTY, UNK)))

    @classmethod
    def build(cls, treebank: Treebank, min_char_freq: int = 2) -> "Vocabularies":
        tokens = [t for s in treebank for t in s]
        char_counts = Counter(ch for t in tokens for ch in t.form)
        # lemma chars also appear in forms fed to the lemma-feature CNN
        char_counts.update(ch for t in tokens if t.lemma != "_" for ch in t.lemma)
        chars = Vocab(sorted(c for c, k in char_counts.items() if k >= min_char_freq), specials=(PAD, UNK, BOW, EOW))
        lemma_chars = Vocab(sorted({ch for t in tokens if t.lemma != "_" for ch in t.lemma}), specials=(PAD, UNK, END))
        upos = Vocab(sorted({t.upos for t in tokens if t.upos != "_"}))
        xpos = Vocab(sorted({t.xpos for t in tokens if t.xpos != "_"}))
        deprel = Vocab(sorted({t.deprel for t in tokens if t.deprel != "_"}))
        values: Dict[str, set] = {}
        for t in tokens:
            for k, v in t.feats.items():
                values.setdefault(k, set()).add(v)
        feats = {k: Vocab(sorted(v), specials=(NA, UNK)) for k, v in sorted(values.items())}
        feat_symbols = Vocab(sorted(f"{k}={v}" for k, vs in values.items() for v in vs), specials=(EMPTY, UNK))
        return cls(chars, lemma_chars, upos, xpos, deprel, feats, feat_symbols)

    def to_dict(self) -> dict:
        return {
            "chars": self.chars.to_dict(),
            "lemma_chars": self.lemma_chars.to_dict(),
            "upos": self.upos.to_dict(),
            "xpos": self.xpos.to_dict(),
            "deprel": self.deprel.to_dict(),
            "feats": {k: v.to_dict() for k, v in sorted(self.feats.items())},
            "feat_symbols": self.feat_symbols.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabularies":
        return cls(
            chars=Vocab.from_dict(d["chars"]),
            lemma_chars=Vocab.from_dict(d["lemma_chars"]),
            upos=Vocab.from_dict(d["upos"]),
            xpos=Vocab.from_dict(d["xpos"]),
            deprel=Vocab.from_dict(d["deprel"]),
            feats={k: Vocab.from_dict(v) for k, v in d["feats"].items()},
            feat_symbols=Vocab.from_dict(d["feat_symbols"]),
        )


def available_targets(treebank: Treebank) -> List[str]:
    """Targets whose gold column is not entirely empty."""
    tokens = [t for s in treebank for t in s]
    out = []
    if not _column_empty(t.upos for t in tokens):
        out.append("upos")
    if not _column_empty(t.xpos for t in tokens):
        out.append("xpos")
    if any(t.feats for t in tokens):
        out.append("ufeats")
    if not _column_empty(t.lemma for t in tokens):
        out.append("lemma")
    if all(t.head is not None for t in tokens):
        out.append("head")
        if not _column_empty(t.deprel for t in tokens):
            out.append("deprel")
    return out


def feature_symbols(feats: Dict[str, str]) -> List[str]:
    return [f"{k}={v}" for k, v in sorted(feats.items())]


def feature_ids(vocab: Vocab, feats: Dict[str, str]) -> List[int]:
    return [vocab.index(s) for s in feature_symbols(feats)]


def char_ids(vocab: Vocab, word: str, markers: bool = True) -> List[int]:
    ids = [vocab.index(ch) for ch in word]
    if markers:
        ids = [vocab.index(BOW)] + ids + [vocab.index(EOW)]
    return ids


def first_non_special(vocab: Vocab) -> Optional[int]:
    return len(vocab.specials) if len(vocab) > len(vocab.specials) else None
