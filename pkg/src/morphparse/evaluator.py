"""CoNLL 2018 shared-task scoring under gold tokenisation.

Relations are compared on their universal part (before ``:``). CLAS, MLAS and
BLEX only count words whose relation is a content relation; MLAS additionally
compares UPOS, the universal feature subset and the function-word children of
each word, BLEX the lemma. A gold lemma of ``_`` matches anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .conllu import Sentence, Token, Treebank

METRICS = ("UPOS", "XPOS", "UFeats", "Lemma", "UAS", "LAS", "CLAS", "MLAS", "BLEX")

CONTENT_DEPRELS = frozenset({
    "nsubj", "obj", "iobj", "csubj", "ccomp", "xcomp", "obl", "vocative", "expl", "dislocated", "advcl",
    "advmod", "discourse", "nmod", "appos", "nummod", "acl", "amod", "conj", "fixed", "flat", "compound",
    "list", "parataxis", "orphan", "goeswith", "reparandum", "root", "dep",
})
FUNCTIONAL_DEPRELS = frozenset({"aux", "cop", "mark", "det", "clf", "case", "cc"})
UNIVERSAL_FEATURES = frozenset({
    "PronType", "NumType", "Poss", "Reflex", "Foreign", "Abbr", "Gender", "Animacy", "Number", "Case",
    "Definite", "Degree", "VerbForm", "Mood", "Tense", "Aspect", "Voice", "Evident", "Polarity", "Person",
    "Polite",
})


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float
    gold: int = 0
    system: int = 0
    correct: int = 0


def f1(p_count: int, r_count: int, match_count: int) -> Tuple[float, float, float]:
    """Precision/recall/F1 in percent from system, gold and matched counts."""
    p = 100.0 * match_count / p_count if p_count else 0.0
    r = 100.0 * match_count / r_count if r_count else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _score(gold: int, system: int, correct: int) -> Score:
    p, r, f = f1(system, gold, correct)
    return Score(p, r, f, gold, system, correct)


@dataclass
class EvalReport:
    scores: Dict[str, Optional[Score]]
    tokens: int
    sentences: int

    def __getitem__(self, metric: str) -> Optional[Score]:
        return self.scores[metric]

    def f1(self, metric: str) -> Optional[float]:
        s = self.scores[metric]
        return None if s is None else s.f1

    def as_text(self) -> str:
        lines = [f"{'Metric':<8} | {'Precision':>9} | {'Recall':>9} | {'F1 Score':>9}", "-" * 44]
        for m in METRICS:
            s = self.scores[m]
            if s is None:
                lines.append(f"{m:<8} | {'NA':>9} | {'NA':>9} | {'NA':>9}")
            else:
                lines.append(f"{m:<8} | {s.precision:9.2f} | {s.recall:9.2f} | {s.f1:9.2f}")
        lines.append(f"{self.sentences} sentences, {self.tokens} tokens")
        return "\n".join(lines)

    def as_key_value(self) -> str:
        out = []
        for m in METRICS:
            s = self.scores[m]
            out.append(f"{m}=NA" if s is None else f"{m}={s.f1:.4f}")
        out.append(f"tokens={self.tokens}")
        out.append(f"sentences={self.sentences}")
        return "\n".join(out)

    def as_tsv(self) -> str:
        rows = ["metric\tprecision\trecall\tf1\tgold\tsystem\tcorrect"]
        for m in METRICS:
            s = self.scores[m]
            if s is None:
                rows.append(f"{m}\tNA\tNA\tNA\t0\t0\t0")
            else:
                rows.append(f"{m}\t{s.precision:.4f}\t{s.recall:.4f}\t{s.f1:.4f}\t{s.gold}\t{s.system}\t{s.correct}")
        return "\n".join(rows) + "\n"


def parse_key_value(text: str) -> Dict[str, Optional[float]]:
    """Inverse of :meth:`EvalReport.as_key_value` for the metric lines."""
    out: Dict[str, Optional[float]] = {}
    for line in text.splitlines():
        key, sep, value = line.strip().partition("=")
        if not sep or key not in METRICS:
            continue
        out[key] = None if value == "NA" else float(value)
    return out


def universal_deprel(deprel: str) -> str:
    return deprel.split(":", 1)[0]


def universal_feats(tok: Token) -> Tuple[Tuple[str, str], ...]:
    return tuple(sorted((k, v) for k, v in tok.feats.items() if k in UNIVERSAL_FEATURES))


class _Word:
    __slots__ = ("tok", "deprel", "feats", "children")

    def __init__(self, tok: Token):
        self.tok = tok
        self.deprel = universal_deprel(tok.deprel)
        self.feats = universal_feats(tok)
        self.children: List["_Word"] = []

    @property
    def is_content(self) -> bool:
        return self.deprel in CONTENT_DEPRELS


def _words(sentence: Sentence) -> List[_Word]:
    words = [_Word(t) for t in sentence.tokens]
    for w in words:
        h = w.tok.head
        if h is not None and 1 <= h <= len(words) and w.deprel in FUNCTIONAL_DEPRELS:
            words[h - 1].children.append(w)
    return words


def _function_children(w: _Word) -> list:
    return [(c.tok.id, c.deprel, c.tok.upos, c.feats) for c in w.children]


_KEYS = {
    "UPOS": lambda w, g: w.tok.upos,
    "XPOS": lambda w, g: w.tok.xpos,
    "UFeats": lambda w, g: w.feats,
    "Lemma": lambda w, g: w.tok.lemma if g.tok.lemma != "_" else "_",
    "UAS": lambda w, g: w.tok.head,
    "LAS": lambda w, g: (w.tok.head, w.deprel),
    "CLAS": lambda w, g: (w.tok.head, w.deprel),
    "MLAS": lambda w, g: (w.tok.head, w.deprel, w.tok.upos, w.feats, _function_children(w)),
    "BLEX": lambda w, g: (w.tok.head, w.deprel, w.tok.lemma if g.tok.lemma != "_" else "_"),
}
_CONTENT_ONLY = {"CLAS", "MLAS", "BLEX"}


def _as_sentences(tb: Union[Treebank, Sequence[Sentence]]) -> List[Sentence]:
    return list(tb.sentences if isinstance(tb, Treebank) else tb)


def _column_absent(gold: List[Sentence], metric: str) -> bool:
    toks = [t for s in gold for t in s]
    if metric == "UPOS":
        return all(t.upos == "_" for t in toks)
    if metric == "XPOS":
        return all(t.xpos == "_" for t in toks)
    if metric == "UFeats":
        return all(not t.feats for t in toks)
    if metric == "Lemma":
        return all(t.lemma == "_" for t in toks)
    if metric == "UAS":
        return all(t.head is None for t in toks)
    if metric in ("LAS", "CLAS"):
        return all(t.head is None for t in toks) or all(t.deprel == "_" for t in toks)
    if metric == "MLAS":
        return _column_absent(gold, "CLAS") or _column_absent(gold, "UPOS")
    if metric == "BLEX":
        return _column_absent(gold, "CLAS") or _column_absent(gold, "Lemma")
    raise KeyError(metric)


def evaluate(gold_tb: Union[Treebank, Sequence[Sentence]], pred_tb: Union[Treebank, Sequence[Sentence]]) -> EvalReport:
    gold = _as_sentences(gold_tb)
    pred = _as_sentences(pred_tb)
    if len(gold) != len(pred):
        raise EvaluationError(f"sentence count mismatch: gold {len(gold)}, system {len(pred)}")
    counts = {m: [0, 0, 0] for m in METRICS}  # gold, system, correct
    tokens = 0
    for i, (gs, ps) in enumerate(zip(gold, pred)):
        if len(gs) != len(ps):
            raise EvaluationError(f"sentence {i + 1}: token count mismatch: gold {len(gs)}, system {len(ps)}")
        for j, (gt, pt) in enumerate(zip(gs.tokens, ps.tokens), start=1):
            if gt.form != pt.form:
                raise EvaluationError(f"sentence {i + 1} token {j}: form mismatch {gt.form!r} vs {pt.form!r}")
        tokens += len(gs)
        gw, pw = _words(gs), _words(ps)
        for m in METRICS:
            c = counts[m]
            for g, p in zip(gw, pw):
                gold_in = m not in _CONTENT_ONLY or g.is_content
                sys_in = m not in _CONTENT_ONLY or p.is_content
                c[0] += gold_in
                c[1] += sys_in
                if gold_in and _KEYS[m](g, g) == _KEYS[m](p, g):
                    c[2] += 1
    scores: Dict[str, Optional[Score]] = {}
    for m in METRICS:
        scores[m] = None if not gold or _column_absent(gold, m) else _score(*counts[m])
    return EvalReport(scores, tokens, len(gold))
