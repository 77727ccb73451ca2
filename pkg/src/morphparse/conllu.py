"""Reading, validating and writing CoNLL-U (and reading CoNLL-X) treebanks.

Multiword-token ranges (``1-2``) and empty nodes (``8.1``) are kept verbatim as
pass-through rows anchored after the preceding regular token. They round-trip
through :func:`write_conllu` but are never shown to the model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ConlluError(ValueError):
    """Malformed input; carries the 1-based line number where it was detected."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[PathLike] = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass
class Token:
    id: int
    form: str
    lemma: str = "_"
    upos: str = "_"
    xpos: str = "_"
    feats: Dict[str, str] = field(default_factory=dict)
    head: Optional[int] = None
    deprel: str = "_"
    deps: str = "_"
    misc: str = "_"
    embeddings: Dict[str, np.ndarray] = field(default_factory=dict)

    def feats_string(self) -> str:
        return format_feats(self.feats)

    def copy(self) -> "Token":
        return Token(self.id, self.form, self.lemma, self.upos, self.xpos, dict(self.feats), self.head,
                     self.deprel, self.deps, self.misc, dict(self.embeddings))


@dataclass
class Sentence:
    tokens: List[Token] = field(default_factory=list)
    comments: List[str] = field(default_factory=list)
    # (number of regular tokens before the row, raw line)
    extra_rows: List[Tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    @property
    def forms(self) -> List[str]:
        return [t.form for t in self.tokens]

    @property
    def heads(self) -> List[Optional[int]]:
        return [t.head for t in self.tokens]

    def copy(self) -> "Sentence":
        return Sentence([t.copy() for t in self.tokens], list(self.comments), list(self.extra_rows))


@dataclass
class Treebank:
    sentences: List[Sentence] = field(default_factory=list)
    path: Optional[str] = None

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


# ---------------------------------------------------------------- feats


def parse_feats(text: str) -> Dict[str, str]:
    if text == "_" or text == "":
        return {}
    feats = {}
    for item in text.split("|"):
        key, sep, value = item.partition("=")
        if not key:
            raise ValueError(f"empty feature name in {text!r}")
        feats[key] = value if sep else ""
    return feats


def format_feats(feats: Dict[str, str]) -> str:
    if not feats:
        return "_"
    items = sorted(feats.items(), key=lambda kv: (kv[0].lower(), kv[0]))
    return "|".join(f"{k}={v}" if v != "" else k for k, v in items)


# ---------------------------------------------------------------- validation


@dataclass
class TreeDiagnosis:
    valid: bool
    roots: List[int]
    cycles: List[List[int]]
    errors: List[str]


def validate_tree(sentence: Union[Sentence, Sequence[Optional[int]]], single_root: bool = True) -> TreeDiagnosis:
    """Check that heads form one arborescence rooted at the artificial node 0."""
    heads = sentence.heads if isinstance(sentence, Sentence) else list(sentence)
    n = len(heads)
    errors = []
    if n == 0:
        return TreeDiagnosis(False, [], [], ["empty sentence"])
    for i, h in enumerate(heads, start=1):
        if h is None:
            errors.append(f"token {i} has no head")
        elif not 0 <= h <= n:
            errors.append(f"token {i} head {h} out of range")
        elif h == i:
            errors.append(f"token {i} is its own head")
    roots = [i for i, h in enumerate(heads, start=1) if h == 0]
    if errors:
        return TreeDiagnosis(False, roots, [], errors)
    if not roots:
        errors.append("no root")
    elif single_root and len(roots) > 1:
        errors.append(f"multiple roots: {roots}")

    # colour each node by walking up the head chain
    state = [0] * (n + 1)  # 0 unseen, 1 on current path, 2 reaches root
    state[0] = 2
    cycles = []
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if state[node] == 1:
            cycle = path[path.index(node):]
            cycles.append(sorted(cycle))
        for p in path:
            state[p] = 2
    if cycles:
        errors.append("cycles: " + "; ".join(str(c) for c in cycles))
    return TreeDiagnosis(not errors, roots, cycles, errors)


# ---------------------------------------------------------------- reading


def _parse_token(cols: List[str], expected_id: int, lineno: int, path, conllx: bool) -> Token:
    if cols[0] != str(expected_id):
        raise ConlluError(f"expected token id {expected_id}, found {cols[0]!r}", lineno, path)
    head_text = cols[6]
    head: Optional[int]
    if head_text == "_":
        head = None
    else:
        try:
            head = int(head_text)
        except ValueError:
            raise ConlluError(f"non-integer head {head_text!r}", lineno, path) from None
        if head < 0:
            raise ConlluError(f"negative head {head}", lineno, path)
    try:
        feats = parse_feats(cols[5])
    except ValueError as e:
        raise ConlluError(str(e), lineno, path) from None
    if conllx:
        # CoNLL-X: PHEAD/PDEPREL have no CoNLL-U counterpart
        deps, misc = "_", "_"
    else:
        deps, misc = cols[8], cols[9]
    return Token(expected_id, cols[1], cols[2], cols[3], cols[4], feats, head, cols[7], deps, misc)


def _finish_sentence(sentence: Sentence, lineno: int, path) -> Sentence:
    n = len(sentence.tokens)
    if n == 0:
        raise ConlluError("sentence without regular tokens", lineno, path)
    for tok in sentence.tokens:
        if tok.head is not None and tok.head > n:
            raise ConlluError(f"token {tok.id} head {tok.head} out of range (sentence length {n})", lineno, path)
        if tok.head == tok.id:
            raise ConlluError(f"token {tok.id} is its own head", lineno, path)
    if all(tok.head is not None for tok in sentence.tokens):
        diagnosis = validate_tree(sentence)
        if not diagnosis.valid:
            raise ConlluError("invalid tree: " + "; ".join(diagnosis.errors), lineno, path)
    return sentence


def parse_conllu(lines: Iterable[str], strict: bool = True, path=None, conllx: bool = False) -> Treebank:
    """Parse CoNLL-U (or CoNLL-X when ``conllx``) text lines into a treebank."""
    treebank = Treebank(path=str(path) if path is not None else None)
    current = Sentence()
    broken: Optional[ConlluError] = None
    started = False
    lineno = 0

    def flush():
        nonlocal current, broken, started
        if started:
            try:
                if broken is not None:
                    raise broken
                treebank.sentences.append(_finish_sentence(current, lineno, path))
            except ConlluError as e:
                if strict:
                    raise
                logger.warning("skipping sentence: %s", e)
        current, broken, started = Sentence(), None, False

    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush()
            continue
        started = True
        if broken is not None:
            continue
        if line.startswith("#") and not current.tokens and not current.extra_rows:
            current.comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            broken = ConlluError(f"expected 10 tab-separated columns, found {len(cols)}", lineno, path)
            if strict:
                raise broken
            continue
        token_id = cols[0]
        if "-" in token_id or "." in token_id:
            current.extra_rows.append((len(current.tokens), line))
            continue
        try:
            current.tokens.append(_parse_token(cols, len(current.tokens) + 1, lineno, path, conllx))
        except ConlluError as e:
            broken = e
            if strict:
                raise
    lineno += 1
    flush()
    if strict and not treebank.sentences:
        raise ConlluError("no sentences found", path=path)
    return treebank


def read_conllu(path: PathLike, strict: bool = True, conllx: Optional[bool] = None) -> Treebank:
    """Read a treebank file. CoNLL-X is assumed for ``.conll``/``.conllx`` unless told otherwise."""
    path = Path(path)
    if conllx is None:
        conllx = path.suffix.lower() in (".conll", ".conllx")
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f, strict=strict, path=path, conllx=conllx)


# ---------------------------------------------------------------- writing


def token_row(tok: Token) -> str:
    head = "_" if tok.head is None else str(tok.head)
    cols = [str(tok.id), tok.form, tok.lemma, tok.upos, tok.xpos, format_feats(tok.feats), head, tok.deprel,
            tok.deps, tok.misc]
    return "\t".join(c if c != "" else "_" for c in cols)


def sentence_lines(sentence: Sentence) -> List[str]:
    lines = list(sentence.comments)
    extras = sorted(range(len(sentence.extra_rows)), key=lambda i: (sentence.extra_rows[i][0], i))
    k = 0
    for position in range(len(sentence.tokens) + 1):
        while k < len(extras) and sentence.extra_rows[extras[k]][0] == position:
            lines.append(sentence.extra_rows[extras[k]][1])
            k += 1
        if position < len(sentence.tokens):
            lines.append(token_row(sentence.tokens[position]))
    return lines


def format_conllu(treebank: Union[Treebank, Sequence[Sentence]]) -> str:
    sentences = treebank.sentences if isinstance(treebank, Treebank) else treebank
    return "".join("\n".join(sentence_lines(s)) + "\n\n" for s in sentences)


def write_conllu(treebank: Union[Treebank, Sequence[Sentence]], path: PathLike) -> None:
    sentences = treebank.sentences if isinstance(treebank, Treebank) else treebank
    for i, s in enumerate(sentences):
        for j, tok in enumerate(s.tokens, start=1):
            if tok.id != j:
                raise ValueError(f"sentence {i}: token ids must be 1..n, found {tok.id} at position {j}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_conllu(sentences))


# ---------------------------------------------------------------- raw text


_TERMINAL = ".,;:!?…\"')]}"


def tokenize_raw(line: str) -> List[str]:
    """Whitespace split, then peel trailing punctuation into its own tokens."""
    tokens: List[str] = []
    for chunk in line.split():
        trailing = []
        while len(chunk) > 1 and chunk[-1] in _TERMINAL:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens


def sentence_from_forms(forms: Sequence[str], text: Optional[str] = None) -> Sentence:
    comments = [f"# text = {text}"] if text is not None else []
    return Sentence([Token(i, f) for i, f in enumerate(forms, start=1)], comments)


def read_raw_text(path: PathLike) -> Treebank:
    """One sentence per non-empty line."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                sentences.append(sentence_from_forms(tokenize_raw(line), text=line))
    return Treebank(sentences, path=str(path))


def looks_like_conllu(path: PathLike) -> bool:
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            return len(line.split("\t")) == 10
    return True


def read_input(path: PathLike, strict: bool = True) -> Treebank:
    """Read a CoNLL-U/CoNLL-X file, or fall back to raw text."""
    if looks_like_conllu(path):
        return read_conllu(path, strict=strict)
    return read_raw_text(path)
