"""Per-token UPOS/DEPREL hidden-layer embeddings: attachment and export.

Text export is tab-separated with a header line::

    sentence<TAB>token<TAB>name<TAB>vector

where ``vector`` is space-separated ``%.9g`` values (exact for float32).

Binary export (all integers little-endian)::

    magic   b"MPEMB\\0" (6 bytes)
    version uint16 = 1
    count   uint32 number of records
    record  uint32 sentence, uint32 token, uint16 name length, name (UTF-8),
            uint32 dim, dim x float32
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .conllu import Sentence, Treebank

EMBEDDING_NAMES = ("upostag", "deprel")
EMBEDDING_DIMS = {"upostag": 64, "deprel": 128}
BINARY_MAGIC = b"MPEMB\0"
BINARY_VERSION = 1
TEXT_HEADER = "sentence\ttoken\tname\tvector"

Record = Tuple[int, int, str, np.ndarray]


class EmbeddingError(ValueError):
    pass


def attach_embeddings(sentence: Sentence, upos_vectors: Optional[np.ndarray] = None,
                      deprel_vectors: Optional[np.ndarray] = None) -> Sentence:
    """Store the rows of the given (n, d) arrays on the sentence's tokens."""
    for name, vectors in (("upostag", upos_vectors), ("deprel", deprel_vectors)):
        if vectors is None:
            continue
        if len(vectors) != len(sentence):
            raise EmbeddingError(f"{name}: {len(vectors)} vectors for {len(sentence)} tokens")
        for tok, v in zip(sentence.tokens, vectors):
            tok.embeddings[name] = np.asarray(v, dtype=np.float32).copy()
    return sentence


def available_embeddings(targets: Sequence[str]) -> List[str]:
    names = []
    if "upos" in targets:
        names.append("upostag")
    if "deprel" in targets:
        names.append("deprel")
    return names


def check_requested(requested: Sequence[str], targets: Sequence[str]) -> List[str]:
    allowed = available_embeddings(targets)
    for name in requested:
        if name not in EMBEDDING_NAMES:
            raise EmbeddingError(f"unknown embedding {name!r}; expected one of {EMBEDDING_NAMES}")
        if name not in allowed:
            raise EmbeddingError(f"embedding {name!r} needs a model trained with its target enabled")
    return list(requested)


def iter_records(sentences: Iterable[Sentence], names: Sequence[str] = EMBEDDING_NAMES) -> Iterable[Record]:
    for s_index, s in enumerate(sentences):
        for tok in s.tokens:
            for name in names:
                v = tok.embeddings.get(name)
                if v is not None:
                    yield s_index, tok.id, name, np.asarray(v, dtype=np.float32)


def _sentences(tb: Union[Treebank, Sequence[Sentence]]) -> Sequence[Sentence]:
    return tb.sentences if isinstance(tb, Treebank) else tb


def export_embeddings(tb: Union[Treebank, Sequence[Sentence]], path: Union[str, Path], fmt: str = "text",
                      names: Sequence[str] = EMBEDDING_NAMES) -> int:
    """Write every attached embedding; returns the number of records."""
    records = list(iter_records(_sentences(tb), names))
    if fmt == "text":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(TEXT_HEADER + "\n")
            for s, t, name, v in records:
                f.write(f"{s}\t{t}\t{name}\t" + " ".join(f"{x:.9g}" for x in v.tolist()) + "\n")
    elif fmt == "binary":
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC + struct.pack("<HI", BINARY_VERSION, len(records)))
            for s, t, name, v in records:
                encoded = name.encode("utf-8")
                f.write(struct.pack("<IIH", s, t, len(encoded)) + encoded + struct.pack("<I", len(v)))
                f.write(v.astype("<f4").tobytes())
    else:
        raise ValueError(f"unknown embedding format {fmt!r}; expected 'text' or 'binary'")
    return len(records)


def read_embeddings(path: Union[str, Path]) -> List[Record]:
    """Read either export format (detected from the magic bytes)."""
    with open(path, "rb") as f:
        data = f.read()
    if data.startswith(BINARY_MAGIC):
        return _read_binary(data)
    lines = data.decode("utf-8").splitlines()
    if not lines or lines[0] != TEXT_HEADER:
        raise ValueError(f"{path}: not an embedding export")
    out = []
    for line in lines[1:]:
        s, t, name, values = line.split("\t")
        out.append((int(s), int(t), name, np.array(values.split(), dtype=np.float32)))
    return out


def _read_binary(data: bytes) -> List[Record]:
    pos = len(BINARY_MAGIC)
    version, count = struct.unpack_from("<HI", data, pos)
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported embedding file version {version}")
    pos += 6
    out = []
    for _ in range(count):
        s, t, name_len = struct.unpack_from("<IIH", data, pos)
        pos += 10
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (dim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        v = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).astype(np.float32)
        pos += 4 * dim
        out.append((s, t, name, v))
    return out
