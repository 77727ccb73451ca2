"""Single-file model archive.

Layout (integers little-endian)::

    magic     b"MPARCHV\\0" (8 bytes)
    version   uint32
    length    uint64 byte length of the manifest
    manifest  UTF-8 JSON, keys sorted, no whitespace
    tensors   raw little-endian blocks; manifest["tensors"] lists
              name, dtype, shape, offset (from the start of this section), nbytes

The manifest carries the model and training configuration, the loss weights,
vocabularies, external-vector words and free-form training metadata. Saving a
loaded archive reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .extractors import WordVectors
from .model import JointModel, ModelConfig
from .trainer import TrainConfig
from .vocab import Vocabularies

MAGIC = b"MPARCHV\0"
FORMAT_VERSION = 1
EXTERNAL_TENSOR = "external_vectors"


class ArchiveError(ValueError):
    pass


@dataclass
class ModelArchive:
    model: JointModel
    train_config: TrainConfig = field(default_factory=TrainConfig)
    metadata: Dict = field(default_factory=dict)

    def manifest_and_tensors(self):
        tensors = []
        arrays = []
        offset = 0
        named = [(name, p.value) for name, p in self.model.named_parameters()]
        if self.model.vectors is not None:
            named.append((EXTERNAL_TENSOR, self.model.vectors.matrix))
        for name, value in named:
            arr = np.ascontiguousarray(value)
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            tensors.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape), "offset": offset,
                            "nbytes": int(le.nbytes)})
            arrays.append(le)
            offset += le.nbytes
        manifest = {
            "format_version": FORMAT_VERSION,
            "model_config": self.model.config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "loss_weights": dict(self.train_config.loss_weights),
            "vocabularies": self.model.vocabs.to_dict(),
            "external_words": list(self.model.vectors.words) if self.model.vectors is not None else None,
            "metadata": self.metadata,
            "tensors": tensors,
        }
        return manifest, arrays

    def to_bytes(self) -> bytes:
        manifest, arrays = self.manifest_and_tensors()
        text = json.dumps(manifest, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
        parts = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(text)), text]
        parts.extend(a.tobytes() for a in arrays)
        return b"".join(parts)

    def save(self, path: Union[str, Path]) -> None:
        data = self.to_bytes()
        tmp = Path(str(path) + ".tmp")
        with open(tmp, "wb") as f:
            f.write(data)
        tmp.replace(path)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelArchive":
        if not data.startswith(MAGIC):
            raise ArchiveError("not a model archive (bad magic)")
        header = len(MAGIC) + 12
        if len(data) < header:
            raise ArchiveError("truncated archive header")
        version, length = struct.unpack_from("<IQ", data, len(MAGIC))
        if version != FORMAT_VERSION:
            raise ArchiveError(f"archive format version {version} is not supported (expected {FORMAT_VERSION})")
        manifest = json.loads(data[header : header + length].decode("utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ArchiveError("manifest version does not match the header")
        base = header + length
        tensors = {}
        for t in manifest["tensors"]:
            start = base + t["offset"]
            if start + t["nbytes"] > len(data):
                raise ArchiveError(f"truncated tensor {t['name']}")
            arr = np.frombuffer(data, dtype=np.dtype(t["dtype"]), count=int(np.prod(t["shape"], dtype=np.int64)),
                                offset=start).reshape(t["shape"])
            tensors[t["name"]] = arr
        vectors = None
        if manifest["external_words"] is not None:
            vectors = WordVectors(manifest["external_words"], tensors.pop(EXTERNAL_TENSOR))
        config = ModelConfig.from_dict(manifest["model_config"])
        vocabs = Vocabularies.from_dict(manifest["vocabularies"])
        model = JointModel(config, vocabs, seed=0, vectors=vectors)
        params = dict(model.named_parameters())
        if set(params) != set(tensors):
            missing = sorted(set(params) - set(tensors))
            extra = sorted(set(tensors) - set(params))
            raise ArchiveError(f"archive tensors do not match the model: missing {missing}, unexpected {extra}")
        for name, p in params.items():
            arr = tensors[name]
            if arr.shape != p.value.shape:
                raise ArchiveError(f"tensor {name}: shape {arr.shape} != {p.value.shape}")
            p.value = arr.astype(arr.dtype.newbyteorder("="), copy=True)
        train_config = TrainConfig.from_dict(manifest["train_config"])
        return cls(model, train_config, manifest["metadata"])

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelArchive":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def save_model(path: Union[str, Path], model: JointModel, train_config: Optional[TrainConfig] = None,
               metadata: Optional[Dict] = None) -> ModelArchive:
    archive = ModelArchive(model, train_config or TrainConfig(), metadata or {})
    archive.save(path)
    return archive


def load_model(path: Union[str, Path]) -> JointModel:
    return ModelArchive.load(path).model
