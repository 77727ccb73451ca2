import json
import struct

import numpy as np
import pytest

from conftest import tiny_config
from morphparse.archive import ArchiveError, ModelArchive, load_model, save_model
from morphparse.extractors import WordVectors
from morphparse.model import JointModel
from morphparse.trainer import TrainConfig
from morphparse.vocab import Vocabularies


@pytest.fixture(scope="module")
def model(synthetic_tb):
    words = sorted({t.form.lower() for s in synthetic_tb for t in s})
    vectors = WordVectors(words, np.random.default_rng(0).normal(size=(len(words), 4)))
    return JointModel(tiny_config(features=["char", "word"]), Vocabularies.build(synthetic_tb), seed=3, vectors=vectors)


def test_load_then_save_is_byte_identical(model, tmp_path):
    first = tmp_path / "a.model"
    save_model(first, model, TrainConfig(), {"best_epoch": 7})
    second = tmp_path / "b.model"
    ModelArchive.load(first).save(second)
    assert first.read_bytes() == second.read_bytes()


def test_loaded_model_predicts_identically(model, synthetic_tb, tmp_path):
    path = tmp_path / "m.model"
    save_model(path, model)
    loaded = load_model(path)
    sents = synthetic_tb.sentences[:5]
    a, b = model.predict(sents), loaded.predict(sents)
    for s, t in zip(a, b):
        assert [(x.head, x.deprel, x.upos, x.lemma, x.feats) for x in s] == [
            (y.head, y.deprel, y.upos, y.lemma, y.feats) for y in t]
        np.testing.assert_array_equal(s.tokens[0].embeddings["deprel"], t.tokens[0].embeddings["deprel"])


def test_manifest_carries_configuration(model, tmp_path):
    path = tmp_path / "m.model"
    save_model(path, model, TrainConfig(), {"lr_history": [0.002, 0.001]})
    data = path.read_bytes()
    length = struct.unpack_from("<Q", data, 12)[0]
    manifest = json.loads(data[20 : 20 + length])
    assert manifest["loss_weights"]["deprel"] == 0.8
    assert manifest["model_config"]["features"] == ["char", "word"]
    assert manifest["metadata"]["lr_history"] == [0.002, 0.001]
    assert {t["name"] for t in manifest["tensors"]} >= {"external_vectors", "parser.root"}


def test_corrupt_archives_are_rejected(model, tmp_path):
    data = ModelArchive(model).to_bytes()
    with pytest.raises(ArchiveError, match="magic"):
        ModelArchive.from_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(ArchiveError, match="version"):
        ModelArchive.from_bytes(data[:8] + struct.pack("<I", 99) + data[12:])
    with pytest.raises(ArchiveError, match="truncated"):
        ModelArchive.from_bytes(data[:-10])
