import numpy as np
import pytest

from conftest import tiny_config
from morphparse.model import JointModel
from morphparse.vectoriser import (
    EMBEDDING_DIMS, EmbeddingError, attach_embeddings, check_requested, export_embeddings, read_embeddings,
)
from morphparse.vocab import Vocabularies


@pytest.fixture(scope="module")
def predicted(synthetic_tb):
    model = JointModel(tiny_config(upos_hidden=64, label_dim=128), Vocabularies.build(synthetic_tb), seed=0)
    return model.predict(synthetic_tb.sentences[:4])


def test_embedding_dimensions(predicted):
    for s in predicted:
        for t in s:
            assert t.embeddings["upostag"].shape == (EMBEDDING_DIMS["upostag"],)
            assert t.embeddings["deprel"].shape == (EMBEDDING_DIMS["deprel"],)


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_export_round_trip_is_exact(predicted, tmp_path, fmt):
    path = tmp_path / f"emb.{fmt}"
    count = export_embeddings(predicted, path, fmt=fmt)
    records = read_embeddings(path)
    assert count == len(records) == 2 * sum(len(s) for s in predicted)
    s, t, name, v = records[1]
    assert (s, t, name) == (0, 1, "deprel")
    np.testing.assert_array_equal(v, predicted[0].tokens[0].embeddings["deprel"])
    for s, t, name, v in records:
        assert np.array_equal(v, predicted[s].tokens[t - 1].embeddings[name])


def test_binary_layout_is_little_endian(predicted, tmp_path):
    path = tmp_path / "emb.bin"
    export_embeddings(predicted[:1], path, fmt="binary", names=["upostag"])
    data = path.read_bytes()
    assert data[:6] == b"MPEMB\0"
    assert int.from_bytes(data[6:8], "little") == 1
    assert int.from_bytes(data[8:12], "little") == len(predicted[0])
    first = np.frombuffer(data, dtype="<f4", count=64, offset=12 + 10 + len("upostag") + 4)
    np.testing.assert_array_equal(first, predicted[0].tokens[0].embeddings["upostag"])


def test_disabled_target_embedding_is_rejected():
    assert check_requested(["upostag"], ["upos", "head"]) == ["upostag"]
    with pytest.raises(EmbeddingError):
        check_requested(["deprel"], ["upos", "head"])
    with pytest.raises(EmbeddingError):
        check_requested(["xpos"], ["upos"])


def test_attach_checks_lengths(synthetic_tb):
    s = synthetic_tb[0].copy()
    with pytest.raises(EmbeddingError):
        attach_embeddings(s, upos_vectors=np.zeros((len(s) + 1, 64)))


def test_unknown_format_is_rejected(predicted, tmp_path):
    with pytest.raises(ValueError):
        export_embeddings(predicted, tmp_path / "x", fmt="npz")
