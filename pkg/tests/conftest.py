from pathlib import Path

import numpy as np
import pytest

from morphparse.autodiff import default_dtype
from morphparse.model import ModelConfig
from morphparse.synthetic import generate_treebank

DATA = Path(__file__).parent / "data"


def tiny_config(**overrides) -> ModelConfig:
    """Same architecture as the defaults, scaled down for fast unit tests."""
    base = dict(
        char_dim=8, char_filters=[12, 10, 8], projection_dim=6, tag_embedding_dim=4, lstm_hidden=7,
        upos_hidden=6, tag_hidden=5, lemma_char_dim=6, lemma_context_dim=3, lemma_filters=9, arc_dim=6,
        label_dim=5,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield


@pytest.fixture(scope="session")
def synthetic_tb():
    return generate_treebank(40, seed=3)


@pytest.fixture
def data_dir() -> Path:
    return DATA


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
