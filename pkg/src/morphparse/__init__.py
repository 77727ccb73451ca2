"""Joint morphosyntactic tagger, lemmatiser and dependency parser on a small autodiff core."""

from .archive import ModelArchive, load_model, save_model
from .conllu import Sentence, Token, Treebank, read_conllu, validate_tree, write_conllu
from .evaluator import EvalReport, evaluate
from .model import JointModel, ModelConfig
from .trainer import TrainConfig, Trainer, train
from .vocab import Vocabularies

__version__ = "0.1.0"

__all__ = [
    "EvalReport", "JointModel", "ModelArchive", "ModelConfig", "Sentence", "Token", "TrainConfig", "Trainer",
    "Treebank", "Vocabularies", "evaluate", "load_model", "read_conllu", "save_model", "train", "validate_tree",
    "write_conllu",
]
