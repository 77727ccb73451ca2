"""Joint training: weighted multi-task loss, Adam, plateau schedule, best-checkpoint selection."""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .autodiff import Adam, backward
from .batch import batches
from .conllu import Sentence, Treebank
from .evaluator import evaluate
from .extractors import TokenVectors, WordVectors
from .model import DEFAULT_LOSS_WEIGHTS, JointModel, ModelConfig, total_loss
from .vocab import Vocabularies, available_targets

logger = logging.getLogger(__name__)

TARGET_METRIC = {"upos": "UPOS", "xpos": "XPOS", "ufeats": "UFeats", "lemma": "Lemma", "head": "UAS", "deprel": "LAS"}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    loss_weights: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LOSS_WEIGHTS))
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    max_epochs: int = 400
    patience: int = 10
    threshold: float = 1e-4
    lr_factor: float = 0.5
    max_reductions: int = 2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if any(w < 0 for w in self.loss_weights.values()):
            raise ValueError("loss weights must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    task_losses: Dict[str, float]
    score: float
    metrics: Dict[str, float]
    lr: float
    seconds: float


@dataclass
class TrainState:
    epoch: int = 0
    best_score: float = -math.inf
    best_epoch: int = 0
    reductions: int = 0
    bad_epochs: int = 0
    lr: float = 0.002
    stopped: bool = False
    lr_history: List[float] = field(default_factory=list)


def validation_score(gold: Sequence[Sentence], pred: Sequence[Sentence], targets: Sequence[str]):
    """Mean over enabled targets of accuracy (UAS for head, LAS for deprel)."""
    report = evaluate(gold, pred)
    metrics = {}
    for t in targets:
        s = report[TARGET_METRIC[t]]
        if s is not None:
            metrics[TARGET_METRIC[t]] = s.f1
    score = float(np.mean(list(metrics.values()))) if metrics else 0.0
    return score, metrics


class Trainer:
    def __init__(self, model: JointModel, train: Sequence[Sentence], valid: Optional[Sequence[Sentence]] = None,
                 config: Optional[TrainConfig] = None, token_vectors: Optional[TokenVectors] = None,
                 valid_token_vectors: Optional[TokenVectors] = None,
                 on_epoch: Optional[Callable[[EpochRecord], None]] = None):
        self.model = model
        self.train_sentences = list(train)
        if not self.train_sentences:
            raise TrainingError("empty training treebank")
        if valid is None or len(valid) == 0:
            logger.warning("no validation data; model selection uses the training data")
            valid = self.train_sentences
            valid_token_vectors = token_vectors
        self.valid_sentences = list(valid)
        self.config = config or TrainConfig()
        self.token_vectors = token_vectors
        self.valid_token_vectors = valid_token_vectors
        self.on_epoch = on_epoch
        self.rng = np.random.default_rng(self.config.seed)
        self.params = model.parameters()
        self.optimizer = Adam(self.params, lr=self.config.lr, beta1=self.config.beta1, beta2=self.config.beta2,
                              eps=self.config.eps)
        self.state = TrainState(lr=self.config.lr, lr_history=[self.config.lr])
        self.history: List[EpochRecord] = []
        self.best_params: Optional[Dict[str, np.ndarray]] = None
        self._check_labels()

    def _check_labels(self) -> None:
        v = self.model.vocabs
        targets = set(self.model.config.targets)
        for i, s in enumerate(self.train_sentences):
            for tok in s:
                for name, vocab, value in (("upos", v.upos, tok.upos), ("xpos", v.xpos, tok.xpos),
                                           ("deprel", v.deprel, tok.deprel)):
                    if name in targets and value != "_" and value not in vocab:
                        raise TrainingError(f"sentence {i + 1} token {tok.id}: {name} {value!r} not in vocabulary")

    # ------------------------------------------------------------ one epoch

    def _external(self, idx: Sequence[int]):
        if "word" not in self.model.config.features:
            return None
        sents = [self.train_sentences[i] for i in idx]
        if self.token_vectors is not None:
            return [self.token_vectors.for_sentences([s], i)[0] for s, i in zip(sents, idx)]
        return self.model.vectors.for_sentences(sents)

    def train_epoch(self) -> Dict[str, float]:
        targets = self.model.config.targets
        weights = self.config.loss_weights
        totals: Dict[str, float] = {}
        total_loss_sum = 0.0
        count = 0
        for b, idx in enumerate(batches(self.train_sentences, self.config.batch_size, self.rng)):
            batch = self.model.make_batch([self.train_sentences[i] for i in idx], external=self._external(idx))
            out = self.model.forward(batch, train=True, rng=self.rng)
            losses = self.model.losses(batch, out)
            loss = total_loss(losses, weights, targets)
            value = float(loss.value)
            if not math.isfinite(value):
                detail = ", ".join(f"{k}={float(v.value):.4g}" for k, v in losses.items())
                raise TrainingError(f"loss diverged at epoch {self.state.epoch + 1}, batch {b + 1}: {detail}")
            self.optimizer.zero_grad()
            backward(loss)
            self.optimizer.step()
            n = len(idx)
            total_loss_sum += value * n
            count += n
            for k, v in losses.items():
                totals[k] = totals.get(k, 0.0) + float(v.value) * n
        task = {k: v / count for k, v in totals.items()}
        task["total"] = total_loss_sum / count
        return task

    def validate(self):
        pred = self.model.predict(self.valid_sentences, batch_size=self.config.batch_size, embeddings=False,
                                  token_vectors=self.valid_token_vectors)
        return validation_score(self.valid_sentences, pred, self.model.config.targets)

    def _schedule(self, score: float) -> None:
        st = self.state
        if score > st.best_score + self.config.threshold:
            st.best_score = score
            st.best_epoch = st.epoch
            st.bad_epochs = 0
            self.best_params = {p.name: p.value.copy() for p in self.params}
            return
        st.bad_epochs += 1
        if st.bad_epochs < self.config.patience:
            return
        if st.reductions < self.config.max_reductions:
            st.reductions += 1
            st.lr *= self.config.lr_factor
            st.bad_epochs = 0
            self.optimizer.lr = st.lr
            logger.info("plateau: learning rate reduced to %g", st.lr)
        else:
            st.stopped = True

    def run_epoch(self) -> EpochRecord:
        start = time.perf_counter()
        task = self.train_epoch()
        self.state.epoch += 1
        score, metrics = self.validate()
        lr_used = self.state.lr
        self._schedule(score)
        self.state.lr_history.append(self.state.lr)
        record = EpochRecord(self.state.epoch, task.pop("total"), task, score, metrics, lr_used,
                             time.perf_counter() - start)
        self.history.append(record)
        logger.info("epoch %d loss %.4f score %.2f lr %g (%.1fs)", record.epoch, record.loss, score, lr_used,
                    record.seconds)
        if self.on_epoch is not None:
            self.on_epoch(record)
        return record

    def train(self, max_epochs: Optional[int] = None) -> List[EpochRecord]:
        limit = self.config.max_epochs if max_epochs is None else min(max_epochs, self.config.max_epochs)
        while self.state.epoch < limit and not self.state.stopped:
            self.run_epoch()
        self.restore_best()
        return self.history

    def restore_best(self) -> None:
        if self.best_params is None:
            return
        for p in self.params:
            p.value[...] = self.best_params[p.name]

    # ------------------------------------------------------------ resumability

    def state_dict(self) -> dict:
        return {
            "state": copy.deepcopy(asdict(self.state)),
            "rng": copy.deepcopy(self.rng.bit_generator.state),
            "optimizer": self.optimizer.state_dict(),
            "params": {p.name: p.value.copy() for p in self.params},
            "best_params": None if self.best_params is None else {k: v.copy() for k, v in self.best_params.items()},
        }

    def load_state_dict(self, d: dict) -> None:
        self.state = TrainState(**copy.deepcopy(d["state"]))
        self.rng.bit_generator.state = copy.deepcopy(d["rng"])
        self.optimizer.load_state_dict(d["optimizer"])
        self.optimizer.lr = self.state.lr
        for p in self.params:
            p.value[...] = d["params"][p.name]
        self.best_params = None if d["best_params"] is None else {k: v.copy() for k, v in d["best_params"].items()}


def lr_halvings(lr_history: Sequence[float]) -> int:
    """Number of times the learning rate dropped in a trajectory."""
    return sum(1 for a, b in zip(lr_history, lr_history[1:]) if b < a)


def resolve_targets(train: Treebank, requested: Optional[Sequence[str]] = None) -> List[str]:
    """Requested (or all) targets, minus those whose gold column is empty in training."""
    present = available_targets(train)
    wanted = list(requested) if requested is not None else list(TARGET_METRIC)
    dropped = [t for t in wanted if t not in present]
    if dropped:
        logger.warning("disabling targets with no gold annotation in training data: %s", ", ".join(dropped))
    return [t for t in wanted if t in present]


def train(train_tb: Treebank, valid_tb: Optional[Treebank] = None, model_config: Optional[ModelConfig] = None,
          train_config: Optional[TrainConfig] = None, vectors: Optional[WordVectors] = None,
          max_epochs: Optional[int] = None, on_epoch: Optional[Callable[[EpochRecord], None]] = None,
          min_char_freq: int = 2):
    """Build vocabularies and a model from ``train_tb`` and train it. Returns ``(model, trainer)``."""
    if len(train_tb) == 0:
        raise TrainingError("empty training treebank")
    model_config = model_config or ModelConfig()
    targets = resolve_targets(train_tb, model_config.targets)
    if not targets:
        raise TrainingError("no trainable targets: every target column is empty")
    model_config = ModelConfig.from_dict({**model_config.to_dict(), "targets": targets})
    train_config = train_config or TrainConfig()
    vocabs = Vocabularies.build(train_tb, min_char_freq=min_char_freq)
    model = JointModel(model_config, vocabs, seed=train_config.seed, vectors=vectors)
    trainer = Trainer(model, train_tb.sentences, valid_tb.sentences if valid_tb is not None else None,
                      train_config, on_epoch=on_epoch)
    trainer.train(max_epochs)
    return model, trainer
