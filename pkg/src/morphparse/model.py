"""The joint tagger / lemmatiser / parser network and its configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import nn
from .autodiff import Node, no_grad, ops
from .batch import Batch
from .conllu import Sentence
from .encoder import BiLSTMEncoder
from .extractors import LocalFeatures, TokenVectors, WordVectors, check_features
from .lemmatiser import Lemmatiser, decode_lemmas, lemma_loss
from .mst import decode_tree
from .parser import Parser, head_loss, label_loss
from .tagger import Tagger, decode_feats, decode_labels, tagger_loss
from .vectoriser import attach_embeddings
from .vocab import Vocabularies

DEFAULT_LOSS_WEIGHTS = {"upos": 0.05, "lemma": 0.05, "ufeats": 0.2, "head": 0.2, "deprel": 0.8, "xpos": 0.05}


@dataclass
class ModelConfig:
    features: List[str] = field(default_factory=lambda: ["char"])
    targets: List[str] = field(default_factory=lambda: ["upos", "xpos", "ufeats", "lemma", "head", "deprel"])
    char_dim: int = 64
    char_filters: List[int] = field(default_factory=lambda: [512, 256, 64])
    char_dilations: List[int] = field(default_factory=lambda: [1, 2, 4])
    projection_dim: int = 100
    tag_embedding_dim: int = 32
    lstm_hidden: int = 512
    lstm_layers: int = 2
    upos_hidden: int = 64
    tag_hidden: int = 128
    lemma_char_dim: int = 256
    lemma_context_dim: int = 32
    lemma_filters: int = 256
    lemma_dilations: List[int] = field(default_factory=lambda: [1, 2, 4])
    arc_dim: int = 512
    label_dim: int = 128
    lstm_dropout: float = 0.33
    fc_dropout: float = 0.25
    external_dim: int = 0
    single_root: bool = True

    def __post_init__(self):
        self.features = check_features(self.features, self.targets)
        self.targets = [t for t in ("upos", "xpos", "ufeats", "lemma", "head", "deprel") if t in self.targets]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Forward:
    flat_globals: Node
    tagger: Optional[object] = None
    lemma_logits: Optional[Node] = None
    parser: Optional[object] = None


class JointModel(nn.Module):
    def __init__(self, config: ModelConfig, vocabs: Vocabularies, seed: int = 0,
                 vectors: Optional[WordVectors] = None):
        rng = np.random.default_rng(seed)
        self.config = config
        self.vocabs = vocabs
        self.vectors = vectors
        if "word" in config.features and vectors is None and config.external_dim <= 0:
            raise ValueError("the word feature needs external vectors")
        if vectors is not None:
            config.external_dim = vectors.dim
        c = config
        self.local = LocalFeatures(
            rng, c.features, len(vocabs.chars), len(vocabs.upos), len(vocabs.xpos), len(vocabs.feat_symbols),
            c.external_dim, c.char_dim, c.char_filters, c.char_dilations, c.projection_dim, c.tag_embedding_dim,
            c.fc_dropout,
        )
        self.encoder = BiLSTMEncoder(rng, self.local.output_dim, c.lstm_hidden, c.lstm_layers, c.lstm_dropout)
        g = self.encoder.output_dim
        t = set(c.targets)
        self.tagger = None
        if t & {"upos", "xpos", "ufeats"}:
            self.tagger = Tagger(
                rng, g, len(vocabs.upos) if "upos" in t else 0, len(vocabs.xpos) if "xpos" in t else 0,
                {k: len(v) for k, v in vocabs.feats.items()} if "ufeats" in t else None,
                c.upos_hidden, c.tag_hidden, c.fc_dropout,
            )
        self.lemmatiser = None
        if "lemma" in t:
            self.lemmatiser = Lemmatiser(rng, len(vocabs.chars), len(vocabs.lemma_chars), g, c.lemma_char_dim,
                                         c.lemma_context_dim, c.lemma_filters, c.lemma_dilations, c.fc_dropout)
        self.parser = None
        if "head" in t:
            self.parser = Parser(rng, g, len(vocabs.deprel) if "deprel" in t else 0, c.arc_dim, c.label_dim,
                                 c.fc_dropout)
        self.assign_names()

    # ------------------------------------------------------------ plumbing

    def named_parameters(self, prefix: str = ""):
        for name in ("local", "encoder", "tagger", "lemmatiser", "parser"):
            module = getattr(self, name)
            if module is not None:
                yield from module.named_parameters(prefix=f"{prefix}{name}.")

    def make_batch(self, sentences: Sequence[Sentence], external: Optional[Sequence[np.ndarray]] = None,
                   with_gold: bool = True, token_vectors: Optional[TokenVectors] = None,
                   start_index: int = 0) -> Batch:
        if "word" in self.config.features and external is None:
            source = token_vectors if token_vectors is not None else self.vectors
            if source is None:
                raise ValueError("the word feature needs external vectors")
            external = source.for_sentences(sentences, start_index)
        targets = self.config.targets if with_gold else [x for x in self.config.targets if x == "lemma"]
        return Batch(sentences, self.vocabs, self.config.features, targets, external)

    # ------------------------------------------------------------ forward

    def forward(self, batch: Batch, train: bool = False, rng: Optional[np.random.Generator] = None) -> Forward:
        local = self.local(batch, train, rng)
        globals_ = self.encoder(local, batch.mask, train, rng)
        flat = batch.flatten(globals_)
        out = Forward(flat)
        if self.tagger is not None:
            out.tagger = self.tagger(flat, train, rng)
        if self.lemmatiser is not None:
            out.lemma_logits = self.lemmatiser(batch.grid_chars, batch.grid_mask, flat, train, rng)
        if self.parser is not None:
            out.parser = self.parser(globals_, batch.lengths, train, rng)
        return out

    def losses(self, batch: Batch, out: Forward) -> Dict[str, Node]:
        losses: Dict[str, Node] = {}
        if out.tagger is not None:
            losses.update(tagger_loss(out.tagger, batch.gold, batch.gold_weight))
        if out.lemma_logits is not None:
            losses["lemma"] = lemma_loss(out.lemma_logits, batch.gold["lemma"], batch.gold_weight["lemma"])
        if out.parser is not None:
            arcs = batch.flatten(out.parser.arc_logits)
            losses["head"] = head_loss(arcs, batch.gold["head"], batch.gold_weight["head"])
            if out.parser.label_logits is not None:
                labels = batch.flatten(out.parser.label_logits)
                losses["deprel"] = label_loss(labels, batch.gold["deprel"], batch.gold_weight["deprel"])
        return losses

    # ------------------------------------------------------------ prediction

    def predict_batch(self, sentences: Sequence[Sentence], embeddings: bool = True,
                      token_vectors: Optional[TokenVectors] = None, start_index: int = 0) -> List[Sentence]:
        """Annotated copies of ``sentences``; only target columns are overwritten."""
        with no_grad():
            batch = self.make_batch(sentences, with_gold=False, token_vectors=token_vectors,
                                    start_index=start_index)
            out = self.forward(batch, train=False)
        result = [s.copy() for s in sentences]
        tokens = [t for s in result for t in s]
        targets = set(self.config.targets)
        v = self.vocabs
        if out.tagger is not None:
            if "upos" in targets:
                for tok, lab in zip(tokens, decode_labels(out.tagger.logits["upos"].value, v.upos)):
                    tok.upos = lab
            if "xpos" in targets:
                for tok, lab in zip(tokens, decode_labels(out.tagger.logits["xpos"].value, v.xpos)):
                    tok.xpos = lab
            if "ufeats" in targets:
                probs = {c: l.value for c, l in out.tagger.feats_logits.items()}
                for tok, feats in zip(tokens, decode_feats(probs, v.feats)):
                    tok.feats = feats
            if embeddings and out.tagger.upos_hidden is not None:
                hidden = out.tagger.upos_hidden.value
                for sent, rows in zip(result, batch.sentence_slices()):
                    attach_embeddings(sent, upos_vectors=hidden[rows])
        if out.lemma_logits is not None:
            for tok, lemma in zip(tokens, decode_lemmas(out.lemma_logits.value, batch.grid_lengths, v.lemma_chars)):
                tok.lemma = lemma if lemma else tok.form
        if out.parser is not None:
            arc_logits = out.parser.arc_logits.value.astype(np.float64)
            labels = out.parser.label_logits.value if out.parser.label_logits is not None else None
            hidden = out.parser.deprel_hidden.value if out.parser.deprel_hidden is not None else None
            for b, sent in enumerate(result):
                n = len(sent)
                rows = arc_logits[b, :n, : n + 1]
                rows = rows - rows.max(axis=1, keepdims=True)
                logp = rows - np.log(np.exp(rows).sum(axis=1, keepdims=True))
                heads = decode_tree(logp, single_root=self.config.single_root, log_space=True)
                for t, tok in enumerate(sent.tokens):
                    tok.head = heads[t]
                    if labels is not None:
                        tok.deprel = v.deprel.symbol(int(labels[b, t].argmax()))
                if embeddings and hidden is not None:
                    attach_embeddings(sent, deprel_vectors=hidden[b, :n])
        return result

    def predict(self, sentences: Sequence[Sentence], batch_size: int = 32, embeddings: bool = True,
                token_vectors: Optional[TokenVectors] = None) -> List[Sentence]:
        out: List[Sentence] = []
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            out.extend(self.predict_batch(chunk, embeddings, token_vectors, start_index=start))
        return out

    # ------------------------------------------------------------ introspection

    def dimension_audit(self) -> Dict[str, Union[int, List[int]]]:
        """Layer sizes as built, for checking against the configured architecture."""
        audit: Dict[str, Union[int, List[int]]] = {}
        if "char" in self.config.features:
            audit["char_filters"] = [conv.out_channels for conv in self.local.char_cnn.convs]
            audit["char_dilations"] = [conv.dilation for conv in self.local.char_cnn.convs]
            audit["char_embedding"] = self.local.char_cnn.output_dim
        if "word" in self.config.features:
            audit["external_projection"] = self.local.word_projection.out_dim
        audit["local_dim"] = self.local.output_dim
        audit["lstm_layers"] = len(self.encoder.forward_layers)
        audit["lstm_hidden_per_direction"] = self.encoder.hidden
        audit["global_dim"] = self.encoder.output_dim
        if self.tagger is not None:
            if self.tagger.upos is not None:
                audit["upos_hidden"] = self.tagger.upos.hidden_layer.out_dim
            if self.tagger.xpos is not None:
                audit["xpos_hidden"] = self.tagger.xpos.hidden_layer.out_dim
            if self.tagger.feats:
                audit["feats_hidden"] = sorted({c.hidden_layer.out_dim for c in self.tagger.feats.values()})
        if self.lemmatiser is not None:
            audit["lemma_char_embedding"] = self.lemmatiser.char_embedding.dim
            audit["lemma_context"] = self.lemmatiser.context.out_dim
            audit["lemma_filters"] = [conv.out_channels for conv in self.lemmatiser.convs]
            audit["lemma_dilations"] = [conv.dilation for conv in self.lemmatiser.convs]
            audit["lemma_output_kernel"] = self.lemmatiser.output.weight.shape[0]
        if self.parser is not None:
            audit["arc_head"] = self.parser.arcs.head.out_dim
            audit["arc_dependent"] = self.parser.arcs.dependent.out_dim
            if self.parser.labels is not None:
                audit["label_head"] = self.parser.labels.head.out_dim
                audit["label_dependent"] = self.parser.labels.dependent.out_dim
                audit["label_classifier_input"] = self.parser.labels.classifier.in_dim
        return audit


def total_loss(losses: Dict[str, Node], weights: Dict[str, float], targets: Optional[Sequence[str]] = None) -> Node:
    """Weighted sum over the enabled targets; a missing loss is an error."""
    targets = list(losses) if targets is None else list(targets)
    total: Optional[Node] = None
    for t in targets:
        if t not in losses:
            raise KeyError(f"enabled target {t!r} has no loss")
        term = ops.mul(losses[t], float(weights.get(t, 0.0)))
        total = term if total is None else ops.add(total, term)
    if total is None:
        return Node(np.asarray(0.0))
    return total
