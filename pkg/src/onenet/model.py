"""The OneNet network: shared embedding + BiLSTM encoder with up to three heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .embedding import CharVocab, WordVocab, apply_pretrained, embed_utterance
from .encoder import encode
from .graph import ContractError, Graph
from .heads import (
    TagSet,
    classification_loss,
    crf_loss,
    domain_logits,
    intent_logits,
    slot_emissions,
    viterbi_decode,
)
from .layers import declare_dense, declare_lstm
from .params import ParameterStore

TASKS = ("domain", "intent", "slot")


@dataclass
class ModelConfig:
    char_dim: int = 25
    char_hidden: int = 25
    word_dim: int = 100
    word_hidden: int = 100
    use_chars: bool = True
    tasks: tuple = TASKS
    crf_score: str = "additive"
    dropout_keep: float = 0.4
    lowercase_fallback: bool = True
    unk_replace_prob: float = 0.1

    def __post_init__(self):
        self.tasks = tuple(t for t in TASKS if t in self.tasks)
        if not self.tasks:
            raise ValueError("a model needs at least one task")
        if not 0 < self.dropout_keep <= 1:
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.crf_score not in ("additive", "multiplicative"):
            raise ValueError(f"crf_score must be additive or multiplicative, got {self.crf_score!r}")

    @property
    def word_input_dim(self) -> int:
        return self.word_dim + (2 * self.char_hidden if self.use_chars else 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tasks"] = list(self.tasks)
        return d


@dataclass
class Outputs:
    h: object
    domain: object = None
    intent: object = None
    emissions: object = None


@dataclass
class Prediction:
    domain: str | None
    intent: str | None
    slots: list = field(default_factory=list)


class OneNet:
    """Parameters, vocabularies and label inventories of one network.

    ``domains``/``intents``/``entity_types`` are only needed for the heads the
    config enables.
    """

    def __init__(self, config: ModelConfig, char_vocab: CharVocab, word_vocab: WordVocab,
                 domains=(), intents=(), entity_types=(), seed=0, pretrained=None):
        self.config = config
        self.char_vocab = char_vocab
        self.word_vocab = word_vocab
        word_vocab.lowercase_fallback = config.lowercase_fallback
        word_vocab.unk_replace_prob = config.unk_replace_prob
        if pretrained:
            apply_pretrained(word_vocab, pretrained)
        self.domains = list(domains)
        self.intents = list(intents)
        self.tagset = TagSet(entity_types)
        self.domain_index = {d: k for k, d in enumerate(self.domains)}
        self.intent_index = {d: k for k, d in enumerate(self.intents)}
        if "domain" in config.tasks and not self.domains:
            raise ValueError("domain head requires a non-empty domain inventory")
        if "intent" in config.tasks and not self.intents:
            raise ValueError("intent head requires a non-empty intent inventory")

        store = ParameterStore()
        cfg = config
        if cfg.use_chars:
            store.declare("char.emb", (len(char_vocab), cfg.char_dim), "shared", "embedding")
            self.char_fwd = declare_lstm(store, "char.fwd", cfg.char_dim, cfg.char_hidden)
            self.char_bwd = declare_lstm(store, "char.bwd", cfg.char_dim, cfg.char_hidden)
        store.declare("word.emb", (len(word_vocab), cfg.word_dim), "shared", "embedding")
        self.word_fwd = declare_lstm(store, "word.fwd", cfg.word_input_dim, cfg.word_hidden)
        self.word_bwd = declare_lstm(store, "word.bwd", cfg.word_input_dim, cfg.word_hidden)
        h_dim = 2 * cfg.word_hidden
        if "domain" in cfg.tasks:
            declare_dense(store, "domain", h_dim, len(self.domains), "domain-head")
        if "intent" in cfg.tasks:
            declare_dense(store, "intent", h_dim, len(self.intents), "intent-head")
        if "slot" in cfg.tasks:
            declare_dense(store, "slot.emit", h_dim, len(self.tagset), "slot-head")
            store.declare("slot.T", (len(self.tagset) + 1, len(self.tagset)), "slot-head", "glorot")
        store.allocate(seed)
        self.store = store
        if pretrained:
            table = store.values["word.emb"]
            for word, vec in pretrained.items():
                if len(vec) != cfg.word_dim:
                    raise ValueError(f"pretrained vector for {word!r} has {len(vec)} dims, expected {cfg.word_dim}")
                table[word_vocab.stoi[word]] = vec

    @property
    def tasks(self):
        return self.config.tasks

    def run(self, graph: Graph, tokens) -> Outputs:
        """One shared encoder pass feeding every enabled head."""
        v = embed_utterance(graph, self, list(tokens))
        h = encode(graph, self, v)
        out = Outputs(h=h)
        if "domain" in self.tasks:
            out.domain = domain_logits(graph, h)
        if "intent" in self.tasks:
            out.intent = intent_logits(graph, h)
        if "slot" in self.tasks:
            out.emissions = slot_emissions(graph, h)
        return out

    def loss_terms(self, graph: Graph, example, active=TASKS, outputs: Outputs | None = None) -> dict:
        """Per-task loss nodes for ``example`` over ``active`` tasks this model has."""
        active = [t for t in self.tasks if t in active]
        if outputs is None:
            outputs = self.run(graph, example.tokens)
        terms = {}
        for task in active:
            if task == "domain":
                if example.domain not in self.domain_index:
                    raise ContractError(f"unknown or missing domain label {example.domain!r}")
                terms[task] = classification_loss(graph, outputs.domain, self.domain_index[example.domain])
            elif task == "intent":
                if example.intent not in self.intent_index:
                    raise ContractError(f"unknown or missing intent label {example.intent!r}")
                terms[task] = classification_loss(graph, outputs.intent, self.intent_index[example.intent])
            else:
                gold = self.tagset.encode(example.slots)
                terms[task] = crf_loss(graph, outputs.emissions, graph.param("slot.T"), gold,
                                       self.config.crf_score, self.tagset)
        return terms

    def predict(self, tokens) -> Prediction:
        graph = Graph(self.store, train=False)
        out = self.run(graph, tokens)
        pred = Prediction(domain=None, intent=None)
        if out.domain is not None:
            pred.domain = self.domains[int(np.argmax(out.domain.value))]
        if out.intent is not None:
            pred.intent = self.intents[int(np.argmax(out.intent.value))]
        if out.emissions is not None:
            ids = viterbi_decode(out.emissions.value, self.store["slot.T"], self.config.crf_score)
            pred.slots = self.tagset.decode(ids)
        return pred
