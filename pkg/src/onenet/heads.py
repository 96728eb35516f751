"""Output layers: domain and intent classifiers and the CRF slot tagger.

The classifiers sum-pool the encoder states and apply a single affine layer;
the loss is the negative log-softmax of the gold class.  The tagger scores a
labeling as a linear-chain CRF over per-token emissions plus a transition
matrix with an extra START row.
"""

from __future__ import annotations

import numpy as np

from . import crf as crf_math
from .data import validate_bio
from .graph import ContractError, Graph, Node
from .layers import dense


class TagSet:
    """BIO labels ``O, B-e1, I-e1, B-e2, I-e2, ...``; START is index ``len(self)``."""

    def __init__(self, entity_types):
        self.entity_types = list(entity_types)
        self.labels = ["O"]
        for e in self.entity_types:
            self.labels += [f"B-{e}", f"I-{e}"]
        self.index = {label: k for k, label in enumerate(self.labels)}

    def __len__(self):
        return len(self.labels)

    @property
    def start(self) -> int:
        return len(self.labels)

    def encode(self, labels) -> list[int]:
        try:
            return [self.index[label] for label in labels]
        except KeyError as err:
            raise ContractError(f"label {err.args[0]!r} not in tag set") from None

    def decode(self, ids) -> list[str]:
        return [self.labels[int(k)] for k in ids]


def _pool_and_project(graph: Graph, h: Node, prefix: str) -> Node:
    if h.value.shape[0] < 1:
        raise ContractError("cannot classify an empty sequence")
    return dense(graph, prefix, graph.sum(h, axis=0))


def domain_logits(graph: Graph, h: Node) -> Node:
    return _pool_and_project(graph, h, "domain")


def intent_logits(graph: Graph, h: Node) -> Node:
    return _pool_and_project(graph, h, "intent")


def classification_loss(graph: Graph, logits: Node, gold: int) -> Node:
    """``-log softmax(logits)[gold]`` as a scalar node."""
    num = logits.value.shape[-1]
    if not 0 <= gold < num:
        raise ContractError(f"gold class {gold} out of range [0, {num})")
    return graph.add(graph.logsumexp(logits), graph.negate(graph.pick(logits, gold)))


domain_loss = classification_loss
intent_loss = classification_loss


def slot_emissions(graph: Graph, h: Node) -> Node:
    return dense(graph, "slot.emit", h)


def crf_loss(graph: Graph, emissions: Node, transitions: Node, gold, mode="additive", tagset=None) -> Node:
    """``log Z - score(gold)``; ``gold`` holds label indices."""
    gold = [int(y) for y in gold]
    if tagset is not None:
        problem = validate_bio(tagset.decode(gold))
        if problem:
            raise ContractError(f"invalid BIO gold labeling: {problem}")
    log_z = graph.crf_log_partition(emissions, transitions, mode)
    score = graph.crf_score(emissions, transitions, gold, mode)
    return graph.add(log_z, graph.negate(score))


# Array-level versions for decoding and tests.

def crf_sequence_score(emissions, transitions, labels, mode="additive") -> float:
    return crf_math.sequence_score(emissions, transitions, labels, mode)


def crf_log_partition(emissions, transitions, mode="additive") -> float:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise ContractError("emissions must be an (n, L) array with n >= 1")
    return crf_math.log_partition(emissions, transitions, mode)


def viterbi_decode(emissions, transitions, mode="additive") -> list[int]:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise ContractError("emissions must be an (n, L) array with n >= 1")
    return crf_math.viterbi(emissions, transitions, mode)
