"""Joint loss, per-utterance Adam updates and the four-stage curriculum."""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Graph
from .metrics import per_domain_breakdown

log = logging.getLogger(__name__)

EMBEDDING_TABLES = ("word.emb", "char.emb")
HEAD_PARTITIONS = {"domain": "domain-head", "intent": "intent-head", "slot": "slot-head"}


class TrainingError(RuntimeError):
    pass


class CurriculumStage(enum.Enum):
    DOMAIN_ONLY = ("domain",)
    INTENT_ONLY = ("intent",)
    DOMAIN_PLUS_INTENT = ("domain", "intent")
    ALL_THREE = ("domain", "intent", "slot")

    @property
    def tasks(self) -> tuple:
        return self.value


STAGES = tuple(CurriculumStage)


@dataclass
class Hyperparams:
    learning_rate: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dropout_keep: float = 0.4
    stage_epochs: tuple = (3, 3, 3, 20)
    rng_seed: int = 0
    patience: int = 5
    clip_norm: float | None = None

    def __post_init__(self):
        self.stage_epochs = tuple(int(e) for e in self.stage_epochs)
        if len(self.stage_epochs) != 4 or any(e < 0 for e in self.stage_epochs):
            raise ValueError("stage_epochs must be four non-negative integers")
        if not any(self.stage_epochs):
            raise ValueError("at least one curriculum stage needs a positive epoch budget")
        if not 0 < self.dropout_keep <= 1:
            raise ValueError("dropout_keep must be in (0, 1]")
        if min(self.learning_rate, self.beta1, self.beta2, self.epsilon) <= 0:
            raise ValueError("Adam constants must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_epochs"] = list(self.stage_epochs)
        return d


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_store(cls, store) -> "AdamState":
        return cls(np.zeros_like(store.flat), np.zeros_like(store.flat))


def active_parameter_names(store, tasks) -> list[str]:
    partitions = {"shared"} | {HEAD_PARTITIONS[t] for t in tasks}
    return [n for n in store.specs if store.partition_of(n) in partitions]


def adam_step(store, state: AdamState, hyper: Hyperparams, names=None, rows=None) -> None:
    """One bias-corrected Adam update of ``names`` (default: all tensors) in place.

    ``rows`` maps an embedding table name to the row indices touched in this
    step; only those rows are updated (sparse lookup-table updates).
    """
    names = list(store.specs) if names is None else names
    rows = rows or {}
    for name in names:
        g = store.grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name!r}")
    state.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    # m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into the step size
    corr2 = np.sqrt(1.0 - b2**state.t)
    step = hyper.learning_rate * corr2 / (1.0 - b1**state.t)
    eps = hyper.epsilon * corr2
    for lo, hi, name in _dense_ranges(store, names, rows):
        p, g = store.flat[lo:hi], store.flat_grad[lo:hi]
        m, v = state.m[lo:hi], state.v[lo:hi]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step * m / (np.sqrt(v) + eps)
    for name, idx in rows.items():
        if name not in names:
            continue
        sl = store.slice_of(name)
        shape = store.specs[name].shape
        p = store.flat[sl].reshape(shape)
        g = store.flat_grad[sl].reshape(shape)[idx]
        m = state.m[sl].reshape(shape)
        v = state.v[sl].reshape(shape)
        m[idx] = b1 * m[idx] + (1.0 - b1) * g
        v[idx] = b2 * v[idx] + (1.0 - b2) * (g * g)
        p[idx] -= step * m[idx] / (np.sqrt(v[idx]) + eps)


def _dense_ranges(store, names, rows):
    """Merge contiguous dense tensors into ``(lo, hi, first_name)`` flat ranges."""
    ranges = []
    for name in names:
        if name in rows:
            continue
        sl = store.slice_of(name)
        if ranges and ranges[-1][1] == sl.start:
            ranges[-1][1] = sl.stop
        else:
            ranges.append([sl.start, sl.stop, name])
    return ranges


def clip_gradients(store, names, max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(store.grads[n] ** 2)) for n in names))
    if total > max_norm:
        scale = max_norm / total
        for n in names:
            store.grads[n] *= scale
    return total


def joint_loss(model, example, stage=CurriculumStage.ALL_THREE, graph: Graph | None = None):
    """Sum of the stage's active loss terms over one shared encoder pass.

    Returns ``(graph, loss_node, terms)``.
    """
    if graph is None:
        graph = Graph(model.store, train=False)
    tasks = stage.tasks if isinstance(stage, CurriculumStage) else tuple(stage)
    terms = model.loss_terms(graph, example, tasks)
    if not terms:
        raise TrainingError(f"stage {stage} has no loss terms for a model with tasks {model.tasks}")
    nodes = list(terms.values())
    loss = nodes[0]
    for node in nodes[1:]:
        loss = graph.add(loss, node)
    return graph, loss, terms


def embedding_rows(graph: Graph) -> dict:
    rows: dict[str, list] = {}
    for node in graph.nodes:
        if node.op == "lookup" and node.inputs[0].name in EMBEDDING_TABLES:
            rows.setdefault(node.inputs[0].name, []).append(node.attrs["indices"].ravel())
    return {k: np.unique(np.concatenate(v)) for k, v in rows.items()}


def train_step(model, example, stage, state: AdamState, hyper: Hyperparams, seed: int) -> float:
    graph = Graph(model.store, train=True, seed=seed)
    graph, loss, _ = joint_loss(model, example, stage, graph)
    value = float(loss.value)
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss {value}")
    graph.backward(loss)
    names = active_parameter_names(model.store, stage.tasks)
    if hyper.clip_norm:
        clip_gradients(model.store, names, hyper.clip_norm)
    adam_step(model.store, state, hyper, names, embedding_rows(graph))
    return value


def predict_all(model, examples):
    return [model.predict(ex.tokens) for ex in examples]


def selection_key(report, tasks) -> tuple:
    """Tuning-set ranking: slot F1, then intent accuracy, then domain accuracy."""
    key = []
    for task, metric in (("slot", "slot_f1"), ("intent", "intent_acc"), ("domain", "domain_acc")):
        if task in tasks:
            key.append(getattr(report, metric))
    return tuple(key)


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    best_epoch: int | None = None
    best_stage: str | None = None
    best_key: tuple = ()

    @property
    def stages_run(self) -> list[str]:
        seen = []
        for entry in self.log:
            if entry["stage"] not in seen:
                seen.append(entry["stage"])
        return seen


def train_curriculum(model, train, tune, hyper: Hyperparams, on_epoch=None) -> TrainResult:
    """Train ``model`` in place through the curriculum and keep the best final-stage epoch.

    Stages whose tasks do not overlap with the model's heads are skipped.  The
    parameters of the best epoch of the last stage that runs (by tuning slot
    F1, ties broken by intent accuracy) are restored at the end.
    """
    if not train:
        raise TrainingError("training corpus is empty")
    model.config.dropout_keep = hyper.dropout_keep
    rng = np.random.default_rng(hyper.rng_seed)
    state = AdamState.for_store(model.store)
    plan = [
        (stage, epochs)
        for stage, epochs in zip(STAGES, hyper.stage_epochs)
        if epochs > 0 and any(t in model.tasks for t in stage.tasks)
    ]
    if not plan:
        raise TrainingError("no curriculum stage applies to this model")
    result = TrainResult()
    best_params = None
    for k, (stage, epochs) in enumerate(plan):
        final = k == len(plan) - 1
        stale = 0
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(train))
            seeds = rng.integers(0, 2**63 - 1, size=len(train))
            total = 0.0
            for j, idx in enumerate(order):
                try:
                    total += train_step(model, train[idx], stage, state, hyper, int(seeds[j]))
                except TrainingError as err:
                    raise TrainingError(f"stage {stage.name} epoch {epoch}: {err}") from None
            report = per_domain_breakdown(tune, predict_all(model, tune)) if tune else None
            entry = {"stage": stage.name, "epoch": epoch, "train_loss": total / len(train)}
            if report is not None:
                entry.update(report.row())
            result.log.append(entry)
            log.info("%s epoch %d loss %.4f %s", stage.name, epoch, entry["train_loss"],
                     {m: round(v, 2) for m, v in entry.items() if m.endswith(("acc", "f1")) and v is not None})
            if on_epoch is not None:
                on_epoch(entry)
            if not final:
                continue
            key = selection_key(report, model.tasks) if report is not None else (epoch,)
            if best_params is None or key > result.best_key:
                best_params = model.store.flat.copy()
                result.best_key, result.best_epoch, result.best_stage = key, epoch, stage.name
                stale = 0
            else:
                stale += 1
                if hyper.patience and stale >= hyper.patience:
                    break
    model.store.flat[...] = best_params
    return result
