"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import backward


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    max_error: dict = field(default_factory=dict)
    checked: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[str]:
        return [n for n, e in self.max_error.items() if not e < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = []
        for name, err in self.max_error.items():
            status = "ok" if err < self.tolerance else "FAIL"
            out.append(f"{name:<24} coords={self.checked[name]:<5d} max_rel_err={err:.3e} {status}")
        return out


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _loss_value(loss_builder, store):
    _, loss = loss_builder(store)
    value = loss.value[()]
    if not np.isfinite(value):
        raise FloatingPointError(f"loss is not finite ({float(value)})")
    return value


def gradient_check(loss_builder, store, step=1e-5, tolerance=1e-4, max_coords=None, seed=0,
                   numeric_dtype=np.longdouble):
    """Compare backprop gradients against central differences.

    ``loss_builder(store)`` must return ``(graph, loss_node)`` and be
    deterministic.  With ``max_coords`` only that many randomly sampled
    coordinates per tensor are checked.

    The analytic gradients come from a float64 backward pass.  The perturbed
    losses are evaluated on a copy of the parameters in ``numeric_dtype``
    (extended precision by default): at float64 a central difference of a
    loss near 10 carries round-off of a few 1e-11, which swamps partials
    below about 1e-7.  Pass ``numeric_dtype=np.float64`` for the plain check.
    """
    graph, loss = loss_builder(store)
    if not np.isfinite(float(loss.value)):
        raise FloatingPointError(f"loss is not finite ({float(loss.value)})")
    backward(graph, loss)
    analytic = {name: store.grads[name].copy() for name in store.specs}
    probe = store.copy(dtype=numeric_dtype)
    h = probe.flat.dtype.type(step)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance, step=step)
    for name in store.specs:
        values = probe.values[name].reshape(-1)
        coords = np.arange(values.size)
        if max_coords is not None and values.size > max_coords:
            coords = np.sort(rng.choice(values.size, size=max_coords, replace=False))
        worst = 0.0
        for k in coords:
            orig = values[k]
            values[k] = orig + h
            plus = _loss_value(loss_builder, probe)
            values[k] = orig - h
            minus = _loss_value(loss_builder, probe)
            values[k] = orig
            numeric = float((plus - minus) / (2 * h))
            worst = max(worst, relative_error(float(analytic[name].reshape(-1)[k]), numeric))
        report.max_error[name] = worst
        report.checked[name] = len(coords)
    return report


def miniature_problem(seed=0, char_dim=5, word_dim=10, hidden=8, num_domains=3, num_intents=4,
                      num_entity_types=3, num_tokens=3, crf_score="additive"):
    """A scaled-down network and one random annotated utterance for checking.

    Dropout is disabled and every head is enabled, so the joint loss touches
    every parameter tensor.
    """
    from .data import Example, build_vocab
    from .model import ModelConfig, OneNet

    rng = np.random.default_rng(seed)
    letters = list("abcdefghijklmnopqrstuvwxyz")
    tokens = ["".join(rng.choice(letters, size=int(rng.integers(2, 6)))) for _ in range(num_tokens)]
    domains = [f"domain{k}" for k in range(num_domains)]
    intents = [f"intent{k}" for k in range(num_intents)]
    entities = [f"type{k}" for k in range(num_entity_types)]
    slots, prev = [], None
    for _ in range(num_tokens):
        choice = int(rng.integers(0, 3))
        if choice == 0:
            label, prev = "O", None
        elif choice == 1 or prev is None:
            prev = entities[int(rng.integers(num_entity_types))]
            label = f"B-{prev}"
        else:
            label = f"I-{prev}"
        slots.append(label)
    example = Example(tokens, domains[int(rng.integers(num_domains))],
                      intents[int(rng.integers(num_intents))], slots)
    config = ModelConfig(char_dim=char_dim, char_hidden=hidden, word_dim=word_dim, word_hidden=hidden,
                         crf_score=crf_score, dropout_keep=1.0, unk_replace_prob=0.0)
    char_vocab, word_vocab = build_vocab([example], unk_replace_prob=0.0)
    model = OneNet(config, char_vocab, word_vocab, domains, intents, entities, seed=seed)
    return model, example


def check_model(model, example, step=1e-5, tolerance=1e-4, max_coords=None, seed=0) -> GradCheckReport:
    """Gradient check of the full joint loss of ``model`` on ``example``."""
    from .graph import Graph
    from .trainer import CurriculumStage, joint_loss

    def build(store):
        graph, loss, _ = joint_loss(model, example, CurriculumStage.ALL_THREE, Graph(store))
        return graph, loss

    return gradient_check(build, model.store, step=step, tolerance=tolerance, max_coords=max_coords, seed=seed)
