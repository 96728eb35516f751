"""Training and evaluation of the four system variants.

* ``joint``        one network, three heads, curriculum training.
* ``independent``  three single-task networks trained on all domains.
* ``pipeline``     the independent domain network routes each utterance to a
  per-domain intent+slot network chosen by the *predicted* domain.
* ``oracle``       the same per-domain networks, routed by the *gold* domain.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .data import build_vocab
from .metrics import EvalReport, per_domain_breakdown, repair_bio
from .model import ModelConfig, OneNet, Prediction
from .trainer import Hyperparams, train_curriculum

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class Variant(str, enum.Enum):
    INDEPENDENT = "independent"
    PIPELINE = "pipeline"
    ORACLE = "oracle"
    JOINT = "joint"


def parse_variant(name) -> Variant:
    if isinstance(name, Variant):
        return name
    aliases = {"oracledomain": "oracle", "oracle_domain": "oracle", "onenet": "joint"}
    key = str(name).lower().replace("-", "_")
    try:
        return Variant(aliases.get(key, key))
    except ValueError:
        raise ConfigurationError(f"unknown variant {name!r}; choose from {[v.value for v in Variant]}") from None


@dataclass
class VariantModels:
    joint: OneNet | None = None
    domain: OneNet | None = None
    intent: OneNet | None = None
    slot: OneNet | None = None
    per_domain: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)

    def all_models(self) -> dict:
        out = {}
        for key in ("joint", "domain", "intent", "slot"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        for d, m in self.per_domain.items():
            out[f"per_domain.{d}"] = m
        return out


def make_model(train, config: ModelConfig, domains=(), intents=(), entity_types=(), seed=0, pretrained=None):
    char_vocab, word_vocab = build_vocab(train, unk_replace_prob=config.unk_replace_prob)
    return OneNet(config, char_vocab, word_vocab, domains, intents, entity_types, seed=seed,
                  pretrained=pretrained)


def train_model(train, tune, schema, config: ModelConfig, hyper: Hyperparams, pretrained=None):
    model = make_model(train, config, schema.domains, schema.intents, schema.entity_types,
                       seed=hyper.rng_seed, pretrained=pretrained)
    result = train_curriculum(model, train, tune, hyper)
    return model, result


def flat_hyper(hyper: Hyperparams, epochs: int | None = None) -> Hyperparams:
    """Same hyperparameters with every epoch in the final stage (no curriculum)."""
    total = epochs if epochs is not None else hyper.stage_epochs[3]
    return replace(hyper, stage_epochs=(0, 0, 0, total))


def train_variant_models(variants, train, tune, schema, config: ModelConfig, hyper: Hyperparams,
                         baseline_hyper: Hyperparams | None = None, pretrained=None) -> VariantModels:
    """Train whatever networks ``variants`` need; shared pieces are trained once.

    Non-joint networks are trained with ``baseline_hyper`` (default: the final
    stage budget of ``hyper`` without curriculum).
    """
    variants = {parse_variant(v) for v in variants}
    baseline_hyper = baseline_hyper or flat_hyper(hyper)
    models = VariantModels()
    if Variant.JOINT in variants:
        models.joint, res = train_model(train, tune, schema, config, hyper, pretrained)
        models.logs["joint"] = res.log
    needs_domain = variants & {Variant.INDEPENDENT, Variant.PIPELINE}
    if needs_domain:
        models.domain, res = train_model(train, tune, schema, replace(config, tasks=("domain",)),
                                         baseline_hyper, pretrained)
        models.logs["domain"] = res.log
    if Variant.INDEPENDENT in variants:
        for task in ("intent", "slot"):
            m, res = train_model(train, tune, schema, replace(config, tasks=(task,)), baseline_hyper, pretrained)
            setattr(models, task, m)
            models.logs[task] = res.log
    if variants & {Variant.PIPELINE, Variant.ORACLE}:
        for domain in schema.domains:
            d_train = [ex for ex in train if ex.domain == domain]
            d_tune = [ex for ex in tune if ex.domain == domain]
            if not d_train:
                raise ConfigurationError(f"no training examples for domain {domain!r}")
            intents = schema.domain_intents.get(domain) or sorted({ex.intent for ex in d_train})
            entities = schema.domain_entities.get(domain)
            if entities is None:
                entities = sorted({s[2:] for ex in d_train for s in ex.slots if s != "O"})
            m = make_model(d_train, replace(config, tasks=("intent", "slot")), (), intents, entities,
                           seed=baseline_hyper.rng_seed, pretrained=pretrained)
            res = train_curriculum(m, d_train, d_tune, baseline_hyper)
            models.per_domain[domain] = m
            models.logs[f"per_domain.{domain}"] = res.log
    return models


def _route(models: VariantModels, domain: str, tokens) -> Prediction:
    model = models.per_domain.get(domain)
    if model is None:
        raise ConfigurationError(f"no per-domain model for domain {domain!r}")
    pred = model.predict(tokens)
    pred.domain = domain
    return pred


def predict_variant(variant, models: VariantModels, tokens, gold_domain=None) -> Prediction:
    variant = parse_variant(variant)
    if variant is Variant.JOINT:
        if models.joint is None:
            raise ConfigurationError("joint variant needs a joint model")
        pred = models.joint.predict(tokens)
    elif variant is Variant.INDEPENDENT:
        if None in (models.domain, models.intent, models.slot):
            raise ConfigurationError("independent variant needs domain, intent and slot models")
        pred = Prediction(
            domain=models.domain.predict(tokens).domain,
            intent=models.intent.predict(tokens).intent,
            slots=models.slot.predict(tokens).slots,
        )
    elif variant is Variant.PIPELINE:
        if models.domain is None:
            raise ConfigurationError("pipeline variant needs a domain model")
        pred = _route(models, models.domain.predict(tokens).domain, tokens)
    else:
        if gold_domain is None:
            raise ConfigurationError("oracle variant needs the gold domain")
        pred = _route(models, gold_domain, tokens)
    pred.slots = repair_bio(pred.slots)
    return pred


def predict_many(variant, models: VariantModels, examples, threads: int = 1) -> list[Prediction]:
    """Predictions for ``examples`` in order; ``threads > 1`` uses a worker pool.

    Inference only reads the parameters, so workers share the models.
    """
    variant = parse_variant(variant)

    def one(ex):
        return predict_variant(variant, models, ex.tokens, ex.domain)

    if threads <= 1:
        return [one(ex) for ex in examples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, examples))


def evaluate_variant(variant, models: VariantModels, test, threads: int = 1) -> EvalReport:
    """Overall and per-gold-domain report of ``variant`` on ``test``."""
    if not test:
        raise ConfigurationError("test corpus is empty")
    return per_domain_breakdown(test, predict_many(variant, models, test, threads))


def unknown_labels(variant, models: VariantModels, examples) -> list[str]:
    """Gold labels in ``examples`` that the variant's networks cannot output."""
    variant = parse_variant(variant)
    nets = list(models.all_models().values())
    domains = set()
    for key in ("joint", "domain"):
        if getattr(models, key) is not None:
            domains |= set(getattr(models, key).domains)
    if variant is Variant.ORACLE:
        domains = set(models.per_domain)
    intents = {i for m in nets for i in m.intents}
    entities = {e for m in nets for e in m.tagset.entity_types}
    problems = set()
    for ex in examples:
        if ex.domain not in domains:
            problems.add(f"domain:{ex.domain}")
        if ex.intent not in intents:
            problems.add(f"intent:{ex.intent}")
        for label in ex.slots:
            if label != "O" and label[2:] not in entities:
                problems.add(f"entity:{label[2:]}")
    return sorted(problems)
