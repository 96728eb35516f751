"""Multi-seed directional experiments on the synthetic corpus.

One seed trains every arm the comparisons need:

* ``joint``          curriculum-trained joint network
* ``pipeline`` and ``oracle``   per-domain intent+slot networks behind the
  independent domain network (predicted or gold routing)
* ``no_curriculum``  joint network trained on the full loss from the start
* ``no_chars``       joint network without the character BiLSTM

Every network gets the same total number of passes over its own training
data.  Per-seed results are cached as JSON keyed by a hash of the package
source that affects results and the plan, so a rerun with unchanged code only reads them back.
"""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .evaluator import Variant, evaluate_variant, flat_hyper, train_variant_models
from .metrics import EvalReport
from .model import ModelConfig
from .synthetic import default_spec, generate_synthetic
from .trainer import Hyperparams

log = logging.getLogger(__name__)

ARMS = ("joint", "pipeline", "oracle", "no_curriculum", "no_chars")
METRICS = ("domain_acc", "intent_acc", "slot_f1")


@dataclass
class ExperimentPlan:
    seeds: tuple = (0, 1, 2, 3, 4)
    stage_epochs: tuple = (1, 1, 1, 2)
    patience: int = 0
    spec: dict = field(default_factory=default_spec)
    arms: tuple = ARMS

    @property
    def total_epochs(self) -> int:
        return sum(self.stage_epochs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"], d["stage_epochs"], d["arms"] = list(self.seeds), list(self.stage_epochs), list(self.arms)
        return d


# modules whose code can change a trained network or its scores
RESULT_MODULES = ("crf", "data", "embedding", "encoder", "evaluator", "experiments", "graph", "heads", "layers",
                  "metrics", "model", "params", "synthetic", "trainer")


def source_digest(modules=RESULT_MODULES) -> str:
    h = hashlib.sha256()
    root = Path(__file__).parent
    for name in sorted(modules):
        h.update(name.encode())
        h.update((root / f"{name}.py").read_bytes())
    return h.hexdigest()


def _cache_key(plan: ExperimentPlan, seed: int, arm: str) -> str:
    d = plan.to_dict()
    d.pop("seeds")
    d.pop("arms")
    payload = json.dumps({"plan": d, "seed": seed, "arm": arm, "source": source_digest()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _train_and_report(arm, splits, schema, plan, seed):
    hyper = Hyperparams(stage_epochs=plan.stage_epochs, rng_seed=seed, patience=plan.patience)
    flat = flat_hyper(hyper, plan.total_epochs)
    config = ModelConfig()
    train, tune, test = splits["train"], splits["tune"], splits["test"]
    if arm == "joint":
        models = train_variant_models([Variant.JOINT], train, tune, schema, config, hyper)
        return {"joint": evaluate_variant(Variant.JOINT, models, test)}
    if arm in ("pipeline", "oracle"):
        models = train_variant_models([Variant.PIPELINE, Variant.ORACLE], train, tune, schema, config, hyper,
                                      baseline_hyper=flat)
        return {v.value: evaluate_variant(v, models, test) for v in (Variant.PIPELINE, Variant.ORACLE)}
    if arm == "no_curriculum":
        models = train_variant_models([Variant.JOINT], train, tune, schema, config, flat)
        return {"no_curriculum": evaluate_variant(Variant.JOINT, models, test)}
    if arm == "no_chars":
        models = train_variant_models([Variant.JOINT], train, tune, schema, replace(config, use_chars=False), hyper)
        return {"no_chars": evaluate_variant(Variant.JOINT, models, test)}
    raise ValueError(f"unknown arm {arm!r}")


def run_seed(plan: ExperimentPlan, seed: int, cache_dir=None) -> dict:
    """Reports for every arm of ``plan`` on the corpus generated with ``seed``."""
    cache = Path(cache_dir) if cache_dir else None
    if cache:
        cache.mkdir(parents=True, exist_ok=True)
    results: dict[str, EvalReport] = {}
    splits = schema = None
    for arm in plan.arms:
        if arm in results:
            continue
        path = cache / f"seed{seed}-{arm}-{_cache_key(plan, seed, arm)}.json" if cache else None
        if path is not None and path.exists():
            stored = json.loads(path.read_text())
            results.update({k: EvalReport.from_dict(v) for k, v in stored["reports"].items()})
            continue
        if splits is None:
            spec = dict(plan.spec, seed=seed)
            splits, schema = generate_synthetic(spec)
        start = time.time()
        reports = _train_and_report(arm, splits, schema, plan, seed)
        elapsed = time.time() - start
        log.info("seed %d arm %s done in %.0fs", seed, arm, elapsed)
        results.update(reports)
        if path is not None:
            payload = {"seed": seed, "arm": arm, "seconds": elapsed,
                       "reports": {k: r.to_dict() for k, r in reports.items()}}
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(payload, indent=1, sort_keys=True))
            tmp.replace(path)
    return results


def run_plan(plan: ExperimentPlan, cache_dir=None) -> dict:
    """``{seed: {arm: EvalReport}}`` over all seeds of ``plan``."""
    return {seed: run_seed(plan, seed, cache_dir) for seed in plan.seeds}


def medians(results: dict) -> dict:
    """``{arm: {metric: median over seeds}}``."""
    arms = sorted({a for per_seed in results.values() for a in per_seed})
    return {
        arm: {m: statistics.median(getattr(r[arm], m) for r in results.values()) for m in METRICS}
        for arm in arms
    }


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str


def joint_vs_pipeline(results: dict) -> Verdict:
    med = medians(results)
    j, p = med["joint"], med["pipeline"]
    oracle_domain = [r["oracle"].domain_acc for r in results.values()]
    ok = (
        all(j[m] >= p[m] for m in METRICS)
        and j["slot_f1"] > p["slot_f1"]
        and j["intent_acc"] > p["intent_acc"]
        and all(d == 100.0 for d in oracle_domain)
    )
    detail = (
        "joint " + _fmt(j) + " | pipeline " + _fmt(p)
        + f" | oracle domain acc {sorted(set(oracle_domain))}"
    )
    return Verdict("joint vs pipeline", ok, detail)


def curriculum_direction(results: dict) -> Verdict:
    med = medians(results)
    a, b = med["joint"]["intent_acc"], med["no_curriculum"]["intent_acc"]
    return Verdict("curriculum", a >= b, f"median intent acc with {a:.2f} vs without {b:.2f}")


def char_direction(results: dict) -> Verdict:
    med = medians(results)
    a, b = med["no_chars"]["slot_f1"], med["joint"]["slot_f1"]
    return Verdict("char path", a <= b, f"median slot F1 without chars {a:.2f} vs with {b:.2f}")


def _fmt(row) -> str:
    return "/".join(f"{row[m]:.2f}" for m in METRICS)


def results_table(results: dict) -> str:
    """Per-seed and median rows for every arm, aligned."""
    lines = [f"{'arm':<14} {'seed':>6} {'domain':>8} {'intent':>8} {'slot F1':>8}"]
    arms = [a for a in ("joint", "pipeline", "oracle", "no_curriculum", "no_chars")
            if any(a in r for r in results.values())]
    for arm in arms:
        for seed, per_seed in results.items():
            if arm in per_seed:
                r = per_seed[arm]
                lines.append(f"{arm:<14} {seed:>6} {r.domain_acc:8.2f} {r.intent_acc:8.2f} {r.slot_f1:8.2f}")
    med = medians({s: r for s, r in results.items() if all(a in r for a in arms)})
    for arm in arms:
        row = med[arm]
        lines.append(f"{arm:<14} {'median':>6} {row['domain_acc']:8.2f} {row['intent_acc']:8.2f} {row['slot_f1']:8.2f}")
    return "\n".join(lines)
