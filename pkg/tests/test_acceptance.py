"""End-to-end acceptance criteria, one test per criterion.

Each test prints a ``criterion N PASS/FAIL`` line; the lines are repeated in
the terminal summary.  Criteria 5 to 7 train every experiment arm on five
seeds (about an hour and a half on one core).  Finished seeds are cached in
``.experiment_cache`` (override with ``ONENET_EXPERIMENT_CACHE``) keyed by a
digest of the result-affecting modules, so reruns with unchanged code are fast.
"""

import itertools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import Criterion
from onenet import cli
from onenet.checkpoint import save_bundle
from onenet.data import Example
from onenet.evaluator import Variant, VariantModels, make_model, train_model
from onenet.experiments import (
    ExperimentPlan,
    char_direction,
    curriculum_direction,
    joint_vs_pipeline,
    results_table,
    run_plan,
)
from onenet.graph import Graph
from onenet.heads import crf_log_partition, viterbi_decode
from onenet.metrics import extract_chunks, per_domain_breakdown, slot_f1
from onenet.model import ModelConfig, Prediction
from onenet.synthetic import default_spec, generate_synthetic
from onenet.trainer import CurriculumStage, Hyperparams, joint_loss, predict_all

CACHE = Path(os.environ.get("ONENET_EXPERIMENT_CACHE", Path(__file__).resolve().parent.parent / ".experiment_cache"))


def _three_domain_spec(per_domain):
    spec = default_spec()
    spec["domains"] = {k: spec["domains"][k] for k in ("alarm", "calendar", "communication")}
    spec["counts"] = {"train": per_domain, "tune": 0, "test": 0}
    return spec


# ---------------------------------------------------------------- 1


def test_criterion_1_gradient_correctness(capsys):
    with Criterion(1, "gradient check of the miniature network") as c:
        start = time.perf_counter()
        rc = cli.main(["-q", "gradcheck"])
        elapsed = time.perf_counter() - start
        out = capsys.readouterr().out
        errors = {line.split()[0]: float(line.split("max_rel_err=")[1].split()[0])
                  for line in out.splitlines() if "max_rel_err=" in line and "coords=" in line}
        worst = max(errors.values())
        c.detail = f"{len(errors)} tensors, max rel err {worst:.2e}, {elapsed:.1f}s"
        assert rc == 0
        assert len(errors) == 25 and worst < 1e-4
        assert elapsed < 60


# ---------------------------------------------------------------- 2


def _brute(E, T):
    n, k = E.shape
    scores = {}
    for y in itertools.product(range(k), repeat=n):
        s, prev = 0.0, k
        for i, label in enumerate(y):
            s += T[prev, label] + E[i, label]
            prev = label
        scores[y] = s
    m = max(scores.values())
    log_z = m + math.log(sum(math.exp(s - m) for s in scores.values()))
    best = max(scores, key=lambda y: (scores[y], [-v for v in y]))
    return scores, log_z, list(best)


def test_criterion_2_crf_exactness():
    with Criterion(2, "CRF partition and Viterbi against enumeration") as c:
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        worst_z = worst_norm = 0.0
        argmax_ok = 0
        for _ in range(200):
            n, k = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            E = rng.normal(scale=2.0, size=(n, k))
            T = rng.normal(scale=2.0, size=(k + 1, k))
            scores, log_z, best = _brute(E, T)
            z = crf_log_partition(E, T)
            worst_z = max(worst_z, abs(z - log_z))
            worst_norm = max(worst_norm, abs(sum(math.exp(s - z) for s in scores.values()) - 1.0))
            argmax_ok += viterbi_decode(E, T) == best
        elapsed = time.perf_counter() - start
        c.detail = (f"max |log Z err| {worst_z:.1e}, max |sum p - 1| {worst_norm:.1e}, "
                    f"argmax {argmax_ok}/200, {elapsed:.1f}s")
        assert worst_z <= 1e-9 and worst_norm <= 1e-9 and argmax_ok == 200
        assert elapsed < 30


# ---------------------------------------------------------------- 3


def test_criterion_3_loss_decomposition():
    with Criterion(3, "joint loss equals the sum of separately built terms") as c:
        spec = default_spec()
        spec["counts"] = {"train": 10, "tune": 0, "test": 0}
        splits, schema = generate_synthetic(spec)
        examples = splits["train"]
        assert len(examples) == 50
        model = make_model(examples, ModelConfig(), schema.domains, schema.intents, schema.entity_types, seed=11)
        worst = 0.0
        for ex in examples:
            _, loss, _ = joint_loss(model, ex, CurriculumStage.ALL_THREE)
            parts = 0.0
            for task in ("domain", "intent", "slot"):
                parts += float(model.loss_terms(Graph(model.store), ex, (task,))[task].value)
            worst = max(worst, abs(float(loss.value) - parts))
        c.detail = f"50 examples, max |difference| {worst:.1e}"
        assert worst <= 1e-12


# ---------------------------------------------------------------- 4


def test_criterion_4_overfit_smoke(tmp_path, capsys):
    with Criterion(4, "overfit a 50-utterance three-domain corpus") as c:
        splits, schema = generate_synthetic(_three_domain_spec(17))
        train = splits["train"][:50]
        assert len(train) == 50 and len({ex.domain for ex in train}) == 3
        start = time.perf_counter()
        hyper = Hyperparams(stage_epochs=(0, 0, 0, 30), patience=0, dropout_keep=1.0)
        model, result = train_model(train, train, schema, ModelConfig(), hyper)
        elapsed = time.perf_counter() - start
        rep = per_domain_breakdown(train, predict_all(model, train))
        c.detail = (f"train domain {rep.domain_acc:.1f} intent {rep.intent_acc:.1f} slot F1 {rep.slot_f1:.2f} "
                    f"(best epoch {result.best_epoch}), {elapsed:.0f}s")
        assert rep.domain_acc == 100.0 and rep.intent_acc == 100.0 and rep.slot_f1 >= 99.0
        assert len(result.log) <= 30 and elapsed < 300

        # the same network through the command line reproduces the gold triples
        save_bundle(VariantModels(joint=model), tmp_path / "ckpt", Variant.JOINT)
        (tmp_path / "in.jsonl").write_text("".join(json.dumps(list(ex.tokens)) + "\n" for ex in train))
        assert cli.main(["-q", "predict", "--checkpoint", str(tmp_path / "ckpt"),
                         "--input", str(tmp_path / "in.jsonl")]) == 0
        records = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert [(r["domain"], r["intent"], tuple(r["slots"])) for r in records] == \
               [(ex.domain, ex.intent, ex.slots) for ex in train]


# ---------------------------------------------------------------- 5 to 7


@pytest.fixture(scope="module")
def experiment_results():
    plan = ExperimentPlan()
    results = run_plan(plan, CACHE)
    print(results_table(results))
    return results


def test_criterion_5_joint_vs_pipeline(experiment_results):
    with Criterion(5, "joint beats pipeline over five seeds") as c:
        verdict = joint_vs_pipeline(experiment_results)
        c.detail = verdict.detail
        assert len(experiment_results) == 5
        assert verdict.passed


def test_criterion_6_curriculum_direction(experiment_results):
    with Criterion(6, "curriculum does not lower intent accuracy") as c:
        verdict = curriculum_direction(experiment_results)
        c.detail = verdict.detail
        assert verdict.passed


def test_criterion_7_char_path_direction(experiment_results):
    with Criterion(7, "removing the character path does not raise slot F1") as c:
        splits, _ = generate_synthetic(default_spec())
        train_words = {t for ex in splits["train"] for t in ex.tokens}
        unseen = {t for ex in splits["test"] for t, s in zip(ex.tokens, ex.slots) if s != "O" and t not in train_words}
        # unseen values reuse suffixes that occur in training words
        regular = {t for t in unseen if any(w != t and w.endswith(t[-3:]) for w in train_words)}
        verdict = char_direction(experiment_results)
        c.detail = f"{verdict.detail}; {len(regular)}/{len(unseen)} unseen slot words share a training suffix"
        assert len(regular) > 0.5 * len(unseen)
        assert verdict.passed


# ---------------------------------------------------------------- 8


def test_criterion_8_metric_correctness():
    with Criterion(8, "chunk metrics and AVG row") as c:
        assert extract_chunks(["B-t", "I-t", "O", "B-s"]) == {("t", 0, 2), ("s", 3, 4)}
        assert extract_chunks(["O", "O", "O"]) == set()
        assert extract_chunks(["B-t", "B-t"]) == {("t", 0, 1), ("t", 1, 2)}
        assert slot_f1([["B-t", "I-t", "O"]], [["B-t", "I-t", "O"]]) == (100.0, 100.0, 100.0)
        assert slot_f1([["B-t", "O"]], [["O", "O"]]) == (0.0, 0.0, 0.0)
        assert slot_f1([["B-t", "I-t"]], [["B-t", "O"]]) == (0.0, 0.0, 0.0)
        rng = np.random.default_rng(8)
        labels = ["O", "B-a", "I-a", "B-b", "I-b"]
        gold, preds = [], []
        for k in range(60):
            n = int(rng.integers(1, 6))
            slots = [labels[j] for j in rng.integers(0, 5, size=n)]
            gold.append(Example(["w"] * n, f"d{k % 4}", f"i{k % 3}", [s if s[0] != "I" else "O" for s in slots]))
            preds.append(Prediction(f"d{int(rng.integers(4))}", f"i{int(rng.integers(3))}",
                                    [labels[j] for j in rng.integers(0, 5, size=n)]))
        rep = per_domain_breakdown(gold, preds)
        worst = 0.0
        for m in ("domain_acc", "intent_acc", "slot_p", "slot_r", "slot_f1"):
            mean = float(np.mean([getattr(r, m) for r in rep.per_domain.values()]))
            worst = max(worst, abs(getattr(rep.average, m) - mean))
        c.detail = f"fixtures exact, max |AVG - mean| {worst:.1e}"
        assert worst <= 1e-12


# ---------------------------------------------------------------- 9


def test_criterion_9_reproducibility(tmp_path):
    with Criterion(9, "identical config and seed give identical artifacts") as c:
        spec = default_spec()
        spec["counts"] = {"train": 8, "tune": 2, "test": 4}
        corpus = tmp_path / "corpus"
        (tmp_path / "spec.json").write_text(json.dumps(spec))
        assert cli.main(["-q", "generate", "--spec", str(tmp_path / "spec.json"), "--out-dir", str(corpus)]) == 0
        (tmp_path / "run.cfg").write_text(
            f"train = {corpus / 'train.jsonl'}\ntune = {corpus / 'tune.jsonl'}\ntest = {corpus / 'test.jsonl'}\n"
            "seed = 5\nchar_dim = 5\nchar_hidden = 5\nword_dim = 10\nword_hidden = 8\nstage_epochs = 1,1,1,2\n")
        compared = 0
        for variant in ("joint", "pipeline"):
            runs = []
            for k in range(2):
                out = tmp_path / f"{variant}{k}"
                assert cli.main(["-q", "train", "--config", str(tmp_path / "run.cfg"), "--variant", variant,
                                 "--out-dir", str(out)]) == 0
                runs.append(out)
            files = sorted(p.relative_to(runs[0]) for p in (runs[0] / "checkpoint").iterdir())
            for rel in files + [Path("report.json")]:
                assert (runs[0] / rel).read_bytes() == (runs[1] / rel).read_bytes(), rel
                compared += 1
        c.detail = f"{compared} files byte-identical across repeated runs"
