"""``onenet`` command-line entry point.

Subcommands: generate, train, eval, predict, compare, gradcheck, experiments.
Data goes to standard output, diagnostics to standard error; the exit status
is 0 only when the command finished without errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, atomic_write, file_digest, load_bundle, save_bundle
from .config import FIELDS, ConfigError, convert, dump_config, load_config
from .data import CorpusError, parse_corpus, read_examples
from .embedding import load_pretrained
from .evaluator import (
    ConfigurationError,
    Variant,
    evaluate_variant,
    flat_hyper,
    parse_variant,
    predict_variant,
    train_variant_models,
    unknown_labels,
)
from .metrics import extract_chunks, format_report
from .synthetic import SpecError, default_spec, load_spec, write_synthetic
from .trainer import TrainingError

log = logging.getLogger("onenet")

EXIT_OK, EXIT_ERROR = 0, 1
KNOWN_ERRORS = (CheckpointError, ConfigError, ConfigurationError, CorpusError, SpecError, TrainingError,
                OSError, ValueError)
TABLE_VARIANTS = ("independent", "pipeline", "oracle", "joint")


class CommandError(Exception):
    pass


def _write_json(path, payload) -> None:
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    spec = load_spec(args.spec) if args.spec else default_spec()
    if args.seed is not None:
        spec = dict(spec, seed=args.seed)
    splits = write_synthetic(spec, args.out_dir)
    out = Path(args.out_dir)
    domains = sorted({ex.domain for exs in splits.values() for ex in exs})
    header = f"{'domain':<16}" + "".join(f"{s:>8}" for s in splits)
    print(header)
    for d in domains:
        print(f"{d:<16}" + "".join(f"{sum(ex.domain == d for ex in exs):>8d}" for exs in splits.values()))
    print(f"{'total':<16}" + "".join(f"{len(exs):>8d}" for exs in splits.values()))
    for name in [f"{s}.jsonl" for s in splits] + ["schema.json"]:
        print(f"sha256 {file_digest(out / name)}  {out / name}")
    return EXIT_OK


# ---------------------------------------------------------------- corpus helpers


def _check_split(path, schema):
    examples = read_examples(path)
    for i, ex in enumerate(examples, 1):
        problem = schema.check(ex)
        if problem:
            raise CorpusError(f"{path}: example {i}: {problem}")
    return examples


def _load_corpus(cfg):
    if not cfg.train:
        raise ConfigError("config key 'train' is required")
    train, schema = parse_corpus(cfg.train, cfg.schema)
    tune = _check_split(cfg.tune, schema) if cfg.tune else []
    test = _check_split(cfg.test, schema) if cfg.test else []
    checksums = {name: {"path": path, "sha256": file_digest(path)}
                 for name, path in (("train", cfg.train), ("tune", cfg.tune), ("test", cfg.test),
                                    ("schema", cfg.schema), ("embeddings", cfg.embeddings)) if path}
    return train, tune, test, schema, checksums


def _config_from_args(args):
    overrides = {}
    for key in FIELDS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = convert(key, value)
    return load_config(args.config, overrides)


def _train(cfg, variants, train, tune, schema):
    pretrained = load_pretrained(cfg.embeddings, cfg.word_dim) if cfg.embeddings else None
    hyper = cfg.hyperparams()
    baseline = flat_hyper(hyper, cfg.baseline_epochs)
    return train_variant_models(variants, train, tune, schema, cfg.model_config(), hyper,
                                baseline_hyper=baseline, pretrained=pretrained)


def _stages(logs) -> dict:
    out = {}
    for name, entries in logs.items():
        seen = []
        for e in entries:
            if e["stage"] not in seen:
                seen.append(e["stage"])
        out[name] = seen
    return out


def _manifest(command, cfg, checksums, artifacts, logs, reports) -> dict:
    from .experiments import source_digest

    return {
        "command": command,
        "version": __version__,
        "source_sha256": source_digest(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "corpus": checksums,
        "artifacts": artifacts,
        "stages": _stages(logs),
        "epoch_log": logs,
        "reports": {k: r.to_dict() for k, r in reports.items()},
    }


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    from .plotting import plot_per_domain, plot_training_log

    cfg = _config_from_args(args)
    variant = parse_variant(cfg.variant)
    train, tune, test, schema, checksums = _load_corpus(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.txt", dump_config(cfg))
    models = _train(cfg, [variant], train, tune, schema)
    digests = save_bundle(models, out / "checkpoint", variant)
    eval_name, eval_set = ("test", test) if test else ("tune", tune) if tune else ("train", train)
    report = evaluate_variant(variant, models, eval_set, cfg.threads)
    print(format_report(report, f"{variant.value} on {eval_name} ({len(eval_set)} utterances)"))
    _write_json(out / "report.json", {"variant": variant.value, "split": eval_name, "report": report.to_dict()})
    plot_training_log(models.logs, out / "training.png")
    plot_per_domain({variant.value: report}, "slot_f1", out / "per_domain.png")
    artifacts = {
        "checkpoint_dir": str(out / "checkpoint"),
        "checkpoints": digests,
        "report": str(out / "report.json"),
        "figures": [str(out / "training.png"), str(out / "per_domain.png")],
        "config": str(out / "config.txt"),
    }
    manifest = _manifest("train", cfg, checksums, artifacts, models.logs, {f"{variant.value}/{eval_name}": report})
    _write_json(out / "manifest.json", manifest)
    log.info("wrote %s", out / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    from .plotting import plot_per_domain

    models, bundle_variant = load_bundle(args.checkpoint)
    variant = parse_variant(args.variant or bundle_variant)
    test, _ = parse_corpus(args.test, args.schema)
    unknown = unknown_labels(variant, models, test)
    if unknown:
        raise CommandError("corpus labels unknown to the checkpoint: " + ", ".join(unknown))
    report = evaluate_variant(variant, models, test, args.threads)
    print(format_report(report, f"{variant.value} on {args.test} ({len(test)} utterances)"))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "report.json", {"variant": variant.value, "corpus": str(args.test),
                                          "corpus_sha256": file_digest(args.test), "report": report.to_dict()})
        plot_per_domain({variant.value: report}, "slot_f1", out / "per_domain.png")
        log.info("wrote %s", out / "report.json")
    return EXIT_OK


# ---------------------------------------------------------------- predict


def parse_request(line: str):
    """``(tokens, gold_domain)`` from a JSON token array or ``{"tokens": [...], "domain": ...}``."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as err:
        raise ValueError(f"invalid JSON ({err.msg})") from None
    domain = None
    if isinstance(record, dict):
        tokens, domain = record.get("tokens"), record.get("domain")
    else:
        tokens = record
    if not isinstance(tokens, list):
        raise ValueError("expected a token array")
    if not tokens:
        raise ValueError("empty token array")
    if not all(isinstance(t, str) and t for t in tokens):
        raise ValueError("tokens must be non-empty strings")
    return tokens, domain


def prediction_record(lineno, tokens, pred) -> dict:
    spans = [
        {"type": etype, "start": start, "end": end, "text": " ".join(tokens[start:end])}
        for etype, start, end in sorted(extract_chunks(pred.slots), key=lambda c: (c[1], c[2], c[0]))
    ]
    return {"line": lineno, "tokens": tokens, "domain": pred.domain, "intent": pred.intent,
            "slots": list(pred.slots), "spans": spans}


def cmd_predict(args) -> int:
    from concurrent.futures import ThreadPoolExecutor

    models, bundle_variant = load_bundle(args.checkpoint)
    variant = parse_variant(args.variant or bundle_variant)
    stream = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8")
    with stream:
        lines = [(n, line) for n, line in enumerate(stream, 1) if line.strip()]

    def handle(item):
        lineno, line = item
        try:
            tokens, domain = parse_request(line)
            pred = predict_variant(variant, models, tokens, domain)
            return prediction_record(lineno, tokens, pred)
        except (ValueError, ConfigurationError) as err:
            return {"line": lineno, "error": str(err)}

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            records = list(pool.map(handle, lines))
    else:
        records = [handle(item) for item in lines]
    errors = 0
    for rec in records:
        print(json.dumps(rec, ensure_ascii=False))
        if "error" in rec:
            errors += 1
            print(f"line {rec['line']}: {rec['error']}", file=sys.stderr)
    return EXIT_ERROR if errors else EXIT_OK


# ---------------------------------------------------------------- compare


def comparison_table(reports: dict) -> str:
    """One row per variant with the overall (AVG row) metrics."""
    lines = [f"{'variant':<14}{'domain acc':>12}{'intent acc':>12}{'slot F1':>10}",
             "-" * 48]
    for name, r in reports.items():
        row = r.average if r.average is not None else r
        lines.append(f"{name:<14}{row.domain_acc:>11.2f}%{row.intent_acc:>11.2f}%{row.slot_f1:>10.2f}")
    return "\n".join(lines)


def per_domain_table(reports: dict, metric: str) -> str:
    names = list(reports)
    domains = sorted({d for r in reports.values() for d in r.per_domain})
    lines = [f"{metric:<16}" + "".join(f"{n:>13}" for n in names), "-" * (16 + 13 * len(names))]
    for d in domains + ["AVG"]:
        cells = []
        for n in names:
            r = reports[n].average if d == "AVG" else reports[n].per_domain.get(d)
            value = getattr(r, metric) if r is not None else None
            cells.append(f"{value:>13.2f}" if value is not None else f"{'-':>13}")
        lines.append(f"{d:<16}" + "".join(cells))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    from .plotting import plot_per_domain, plot_training_log, plot_variant_comparison

    cfg = _config_from_args(args)
    train, tune, test, schema, checksums = _load_corpus(cfg)
    if not test:
        raise ConfigError("compare needs a test corpus (config key 'test')")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.txt", dump_config(cfg))
    models = _train(cfg, TABLE_VARIANTS, train, tune, schema)
    digests = save_bundle(models, out / "checkpoint", Variant.JOINT)
    reports = {v: evaluate_variant(v, models, test, cfg.threads) for v in TABLE_VARIANTS}
    print(comparison_table(reports))
    for metric in ("domain_acc", "intent_acc", "slot_f1"):
        print()
        print(per_domain_table(reports, metric))
    _write_json(out / "compare.json", {v: r.to_dict() for v, r in reports.items()})
    figures = [out / "variants.png", out / "per_domain_slot_f1.png", out / "per_domain_intent_acc.png",
               out / "training.png"]
    plot_variant_comparison({v: r.average or r for v, r in reports.items()}, figures[0])
    plot_per_domain(reports, "slot_f1", figures[1])
    plot_per_domain(reports, "intent_acc", figures[2])
    plot_training_log(models.logs, figures[3])
    artifacts = {"checkpoint_dir": str(out / "checkpoint"), "checkpoints": digests,
                 "report": str(out / "compare.json"), "figures": [str(f) for f in figures],
                 "config": str(out / "config.txt")}
    _write_json(out / "manifest.json", _manifest("compare", cfg, checksums, artifacts, models.logs, reports))
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    from .gradcheck import check_model, miniature_problem

    model, example = miniature_problem(
        seed=args.seed, char_dim=args.char_dim, word_dim=args.word_dim, hidden=args.hidden,
        num_domains=args.domains, num_intents=args.intents, num_entity_types=args.entity_types,
        num_tokens=args.tokens, crf_score=args.crf_score,
    )
    report = check_model(model, example, step=args.step, tolerance=args.tolerance,
                         max_coords=args.max_coords, seed=args.seed)
    for line in report.lines():
        print(line)
    worst = max(report.max_error.values())
    print(f"{'PASS' if report.passed else 'FAIL'} max_rel_err={worst:.3e} tolerance={args.tolerance:g} "
          f"tensors={len(report.max_error)}")
    if args.report:
        _write_json(args.report, {"seed": args.seed, "step": args.step, "tolerance": args.tolerance,
                                  "max_error": report.max_error, "checked": report.checked,
                                  "passed": report.passed})
    if args.figure:
        from .plotting import plot_gradcheck

        plot_gradcheck(report, args.figure)
    if not report.passed:
        print("gradient check failed for: " + ", ".join(report.failures), file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


# ---------------------------------------------------------------- experiments


def cmd_experiments(args) -> int:
    from .experiments import (ExperimentPlan, char_direction, curriculum_direction, joint_vs_pipeline,
                              results_table, run_plan)

    seeds = tuple(int(s) for s in args.seeds.replace(",", " ").split())
    plan = ExperimentPlan(seeds=seeds)
    results = run_plan(plan, args.cache_dir)
    print(results_table(results))
    verdicts = [joint_vs_pipeline(results), curriculum_direction(results), char_direction(results)]
    for v in verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: {v.detail}")
    if args.out:
        payload = {"plan": plan.to_dict(),
                   "results": {str(s): {a: r.to_dict() for a, r in per.items()} for s, per in results.items()},
                   "verdicts": [{"name": v.name, "passed": v.passed, "detail": v.detail} for v in verdicts]}
        _write_json(args.out, payload)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_config_flags(p) -> None:
    p.add_argument("--config", help="key = value config file; flags override its values")
    group = p.add_argument_group("config keys")
    for key in FIELDS:
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onenet", description="Joint domain/intent/slot tagger.")
    parser.add_argument("--version", action="version", version=f"onenet {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--spec", help="JSON generator spec (default: built-in five-domain spec)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one variant and write checkpoints and a manifest")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a corpus")
    p.add_argument("--checkpoint", required=True, help="bundle directory or single checkpoint file")
    p.add_argument("--test", required=True)
    p.add_argument("--schema")
    p.add_argument("--variant")
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label token arrays, one JSON array per input line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", default="-")
    p.add_argument("--variant")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="train and evaluate all four variants on one corpus")
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of a miniature network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--char-dim", type=int, default=5)
    p.add_argument("--word-dim", type=int, default=10)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--domains", type=int, default=3)
    p.add_argument("--intents", type=int, default=4)
    p.add_argument("--entity-types", type=int, default=3)
    p.add_argument("--tokens", type=int, default=3)
    p.add_argument("--crf-score", default="additive", choices=("additive", "multiplicative"))
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--max-coords", type=int)
    p.add_argument("--report", help="write the per-tensor errors as JSON")
    p.add_argument("--figure", help="write a bar chart of the per-tensor errors")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("experiments", help="multi-seed directional comparisons on the synthetic corpus")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--cache-dir", default=".experiment_cache")
    p.add_argument("--out", help="write results and verdicts as JSON")
    p.set_defaults(func=cmd_experiments)
    return parser


def _configure_logging(level) -> None:
    # rebound on every call so repeated in-process runs log to the current stderr
    logger = logging.getLogger("onenet")
    for handler in [h for h in logger.handlers if getattr(h, "onenet_cli", False)]:
        logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.onenet_cli = True
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except (CommandError, *KNOWN_ERRORS) as err:
        print(f"onenet {args.command}: error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
