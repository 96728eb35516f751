"""Domain/intent accuracy, chunk-level slot F1 and per-domain breakdowns."""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import split_label


def repair_bio(labels) -> list[str]:
    """Rewrite every I-e that does not continue an e chunk into B-e."""
    out = []
    prev_type = None
    for label in labels:
        prefix, etype = split_label(label)
        if prefix == "I" and etype != prev_type:
            label = f"B-{etype}"
        out.append(label)
        prev_type = etype
    return out


def extract_chunks(labels) -> set:
    """Spans ``(type, start, end)`` with ``end`` exclusive; invalid BIO is repaired first."""
    chunks = set()
    start = etype = None
    for k, label in enumerate(repair_bio(labels)):
        prefix, t = split_label(label)
        if prefix != "I" and etype is not None:
            chunks.add((etype, start, k))
            etype = None
        if prefix == "B":
            start, etype = k, t
    if etype is not None:
        chunks.add((etype, start, len(labels)))
    return chunks


def prf(correct: int, guessed: int, gold: int):
    """Precision, recall and F1 as percentages, with 0/0 taken as 0."""
    p = 100.0 * correct / guessed if guessed else 0.0
    r = 100.0 * correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def chunk_counts(gold_seqs, pred_seqs):
    gold_seqs, pred_seqs = list(gold_seqs), list(pred_seqs)
    if len(gold_seqs) != len(pred_seqs):
        raise ValueError(f"{len(gold_seqs)} gold sequences but {len(pred_seqs)} predictions")
    correct = guessed = total = 0
    for k, (gold, pred) in enumerate(zip(gold_seqs, pred_seqs)):
        if len(gold) != len(pred):
            raise ValueError(f"sequence {k}: {len(gold)} gold labels but {len(pred)} predicted")
        g, p = extract_chunks(gold), extract_chunks(pred)
        correct += len(g & p)
        guessed += len(p)
        total += len(g)
    return correct, guessed, total


def slot_f1(gold, predicted):
    """Micro-averaged chunk precision/recall/F1 (percent).

    ``gold`` may hold :class:`~onenet.data.Example` objects or label sequences.
    """
    gold_seqs = [g.slots if hasattr(g, "slots") else g for g in gold]
    return prf(*chunk_counts(gold_seqs, predicted))


@dataclass
class EvalReport:
    count: int = 0
    domain_acc: float | None = None
    intent_acc: float | None = None
    slot_p: float | None = None
    slot_r: float | None = None
    slot_f1: float | None = None
    per_domain: dict = field(default_factory=dict)
    average: "EvalReport | None" = None

    METRICS = ("domain_acc", "intent_acc", "slot_p", "slot_r", "slot_f1")

    def row(self) -> dict:
        return {m: getattr(self, m) for m in self.METRICS}

    def to_dict(self) -> dict:
        d = {"count": self.count, **self.row()}
        if self.per_domain:
            d["per_domain"] = {k: v.to_dict() for k, v in self.per_domain.items()}
        if self.average is not None:
            d["average"] = self.average.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        rep = cls(count=d["count"], **{m: d.get(m) for m in cls.METRICS})
        rep.per_domain = {k: cls.from_dict(v) for k, v in d.get("per_domain", {}).items()}
        if d.get("average"):
            rep.average = cls.from_dict(d["average"])
        return rep


def score(gold, predictions) -> EvalReport:
    """Overall metrics for aligned gold examples and predictions.

    A prediction is anything with ``domain``, ``intent`` and ``slots``
    attributes; a ``None`` field means that task was not predicted.
    """
    gold, predictions = list(gold), list(predictions)
    if len(gold) != len(predictions):
        raise ValueError(f"{len(gold)} gold examples but {len(predictions)} predictions")
    rep = EvalReport(count=len(gold))
    if not gold:
        return rep
    if all(p.domain is not None for p in predictions):
        rep.domain_acc = 100.0 * sum(p.domain == g.domain for g, p in zip(gold, predictions)) / len(gold)
    if all(p.intent is not None for p in predictions):
        rep.intent_acc = 100.0 * sum(p.intent == g.intent for g, p in zip(gold, predictions)) / len(gold)
    if all(p.slots is not None and len(p.slots) == len(g.tokens) for g, p in zip(gold, predictions)):
        rep.slot_p, rep.slot_r, rep.slot_f1 = slot_f1(gold, [p.slots for p in predictions])
    return rep


def macro_average(reports) -> EvalReport:
    """Unweighted mean of each metric across ``reports``."""
    reports = list(reports)
    avg = EvalReport(count=sum(r.count for r in reports))
    for m in EvalReport.METRICS:
        values = [getattr(r, m) for r in reports]
        if values and all(v is not None for v in values):
            setattr(avg, m, sum(values) / len(values))
    return avg


def per_domain_breakdown(gold, predictions) -> EvalReport:
    """Overall report with per-gold-domain sub-reports and their macro AVG row."""
    gold, predictions = list(gold), list(predictions)
    overall = score(gold, predictions)
    buckets: dict[str, tuple[list, list]] = {}
    for g, p in zip(gold, predictions):
        bg, bp = buckets.setdefault(g.domain, ([], []))
        bg.append(g)
        bp.append(p)
    overall.per_domain = {d: score(*buckets[d]) for d in sorted(buckets)}
    overall.average = macro_average(overall.per_domain.values())
    return overall


def format_report(report: EvalReport, title: str = "") -> str:
    """Aligned text table: one row per domain, then AVG and the micro total."""

    def cell(v, pct=True):
        if v is None:
            return "-"
        return f"{v:.2f}%" if pct else f"{v:.2f}"

    header = f"{'domain':<16}{'n':>7}{'domain':>10}{'intent':>10}{'slot P':>9}{'slot R':>9}{'slot F1':>9}"
    lines = [title] if title else []
    lines += [header, "-" * len(header)]

    def add(name, r):
        lines.append(
            f"{name:<16}{r.count:>7d}{cell(r.domain_acc):>10}{cell(r.intent_acc):>10}"
            f"{cell(r.slot_p, False):>9}{cell(r.slot_r, False):>9}{cell(r.slot_f1, False):>9}"
        )

    for name, r in report.per_domain.items():
        add(name, r)
    if report.per_domain:
        lines.append("-" * len(header))
    if report.average is not None:
        add("AVG", report.average)
    add("ALL (micro)", report)
    return "\n".join(lines)
