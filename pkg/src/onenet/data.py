"""Annotated utterances, corpus files, BIO validation and vocabulary building.

Corpus files are UTF-8 JSON Lines, one utterance per line::

    {"tokens": ["wake", "me", "at", "seven"], "domain": "alarm",
     "intent": "set_alarm", "slots": ["O", "O", "O", "B-time"]}

An optional ``schema.json`` next to the corpus lists the label inventories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

FIELDS = ("tokens", "domain", "intent", "slots")


class CorpusError(ValueError):
    """Malformed corpus content; the message carries the line number."""


@dataclass(frozen=True)
class Example:
    tokens: tuple
    domain: str
    intent: str
    slots: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "slots", tuple(self.slots))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def to_json(self) -> str:
        return json.dumps(
            {"tokens": list(self.tokens), "domain": self.domain,
             "intent": self.intent, "slots": list(self.slots)},
            ensure_ascii=False,
        )


@dataclass
class CorpusSchema:
    domains: list
    intents: list
    entity_types: list
    domain_intents: dict = field(default_factory=dict)
    domain_entities: dict = field(default_factory=dict)

    @classmethod
    def infer(cls, examples) -> "CorpusSchema":
        domain_intents: dict[str, set] = {}
        domain_entities: dict[str, set] = {}
        for ex in examples:
            domain_intents.setdefault(ex.domain, set()).add(ex.intent)
            ents = domain_entities.setdefault(ex.domain, set())
            ents.update(label[2:] for label in ex.slots if label != "O")
        return cls(
            domains=sorted(domain_intents),
            intents=sorted(set().union(*domain_intents.values())) if domain_intents else [],
            entity_types=sorted(set().union(*domain_entities.values())) if domain_entities else [],
            domain_intents={d: sorted(v) for d, v in sorted(domain_intents.items())},
            domain_entities={d: sorted(v) for d, v in sorted(domain_entities.items())},
        )

    def to_dict(self) -> dict:
        return {
            "domains": list(self.domains),
            "intents": list(self.intents),
            "entity_types": list(self.entity_types),
            "domain_intents": {d: list(v) for d, v in self.domain_intents.items()},
            "domain_entities": {d: list(v) for d, v in self.domain_entities.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "CorpusSchema":
        return cls(
            domains=list(d["domains"]),
            intents=list(d["intents"]),
            entity_types=list(d["entity_types"]),
            domain_intents={k: list(v) for k, v in d.get("domain_intents", {}).items()},
            domain_entities={k: list(v) for k, v in d.get("domain_entities", {}).items()},
        )

    def check(self, ex: Example) -> str | None:
        if ex.domain not in self.domains:
            return f"unknown domain {ex.domain!r}"
        if ex.intent not in self.intents:
            return f"unknown intent {ex.intent!r}"
        known = set(self.entity_types)
        for label in ex.slots:
            if label != "O" and label[2:] not in known:
                return f"unknown entity type in label {label!r}"
        return None


def split_label(label: str):
    """``"B-time"`` -> ``("B", "time")``; ``"O"`` -> ``("O", None)``."""
    if label == "O":
        return "O", None
    if len(label) > 2 and label[1] == "-" and label[0] in "BI":
        return label[0], label[2:]
    raise ValueError(f"not a BIO label: {label!r}")


def validate_bio(labels) -> str | None:
    """Return ``None`` if ``labels`` is a valid BIO sequence, else a description of the first violation."""
    prev_type = None
    for i, label in enumerate(labels):
        try:
            prefix, etype = split_label(label)
        except ValueError as err:
            return f"index {i}: {err}"
        if prefix == "I" and etype != prev_type:
            if prev_type is None:
                return f"index {i}: {label} without a preceding B-{etype}"
            return f"index {i}: {label} follows a chunk of type {prev_type} (type switch without B)"
        prev_type = etype
    return None


def check_example(ex: Example) -> str | None:
    if not ex.tokens:
        return "empty token list"
    if any(not isinstance(t, str) or not t for t in ex.tokens):
        return "tokens must be non-empty strings"
    if len(ex.slots) != len(ex.tokens):
        return f"length mismatch: {len(ex.tokens)} tokens but {len(ex.slots)} slot labels"
    return validate_bio(ex.slots)


def parse_line(line: str, lineno: int = 0) -> Example:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as err:
        raise CorpusError(f"line {lineno}: invalid JSON ({err.msg})") from None
    if not isinstance(record, dict):
        raise CorpusError(f"line {lineno}: expected an object")
    unknown = sorted(set(record) - set(FIELDS))
    if unknown:
        raise CorpusError(f"line {lineno}: unknown field(s) {', '.join(unknown)}")
    missing = [f for f in FIELDS if f not in record]
    if missing:
        raise CorpusError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    if not isinstance(record["tokens"], list) or not isinstance(record["slots"], list):
        raise CorpusError(f"line {lineno}: tokens and slots must be arrays")
    ex = Example(record["tokens"], str(record["domain"]), str(record["intent"]), record["slots"])
    problem = check_example(ex)
    if problem:
        raise CorpusError(f"line {lineno}: {problem}")
    return ex


def read_examples(path) -> list[Example]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                examples.append(parse_line(line, lineno))
    if not examples:
        raise CorpusError(f"{path}: no examples")
    return examples


def load_schema(path) -> CorpusSchema:
    with open(path, encoding="utf-8") as fh:
        return CorpusSchema.from_dict(json.load(fh))


def parse_corpus(path, schema_path=None):
    """Read and validate a corpus; returns ``(examples, schema)``.

    The schema comes from ``schema_path``, else from ``schema.json`` in the
    corpus directory, else it is inferred from the examples.
    """
    path = Path(path)
    examples = read_examples(path)
    if schema_path is None and (path.parent / "schema.json").exists():
        schema_path = path.parent / "schema.json"
    if schema_path is None:
        return examples, CorpusSchema.infer(examples)
    schema = load_schema(schema_path)
    for i, ex in enumerate(examples, 1):
        problem = schema.check(ex)
        if problem:
            raise CorpusError(f"{path}: example {i}: {problem}")
    return examples, schema


def write_corpus(path, examples) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(ex.to_json() + "\n")


def write_schema(path, schema: CorpusSchema) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(schema.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_vocab(train_examples, min_char_count=1, unk_replace_prob=0.1):
    """Character and word vocabularies from the training split only."""
    from .embedding import CharVocab, WordVocab

    if not train_examples:
        raise ValueError("cannot build vocabularies from an empty training set")
    char_counts: dict[str, int] = {}
    word_counts: dict[str, int] = {}
    for ex in train_examples:
        for tok in ex.tokens:
            word_counts[tok] = word_counts.get(tok, 0) + 1
            for ch in tok:
                char_counts[ch] = char_counts.get(ch, 0) + 1
    chars = [c for c, n in char_counts.items() if n >= min_char_count]
    return CharVocab(chars), WordVocab(list(word_counts), counts=word_counts, unk_replace_prob=unk_replace_prob)
