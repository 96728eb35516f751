"""Seeded template-based generator for multi-domain SLU corpora.

A spec (JSON) looks like::

    {
      "seed": 0,
      "counts": {"train": 1000, "tune": 100, "test": 500},   # per domain
      "ambiguity_rate": 0.15,
      "heldout_fraction": 0.3,
      "lexicons": {
        "time": ["seven", "eleven thirty"],
        "city": {"stems": ["ash", "brook"], "suffixes": ["ville", "burg"]},
        "date": {"parts": [["", "next"], ["monday", "friday"]]},
        "message": ["lunch {date} at {time}"]
      },
      "open_lexicons": ["city"],
      "domains": {
        "alarm": {
          "intents": {"set_alarm": ["wake me up at {time}"]},
          "ambiguous": [{"intent": "set_alarm", "template": "{time} {date}"}]
        }
      },
      "labels": {"city": "place_name"}
    }

``{name}`` inside a template becomes a labeled slot of type ``labels.get(name,
name)``; ``{name}`` inside a lexicon value is expanded in place without a
label of its own.  A ``heldout_fraction`` of every lexicon listed in
``open_lexicons`` never appears in the training split.
"""

from __future__ import annotations

import copy
import json
import random
import re
from pathlib import Path

from .data import CorpusSchema, Example, validate_bio, write_corpus, write_schema

SPLITS = ("train", "tune", "test")
_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class SpecError(ValueError):
    pass


def _people():
    return {"stems": ["mar", "ken", "jos", "al", "rob", "dan", "lu", "ger", "fel", "han",
                      "bri", "car", "del", "ev", "tor", "wen", "ori", "pat", "sil", "val",
                      "mor", "ned", "quin", "ros"],
            "suffixes": ["ina", "ella", "iana", "etta"]}


def _cities():
    return {"stems": ["ash", "brook", "clay", "dun", "elm", "fair", "glen", "hart", "iron", "kings",
                      "lake", "mill", "north", "oak", "pine", "red", "stone", "west", "wood", "river",
                      "bay", "cedar", "fox", "gold"],
            "suffixes": ["ville", "burg", "field", "ford"]}


def _businesses():
    return {"stems": ["ash", "brook", "clay", "dun", "elm", "fair", "glen", "hart", "iron", "kings",
                      "lake", "mill", "north", "oak", "pine", "red", "stone", "west", "wood", "river",
                      "bay", "cedar", "fox", "gold"],
            "suffixes": ["mart", "bistro", "diner", "market"]}


DEFAULT_SPEC = {
    "seed": 0,
    "counts": {"train": 1000, "tune": 100, "test": 500},
    "ambiguity_rate": 0.25,
    "heldout_fraction": 0.5,
    "lexicons": {
        "time": {"parts": [["one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
                            "ten", "eleven", "twelve"],
                           ["", "fifteen", "thirty", "forty five"],
                           ["", "am", "pm"]]},
        "date": {"parts": [["", "this", "next"],
                           ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"],
                           ["", "morning", "evening"]]},
        "contact": _people(),
        "city": _cities(),
        "business": _businesses(),
        "place_type": ["coffee shop", "pharmacy", "gas station", "pizza place", "bank", "library",
                       "gym", "bakery"],
        "title": {"parts": [["", "weekly", "quarterly", "team", "family", "project", "dentist"],
                            ["lunch", "dinner", "review", "meeting", "sync", "standup", "appointment",
                             "class"]]},
        "alarm_name": ["workout", "school run", "medication", "nap", "morning"],
        "task": {"parts": [["buy", "pay", "renew", "pick up", "book", "water", "feed", "call"],
                           ["milk", "the rent", "my passport", "the laundry", "flights", "the plants",
                            "the cat", "the plumber", "groceries"]]},
        "message": ["change of {title} {date} from {time} to {time}", "running late for {title}",
                    "{title} moved to {date}", "see you at {time}", "can we do {title} {date}",
                    "i will be there by {time}", "happy birthday", "call me back {date}"],
        "medium": ["text", "email", "message"],
    },
    "open_lexicons": ["contact", "city", "business", "title", "task"],
    "labels": {"contact": "contact_name", "city": "place_name", "business": "place_name",
               "task": "reminder_text", "medium": "message_type"},
    "domains": {
        "alarm": {
            "intents": {
                "set_alarm": ["wake me up at {time}", "set an alarm for {time} {date}",
                              "alarm at {time}", "set a {alarm_name} alarm for {time}",
                              "please wake me {date} at {time}", "i need an alarm {date} at {time}"],
                "cancel_alarm": ["cancel my {time} alarm", "turn off the {alarm_name} alarm",
                                 "delete the alarm for {date}", "remove my {alarm_name} alarm {date}",
                                 "cancel the {time} alarm for {date}"],
                "snooze_alarm": ["snooze for {time}", "snooze the {alarm_name} alarm",
                                 "snooze it until {time}", "snooze the alarm until {time} {date}"],
            },
            "ambiguous": [
                {"intent": "set_alarm", "template": "remind me at {time} {date}"},
                {"intent": "cancel_alarm", "template": "cancel {alarm_name} {date}"},
            ],
        },
        "calendar": {
            "intents": {
                "add_event": ["add {title} on {date} at {time}", "schedule {title} with {contact} {date}",
                              "put {title} in my calendar for {date}", "create an event {title} at {city}"],
                "change_event": ["change {title} {date} from {time} to {time}", "move my {title} to {date}",
                                 "reschedule {title} to {time}"],
                "find_event": ["what is on my calendar {date}", "when is my {title}",
                               "do i have {title} {date}", "show my events for {date}"],
            },
            "ambiguous": [
                {"intent": "change_event", "template": "tell {contact} about change of {title} {date}"},
                {"intent": "add_event", "template": "meet {contact} at {business} {date}"},
                {"intent": "add_event", "template": "lunch with {contact} {date}"},
            ],
        },
        "communication": {
            "intents": {
                "send_text": ["text {contact} {message}", "send a {medium} to {contact} saying {message}",
                              "tell {contact} {message}", "inform {contact} about {message}"],
                "make_call": ["call {contact}", "phone {contact} {date}", "dial {contact} now",
                              "give {contact} a ring"],
                "read_messages": ["read my messages from {contact}", "any new {medium} from {contact}",
                                  "read my {medium}"],
            },
            "ambiguous": [
                {"intent": "send_text", "template": "inform {contact} about {message}"},
                {"intent": "make_call", "template": "call {contact} at {time}"},
                {"intent": "make_call", "template": "call {contact} {date}"},
                {"intent": "read_messages", "template": "anything new from {contact}"},
            ],
        },
        "places": {
            "intents": {
                "find_place": ["find a {place_type} in {city}", "where is the nearest {place_type}",
                               "show me {place_type} near {city}", "is there a {place_type} around {city}"],
                "get_directions": ["directions to {business}", "how do i get to {city}",
                                   "navigate to {business} in {city}", "take me to {city}"],
                "check_hours": ["when does {business} open", "is {business} open {date}",
                                "what time does {business} close"],
            },
            "ambiguous": [
                {"intent": "check_hours", "template": "call {business}"},
                {"intent": "get_directions", "template": "take me to {business} at {time}"},
                {"intent": "check_hours", "template": "call {business} {date}"},
                {"intent": "find_place", "template": "lunch near {city} {date}"},
            ],
        },
        "reminder": {
            "intents": {
                "create_reminder": ["remind me to {task} {date}", "remind me to {task} at {time}",
                                    "set a reminder to {task}", "remember to {task} {date} at {time}"],
                "delete_reminder": ["delete the reminder to {task}", "remove my reminder about {task}",
                                    "cancel the {task} reminder"],
                "find_reminder": ["what are my reminders for {date}", "show reminders",
                                  "did i set a reminder to {task}"],
            },
            "ambiguous": [
                {"intent": "create_reminder", "template": "remind me to call {contact} {date}"},
                {"intent": "create_reminder", "template": "remind me {date} at {time}"},
            ],
        },
    },
}


def default_spec() -> dict:
    return copy.deepcopy(DEFAULT_SPEC)


def load_spec(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _expand_lexicon(name, entry) -> list[str]:
    if isinstance(entry, list):
        values = [str(v) for v in entry]
    elif isinstance(entry, dict) and "stems" in entry:
        values = [s + x for s in entry["stems"] for x in entry.get("suffixes", [""])]
    elif isinstance(entry, dict) and "parts" in entry:
        values = [""]
        for part in entry["parts"]:
            values = [f"{v} {p}".strip() for v in values for p in part]
    else:
        raise SpecError(f"lexicon {name!r} must be a list, a stems/suffixes or a parts object")
    if not values:
        raise SpecError(f"lexicon {name!r} is empty")
    return values


class _Generator:
    def __init__(self, spec):
        self.spec = spec
        self.rng = random.Random(spec.get("seed", 0))
        self.labels = spec.get("labels", {})
        self.lexicons = {k: _expand_lexicon(k, v) for k, v in spec.get("lexicons", {}).items()}
        self.heldout = {}
        frac = float(spec.get("heldout_fraction", 0.0))
        for name in spec.get("open_lexicons", []):
            if name not in self.lexicons:
                raise SpecError(f"open lexicon {name!r} is not defined")
            values = list(self.lexicons[name])
            random.Random(f"{spec.get('seed', 0)}:{name}").shuffle(values)
            cut = int(round(len(values) * frac))
            self.heldout[name] = set(values[:cut])
        self._check()

    def _check(self):
        for domain, dspec in self.spec["domains"].items():
            templates = [t for ts in dspec["intents"].values() for t in ts]
            templates += [a["template"] for a in dspec.get("ambiguous", [])]
            for amb in dspec.get("ambiguous", []):
                if amb["intent"] not in dspec["intents"]:
                    raise SpecError(f"{domain}: ambiguous template uses unknown intent {amb['intent']!r}")
            for tpl in templates:
                self._check_placeholders(tpl, f"{domain} template {tpl!r}")
        for name, values in self.lexicons.items():
            for v in values:
                self._check_placeholders(v, f"lexicon {name!r} value {v!r}")

    def _check_placeholders(self, text, where):
        for name in _PLACEHOLDER.findall(text):
            if name not in self.lexicons:
                raise SpecError(f"unresolvable placeholder {{{name}}} in {where}")

    def value(self, name, split, depth=0):
        pool = self.lexicons[name]
        if split == "train" and self.heldout.get(name):
            pool = [v for v in pool if v not in self.heldout[name]]
        text = self.rng.choice(pool)
        if depth > 5:
            raise SpecError(f"lexicon {name!r} expands recursively")
        return _PLACEHOLDER.sub(lambda m: self.value(m.group(1), split, depth + 1), text)

    def realize(self, template, split):
        tokens, slots = [], []
        for piece in template.split():
            m = _PLACEHOLDER.fullmatch(piece)
            if m is None:
                tokens.append(piece)
                slots.append("O")
                continue
            words = self.value(m.group(1), split).split()
            etype = self.labels.get(m.group(1), m.group(1))
            tokens += words
            slots += [f"B-{etype}"] + [f"I-{etype}"] * (len(words) - 1)
        return tokens, slots

    def sample(self, domain, split):
        dspec = self.spec["domains"][domain]
        amb = dspec.get("ambiguous", [])
        if amb and self.rng.random() < float(self.spec.get("ambiguity_rate", 0.0)):
            pick = self.rng.choice(amb)
            intent, template = pick["intent"], pick["template"]
        else:
            intent = self.rng.choice(sorted(dspec["intents"]))
            template = self.rng.choice(dspec["intents"][intent])
        tokens, slots = self.realize(template, split)
        return Example(tokens, domain, intent, slots)


def generate_synthetic(spec=None, max_tries=200):
    """Return ``({split: [Example]}, CorpusSchema)`` for ``spec`` (default spec if None).

    Splits are disjoint as token sequences; each split holds exactly
    ``counts[split]`` examples per domain.
    """
    spec = default_spec() if spec is None else spec
    if not spec.get("domains"):
        raise SpecError("spec defines no domains")
    gen = _Generator(spec)
    counts = spec.get("counts", {})
    seen: set = set()
    splits = {s: [] for s in SPLITS}
    for split in SPLITS:
        for domain in spec["domains"]:
            for _ in range(int(counts.get(split, 0))):
                for _ in range(max_tries):
                    ex = gen.sample(domain, split)
                    if ex.tokens not in seen:
                        break
                else:
                    raise SpecError(
                        f"could not draw a fresh {split} utterance for {domain!r} after {max_tries} tries"
                    )
                problem = validate_bio(ex.slots)
                if problem:
                    raise SpecError(f"generated invalid BIO ({problem})")
                seen.add(ex.tokens)
                splits[split].append(ex)
    return splits, schema_from_spec(spec)


def schema_from_spec(spec) -> CorpusSchema:
    labels = spec.get("labels", {})
    domain_intents, domain_entities = {}, {}
    for domain, dspec in spec["domains"].items():
        domain_intents[domain] = sorted(dspec["intents"])
        names = set()
        for tpl in [t for ts in dspec["intents"].values() for t in ts] + [
            a["template"] for a in dspec.get("ambiguous", [])
        ]:
            names.update(_PLACEHOLDER.findall(tpl))
        domain_entities[domain] = sorted({labels.get(n, n) for n in names})
    return CorpusSchema(
        domains=sorted(domain_intents),
        intents=sorted({i for v in domain_intents.values() for i in v}),
        entity_types=sorted({e for v in domain_entities.values() for e in v}),
        domain_intents=dict(sorted(domain_intents.items())),
        domain_entities=dict(sorted(domain_entities.items())),
    )


def write_synthetic(spec, out_dir) -> dict:
    """Generate and write ``train/tune/test.jsonl`` plus ``schema.json``; returns the splits."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits, schema = generate_synthetic(spec)
    for split, examples in splits.items():
        write_corpus(out / f"{split}.jsonl", examples)
    write_schema(out / "schema.json", schema)
    return splits
