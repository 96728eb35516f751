import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onenet.data import (
    CorpusError,
    CorpusSchema,
    Example,
    build_vocab,
    parse_corpus,
    read_examples,
    validate_bio,
    write_corpus,
    write_schema,
)
from onenet.embedding import UNK
from onenet.synthetic import SpecError, default_spec, generate_synthetic, write_synthetic


def _write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def _record(tokens, slots, domain="alarm", intent="set_alarm"):
    return json.dumps({"tokens": tokens, "domain": domain, "intent": intent, "slots": slots})


# ---------------------------------------------------------------- BIO


@pytest.mark.parametrize("labels", [["B-msg", "I-msg", "O"], ["O"] * 7, [], ["B-a", "B-a", "I-a"], ["B-a", "B-b"]])
def test_valid_bio(labels):
    assert validate_bio(labels) is None


def test_type_switch_without_b():
    problem = validate_bio(["B-a", "I-b"])
    assert problem.startswith("index 1") and "type switch" in problem


def test_i_without_b():
    assert validate_bio(["O", "I-title"]).startswith("index 1")


def test_malformed_label():
    assert validate_bio(["B-"]) is not None
    assert validate_bio(["X-a"]) is not None


# ---------------------------------------------------------------- parsing


def test_empty_file(tmp_path):
    with pytest.raises(CorpusError, match="no examples"):
        parse_corpus(_write(tmp_path / "c.jsonl", []))


def test_single_record(tmp_path):
    examples, schema = parse_corpus(_write(tmp_path / "c.jsonl", [_record(["wake", "me"], ["O", "O"])]))
    assert examples == [Example(("wake", "me"), "alarm", "set_alarm", ("O", "O"))]
    assert schema.domains == ["alarm"] and schema.intents == ["set_alarm"] and schema.entity_types == []


@pytest.mark.parametrize("line, message", [
    (_record(["a", "b"], ["O", "I-title"]), "line 2: index 1"),
    (_record(["a", "b"], ["O"]), "line 2: length mismatch"),
    (json.dumps({"tokens": ["a"], "domain": "d", "intent": "i", "slots": ["O"], "extra": 1}), "line 2: unknown field"),
    (json.dumps({"tokens": ["a"], "domain": "d", "slots": ["O"]}), "line 2: missing field"),
    ("{not json", "line 2: invalid JSON"),
    (_record([], []), "line 2: empty token list"),
])
def test_line_numbered_errors(tmp_path, line, message):
    path = _write(tmp_path / "c.jsonl", [_record(["ok"], ["O"]), line])
    with pytest.raises(CorpusError, match=message):
        parse_corpus(path)


def test_sidecar_schema_is_used_and_enforced(tmp_path):
    schema = CorpusSchema(["alarm"], ["set_alarm"], ["time"], {"alarm": ["set_alarm"]}, {"alarm": ["time"]})
    write_schema(tmp_path / "schema.json", schema)
    path = _write(tmp_path / "c.jsonl", [_record(["at", "7"], ["O", "B-time"])])
    _, loaded = parse_corpus(path)
    assert loaded == schema
    _write(path, [_record(["at", "7"], ["O", "B-date"])])
    with pytest.raises(CorpusError, match="unknown entity type"):
        parse_corpus(path)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.lists(st.text("abcé xyz", min_size=1).filter(lambda s: s.strip() == s and " " not in s),
                                   min_size=1, max_size=4),
                          st.sampled_from(["alarm", "places"]), st.sampled_from(["x", "y"])),
                min_size=1, max_size=5))
def test_round_trip(tmp_path_factory, records):
    examples = []
    for tokens, domain, intent in records:
        slots = ["B-a" if k == 0 else "I-a" for k in range(len(tokens))]
        examples.append(Example(tokens, domain, intent, slots))
    path = tmp_path_factory.mktemp("rt") / "c.jsonl"
    write_corpus(path, examples)
    assert read_examples(path) == examples


# ---------------------------------------------------------------- vocab


def test_single_word_vocab():
    cv, wv = build_vocab([Example(["hi"], "d", "i", ["O"])])
    assert set(wv.itos) == {"hi", UNK}
    assert set(cv.itos) == {"h", "i", UNK}


def test_unseen_word_maps_to_unk():
    _, wv = build_vocab([Example(["set", "alarm"], "d", "i", ["O", "O"])])
    assert wv.index("tomorrow") == 0 and wv.itos[0] == UNK
    assert wv.index("set") != 0


def test_vocab_order_is_first_occurrence_and_deterministic():
    train = [Example(["b", "a"], "d", "i", ["O", "O"]), Example(["c", "a"], "d", "i", ["O", "O"])]
    first = build_vocab(train)
    second = build_vocab(list(train))
    assert first[1].itos == second[1].itos == [UNK, "b", "a", "c"]
    assert first[0].itos == second[0].itos


def test_vocab_never_sees_other_splits():
    splits, _ = generate_synthetic(_small_spec())
    _, wv = build_vocab(splits["train"])
    train_words = {t for ex in splits["train"] for t in ex.tokens}
    assert set(wv.itos) - {UNK} == train_words


def test_empty_vocab_input():
    with pytest.raises(ValueError):
        build_vocab([])


# ---------------------------------------------------------------- generator


def _small_spec(**counts):
    spec = default_spec()
    spec["counts"] = {"train": 20, "tune": 5, "test": 10, **counts}
    return spec


def test_single_template_spec():
    spec = {"seed": 3, "counts": {"train": 1},
            "lexicons": {"time": ["seven"]},
            "domains": {"alarm": {"intents": {"set_alarm": ["wake me at {time}"]}}}}
    splits, schema = generate_synthetic(spec)
    assert splits["train"] == [Example(["wake", "me", "at", "seven"], "alarm", "set_alarm",
                                       ["O", "O", "O", "B-time"])]
    assert splits["tune"] == [] and splits["test"] == []
    assert schema.entity_types == ["time"]


def test_default_spec_counts_exact():
    splits, schema = generate_synthetic(default_spec())
    assert schema.domains == ["alarm", "calendar", "communication", "places", "reminder"]
    for domain in schema.domains:
        assert 2 <= len(schema.domain_intents[domain]) <= 4
    for split, n in (("train", 1000), ("tune", 100), ("test", 500)):
        per_domain = {d: sum(ex.domain == d for ex in splits[split]) for d in schema.domains}
        assert set(per_domain.values()) == {n}, split


def test_default_corpus_properties():
    splits, schema = generate_synthetic(default_spec())
    seen = {}
    for split, examples in splits.items():
        for ex in examples:
            assert validate_bio(ex.slots) is None
            assert schema.check(ex) is None
            assert seen.setdefault(ex.tokens, split) == split
    train_words = {t for ex in splits["train"] for t in ex.tokens}
    unseen_slot_tokens = [t for ex in splits["test"] for t, s in zip(ex.tokens, ex.slots)
                          if s != "O" and t not in train_words]
    assert unseen_slot_tokens, "test split should contain slot values never seen in training"
    # some entity types occur in several domains
    entity_owners = {}
    for d, ents in schema.domain_entities.items():
        for e in ents:
            entity_owners.setdefault(e, set()).add(d)
    assert any(len(v) > 1 for v in entity_owners.values())


def test_same_seed_gives_identical_files(tmp_path):
    write_synthetic(_small_spec(), tmp_path / "a")
    write_synthetic(_small_spec(), tmp_path / "b")
    for name in ("train.jsonl", "tune.jsonl", "test.jsonl", "schema.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_different_seed_differs():
    a, _ = generate_synthetic(dict(_small_spec(), seed=1))
    b, _ = generate_synthetic(dict(_small_spec(), seed=2))
    assert a["train"] != b["train"]


def test_unresolvable_placeholder():
    spec = {"counts": {"train": 1}, "lexicons": {},
            "domains": {"alarm": {"intents": {"set_alarm": ["wake me at {time}"]}}}}
    with pytest.raises(SpecError, match=r"\{time\}"):
        generate_synthetic(spec)


def test_exhausted_template_space():
    spec = {"counts": {"train": 2}, "lexicons": {"time": ["seven"]},
            "domains": {"alarm": {"intents": {"set_alarm": ["wake me at {time}"]}}}}
    with pytest.raises(SpecError, match="fresh"):
        generate_synthetic(spec)


def test_written_corpus_parses_with_schema(tmp_path):
    write_synthetic(_small_spec(), tmp_path)
    examples, schema = parse_corpus(tmp_path / "test.jsonl")
    assert len(examples) == 50 and len(schema.domains) == 5
