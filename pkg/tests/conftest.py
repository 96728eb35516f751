import numpy as np
import pytest

from onenet.data import Example, build_vocab
from onenet.model import ModelConfig, OneNet

TINY = dict(char_dim=5, char_hidden=5, word_dim=10, word_hidden=8, dropout_keep=1.0, unk_replace_prob=0.0)


def tiny_examples():
    return [
        Example(["wake", "me", "seven"], "alarm", "set_alarm", ["O", "O", "B-time"]),
        Example(["call", "marina"], "communication", "make_call", ["O", "B-contact"]),
        Example(["add", "lunch", "next", "friday"], "calendar", "add_event", ["O", "O", "B-date", "I-date"]),
        Example(["text", "marina", "at", "seven"], "communication", "send_text",
                ["O", "B-contact", "O", "B-time"]),
    ]


def tiny_model(seed=0, **overrides):
    cfg = ModelConfig(**{**TINY, **overrides})
    examples = tiny_examples()
    cv, wv = build_vocab(examples, unk_replace_prob=cfg.unk_replace_prob)
    return OneNet(
        cfg, cv, wv,
        domains=["alarm", "calendar", "communication"],
        intents=["add_event", "make_call", "send_text", "set_alarm"],
        entity_types=["contact", "date", "time"],
        seed=seed,
    )


@pytest.fixture
def examples():
    return tiny_examples()


@pytest.fixture
def model():
    return tiny_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


class Criterion:
    """Context manager that records PASS/FAIL for an acceptance criterion."""

    def __init__(self, number, name):
        self.number, self.name, self.detail = number, name, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = self.detail
        if exc_type is not None:
            reason = (str(exc).splitlines() or [exc_type.__name__])[0][:160]
            detail = f"{detail} | {reason}" if detail else reason
        line = f"criterion {self.number} {status}: {self.name}" + (f" | {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
