"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key maps onto a field of
:class:`RunConfig`; unknown keys are errors.  Command-line flags override
file values and the ``ONENET_SEED`` environment variable overrides the seed.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace

from .model import ModelConfig
from .trainer import Hyperparams


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # corpus and outputs
    train: str | None = None
    tune: str | None = None
    test: str | None = None
    schema: str | None = None
    embeddings: str | None = None
    variant: str = "joint"
    out_dir: str = "runs/onenet"
    threads: int = 1
    # optimization
    seed: int = 0
    learning_rate: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dropout_keep: float = 0.4
    stage_epochs: tuple = (3, 3, 3, 20)
    baseline_epochs: int | None = None
    patience: int = 5
    clip_norm: float | None = None
    # network
    char_dim: int = 25
    char_hidden: int = 25
    word_dim: int = 100
    word_hidden: int = 100
    use_chars: bool = True
    crf_score: str = "additive"
    lowercase_fallback: bool = True
    unk_replace_prob: float = 0.1

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            learning_rate=self.learning_rate, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
            dropout_keep=self.dropout_keep, stage_epochs=self.stage_epochs, rng_seed=self.seed,
            patience=self.patience, clip_norm=self.clip_norm,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            char_dim=self.char_dim, char_hidden=self.char_hidden, word_dim=self.word_dim,
            word_hidden=self.word_hidden, use_chars=self.use_chars, crf_score=self.crf_score,
            dropout_keep=self.dropout_keep, lowercase_fallback=self.lowercase_fallback,
            unk_replace_prob=self.unk_replace_prob,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_epochs"] = list(self.stage_epochs)
        return d


FIELDS = {f.name: f for f in fields(RunConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def convert(key: str, text: str):
    """Parse the string ``text`` for config field ``key``."""
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    kind = FIELDS[key].type
    text = text.strip()
    try:
        if key == "stage_epochs":
            return tuple(int(p) for p in text.replace(",", " ").split())
        if text.lower() in ("none", "") and "None" in kind:
            return None
        if kind.startswith("bool"):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            values[key] = convert(key, value)
        except ConfigError as err:
            raise ConfigError(f"{source}:{lineno}: {err}") from None
    return values


def load_config(path=None, overrides=None, environ=None) -> RunConfig:
    """File values, then ``overrides`` (already parsed), then ``ONENET_SEED``."""
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read(), str(path)))
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    environ = os.environ if environ is None else environ
    if environ.get("ONENET_SEED"):
        values["seed"] = convert("seed", environ["ONENET_SEED"])
    cfg = replace(RunConfig(), **values)
    cfg.hyperparams()
    cfg.model_config()
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
