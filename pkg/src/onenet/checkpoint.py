"""Single-file model checkpoints and their text manifests.

Binary layout, all integers little-endian::

    b"ONENETCK"  u32 format version
    u32 n  + n bytes of UTF-8 JSON header (config, label inventories,
             vocabulary sizes, tensor names and shapes)
    char vocabulary:  u32 count, then per symbol u32 length + UTF-8 bytes
    word vocabulary:  u32 count, then per word u32 length + UTF-8 bytes,
                      u32 training count, u8 pretrained flag
    tensors in declaration order: u32 name length + name, u32 ndim,
                      ndim x u32 dims, float64 little-endian values

The manifest written next to it (``<file>.manifest``) lists the file digest
and one ``name shape sha256`` line per tensor.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .embedding import CharVocab, WordVocab
from .model import ModelConfig, OneNet

MAGIC = b"ONENETCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _u32(fh, value):
    fh.write(struct.pack("<I", value))


def _str(fh, text):
    data = text.encode("utf-8")
    _u32(fh, len(data))
    fh.write(data)


def _read(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_u32(fh):
    return struct.unpack("<I", _read(fh, 4))[0]


def _read_str(fh):
    return _read(fh, _read_u32(fh)).decode("utf-8")


def header_of(model: OneNet) -> dict:
    cfg = model.config.to_dict()
    cfg.pop("dropout_keep")  # a training setting, not part of the network
    return {
        "config": cfg,
        "domains": model.domains,
        "intents": model.intents,
        "entity_types": model.tagset.entity_types,
        "char_vocab_size": len(model.char_vocab),
        "word_vocab_size": len(model.word_vocab),
        "tensors": [[name, list(spec.shape)] for name, spec in model.store.specs.items()],
    }


def to_bytes(model: OneNet) -> bytes:
    fh = io.BytesIO()
    fh.write(MAGIC)
    _u32(fh, FORMAT_VERSION)
    _str(fh, json.dumps(header_of(model), sort_keys=True, separators=(",", ":")))
    _u32(fh, len(model.char_vocab))
    for ch in model.char_vocab.itos:
        _str(fh, ch)
    wv = model.word_vocab
    _u32(fh, len(wv))
    for k, word in enumerate(wv.itos):
        _str(fh, word)
        _u32(fh, int(wv.counts.get(word, 0)))
        fh.write(struct.pack("<B", 1 if wv.pretrained[k] else 0))
    for name, spec in model.store.specs.items():
        _str(fh, name)
        _u32(fh, len(spec.shape))
        for dim in spec.shape:
            _u32(fh, dim)
        fh.write(np.ascontiguousarray(model.store[name], dtype="<f8").tobytes())
    return fh.getvalue()


def from_bytes(data: bytes) -> OneNet:
    fh = io.BytesIO(data)
    if _read(fh, len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = _read_u32(fh)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    header = json.loads(_read_str(fh))
    chars = [_read_str(fh) for _ in range(_read_u32(fh))]
    char_vocab = CharVocab(chars[1:])
    if char_vocab.itos != chars:
        raise CheckpointError("corrupt character vocabulary")
    words, counts, flags = [], {}, []
    for _ in range(_read_u32(fh)):
        word = _read_str(fh)
        count = _read_u32(fh)
        flags.append(bool(_read(fh, 1)[0]))
        words.append(word)
        if count:
            counts[word] = count
    cfg = ModelConfig(**header["config"])
    word_vocab = WordVocab(words[1:], counts=counts)
    if word_vocab.itos != words:
        raise CheckpointError("corrupt word vocabulary")
    word_vocab.pretrained = flags
    model = OneNet(cfg, char_vocab, word_vocab, header["domains"], header["intents"], header["entity_types"])
    expected = [[n, list(s.shape)] for n, s in model.store.specs.items()]
    if expected != header["tensors"]:
        raise CheckpointError("tensor layout in header does not match the configured network")
    for name, spec in model.store.specs.items():
        stored = _read_str(fh)
        shape = tuple(_read_u32(fh) for _ in range(_read_u32(fh)))
        if stored != name or shape != spec.shape:
            raise CheckpointError(f"expected tensor {name}{spec.shape}, found {stored}{shape}")
        raw = _read(fh, 8 * spec.size)
        model.store.assign(name, np.frombuffer(raw, dtype="<f8").reshape(shape))
    if fh.read(1):
        raise CheckpointError("trailing bytes after the last tensor")
    return model


def manifest_text(model: OneNet, data: bytes) -> str:
    lines = [f"format {FORMAT_VERSION}", f"sha256 {hashlib.sha256(data).hexdigest()}"]
    for name, spec in model.store.specs.items():
        raw = np.ascontiguousarray(model.store[name], dtype="<f8").tobytes()
        shape = "x".join(str(d) for d in spec.shape) or "scalar"
        lines.append(f"{name} {shape} {hashlib.sha256(raw).hexdigest()}")
    return "\n".join(lines) + "\n"


def atomic_write(path, data) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_checkpoint(model: OneNet, path) -> str:
    """Write ``path`` and ``path.manifest``; returns the file's sha256."""
    data = to_bytes(model)
    atomic_write(path, data)
    atomic_write(str(path) + ".manifest", manifest_text(model, data))
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path) -> OneNet:
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err.strerror}") from None
    return from_bytes(data)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_bundle(models, out_dir, variant) -> dict:
    """Write every network of a :class:`VariantModels` plus ``bundle.json``.

    Returns ``{file name: sha256}``.
    """
    from .evaluator import parse_variant

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digests, index = {}, {}
    for key, model in models.all_models().items():
        name = f"{key}.ckpt"
        digests[name] = save_checkpoint(model, out / name)
        index[key] = name
    atomic_write(out / "bundle.json", json.dumps({"variant": parse_variant(variant).value, "models": index},
                                                 indent=2, sort_keys=True) + "\n")
    return digests


def load_bundle(path):
    """Load a bundle directory (or a single checkpoint as a joint model)."""
    from .evaluator import VariantModels

    path = Path(path)
    models = VariantModels()
    if path.is_file():
        models.joint = load_checkpoint(path)
        return models, "joint"
    index_path = path / "bundle.json"
    if not index_path.exists():
        raise CheckpointError(f"{path} has no bundle.json")
    index = json.loads(index_path.read_text())
    for key, name in index["models"].items():
        model = load_checkpoint(path / name)
        if key.startswith("per_domain."):
            models.per_domain[key.split(".", 1)[1]] = model
        else:
            setattr(models, key, model)
    return models, index["variant"]
