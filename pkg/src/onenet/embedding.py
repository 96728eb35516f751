"""Orthography-sensitive word representations.

Each token becomes the concatenation of the final forward and backward states
of a character BiLSTM (25 + 25) and a 100-d word embedding, in that order.
"""

from __future__ import annotations

import numpy as np

from .graph import ContractError, Graph, Node
from .layers import run_lstm

UNK = "<unk>"


class CharVocab:
    def __init__(self, chars=()):
        self.itos = [UNK]
        self.stoi = {UNK: 0}
        for ch in chars:
            if ch not in self.stoi:
                self.stoi[ch] = len(self.itos)
                self.itos.append(ch)

    def __len__(self):
        return len(self.itos)

    def index(self, ch: str) -> int:
        return self.stoi.get(ch, 0)

    def encode(self, word: str) -> list[int]:
        return [self.stoi.get(ch, 0) for ch in word]


class WordVocab:
    """Word index with an UNK entry at index 0.

    Lookup is case-sensitive with an optional lowercase fallback.  Words seen
    once in training (singletons) may be swapped for UNK during training with
    probability ``unk_replace_prob``.
    """

    def __init__(self, words=(), counts=None, unk_replace_prob=0.1, lowercase_fallback=True):
        self.itos = [UNK]
        self.stoi = {UNK: 0}
        self.pretrained: list[bool] = [False]
        self.counts = dict(counts or {})
        self.unk_replace_prob = unk_replace_prob
        self.lowercase_fallback = lowercase_fallback
        for w in words:
            self.add(w)

    def __len__(self):
        return len(self.itos)

    def add(self, word: str, pretrained=False) -> int:
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
            self.pretrained.append(pretrained)
        elif pretrained:
            self.pretrained[self.stoi[word]] = True
        return self.stoi[word]

    def index(self, word: str) -> int:
        idx = self.stoi.get(word)
        if idx is None and self.lowercase_fallback:
            idx = self.stoi.get(word.lower())
        return 0 if idx is None else idx

    def is_singleton(self, word: str) -> bool:
        return self.counts.get(word, 0) == 1


def load_pretrained(path, dim=100) -> dict:
    """Read a word-vector text file: ``token v1 ... v_dim`` per line."""
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            token, values = parts[0], [p for p in parts[1:] if p]
            if len(values) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values for {token!r}, got {len(values)}")
            try:
                vectors[token] = np.array([float(v) for v in values])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value in vector for {token!r}") from None
    return vectors


def apply_pretrained(word_vocab: WordVocab, vectors: dict) -> None:
    """Add pretrained words to the vocabulary (before parameter allocation)."""
    for word in vectors:
        word_vocab.add(word, pretrained=True)


def word_indices(word_vocab: WordVocab, tokens, rng=None) -> np.ndarray:
    idx = [word_vocab.index(t) for t in tokens]
    if rng is not None and word_vocab.unk_replace_prob > 0:
        for k, tok in enumerate(tokens):
            if word_vocab.is_singleton(tok) and rng.random() < word_vocab.unk_replace_prob:
                idx[k] = 0
    return np.array(idx, dtype=np.int64)


def char_batch(char_vocab: CharVocab, tokens):
    """Left-aligned character ids and a validity mask, both ``(n, max_len)``."""
    width = max(len(t) for t in tokens)
    ids = np.zeros((len(tokens), width), dtype=np.int64)
    mask = np.zeros((len(tokens), width))
    for k, tok in enumerate(tokens):
        ids[k, : len(tok)] = char_vocab.encode(tok)
        mask[k, : len(tok)] = 1.0
    return ids, mask


def embed_utterance(graph: Graph, model, tokens) -> Node:
    """Word representations for ``tokens`` as one ``(n, dim)`` node.

    ``dim`` is 150 with the character path and 100 without it.  Each row only
    depends on its own token.
    """
    if len(tokens) == 0:
        raise ContractError("cannot embed an empty utterance")
    if any(not tok for tok in tokens):
        raise ContractError("cannot embed an empty word")
    cfg = model.config
    unk_rng = graph.rng if graph.train else None
    words = graph.lookup(graph.param("word.emb"), word_indices(model.word_vocab, tokens, unk_rng))
    if not cfg.use_chars:
        return words
    ids, mask = char_batch(model.char_vocab, tokens)
    chars = graph.lookup(graph.param("char.emb"), ids)
    width = ids.shape[1]
    fwd = run_lstm(graph, chars, model.char_fwd, mask=mask)
    bwd = run_lstm(graph, chars, model.char_bwd, mask=mask, reverse=True)
    # padded steps carry the state, so the last column is the final forward
    # state and column 0 the final backward state
    last_fwd = graph.pick(fwd, (slice(None), width - 1))
    first_bwd = graph.pick(bwd, (slice(None), 0))
    return graph.concat([last_fwd, first_bwd, words], axis=-1)


def embed_word(graph: Graph, model, word: str) -> Node:
    """Representation of a single word as a vector node."""
    if not word:
        raise ContractError("cannot embed an empty word")
    v = embed_utterance(graph, model, [word])
    return graph.reshape(v, (v.value.shape[1],))
