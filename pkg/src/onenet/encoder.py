"""Shared word-level BiLSTM: ``h_i = forward_i ++ backward_i``."""

from __future__ import annotations

from .graph import ContractError, Graph, Node
from .layers import run_lstm


def encode(graph: Graph, model, v: Node) -> Node:
    """Contextual representations ``(n, 2 * word_hidden)`` for word vectors ``v`` of shape ``(n, dim)``."""
    if v.value.ndim != 2 or v.value.shape[0] < 1:
        raise ContractError(f"encode expects an (n, dim) node with n >= 1, got shape {v.value.shape}")
    expected = model.word_fwd.input_dim
    if v.value.shape[1] != expected:
        raise ContractError(f"encode: input dimension {v.value.shape[1]} != {expected}")
    n = v.value.shape[0]
    keep = model.config.dropout_keep
    v = graph.dropout(v, keep)
    seq = graph.reshape(v, (1, n, expected))
    fwd = run_lstm(graph, seq, model.word_fwd)
    bwd = run_lstm(graph, seq, model.word_bwd, reverse=True)
    hidden = model.word_fwd.hidden
    h = graph.concat(
        [graph.reshape(fwd, (n, hidden)), graph.reshape(bwd, (n, hidden))], axis=-1
    )
    return graph.dropout(h, keep)
