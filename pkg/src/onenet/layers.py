"""LSTM and feedforward building blocks on top of :mod:`onenet.graph`.

LSTM weights are stored as one matrix ``W`` of shape ``(4H, D + H)`` acting on
``[x; h]`` with gate blocks in the order input, forget, output, candidate,
plus a bias ``b`` and learned initial states ``h0``/``c0``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import ContractError, Graph, Node


@dataclass(frozen=True)
class LSTMWeights:
    prefix: str
    input_dim: int
    hidden: int

    @property
    def names(self):
        return tuple(f"{self.prefix}.{k}" for k in ("W", "b", "h0", "c0"))


def declare_lstm(store, prefix, input_dim, hidden, partition="shared") -> LSTMWeights:
    store.declare(f"{prefix}.W", (4 * hidden, input_dim + hidden), partition, "glorot")
    store.declare(f"{prefix}.b", (4 * hidden,), partition, "zeros")
    store.declare(f"{prefix}.h0", (hidden,), partition, "zeros")
    store.declare(f"{prefix}.c0", (hidden,), partition, "zeros")
    return LSTMWeights(prefix, input_dim, hidden)


def declare_dense(store, prefix, input_dim, output_dim, partition):
    store.declare(f"{prefix}.W", (output_dim, input_dim), partition, "glorot")
    store.declare(f"{prefix}.b", (output_dim,), partition, "zeros")


def dense(graph: Graph, prefix: str, x: Node) -> Node:
    """Single-layer feedforward map ``W x + b`` (no nonlinearity)."""
    return graph.add(graph.matvec(graph.param(f"{prefix}.W"), x), graph.param(f"{prefix}.b"))


def build_lstm_step(graph: Graph, x: Node, h_prev: Node, c_prev: Node, weights: LSTMWeights):
    """One LSTM step composed from primitive nodes; returns ``(h, c)``."""
    w = graph.param(f"{weights.prefix}.W")
    b = graph.param(f"{weights.prefix}.b")
    hidden = weights.hidden
    for node, expected, label in (
        (x, weights.input_dim, "x"),
        (h_prev, hidden, "h_prev"),
        (c_prev, hidden, "c_prev"),
    ):
        if node.value is not None and node.value.shape != (expected,):
            raise ContractError(
                f"{weights.prefix}: {label} has shape {node.value.shape}, expected ({expected},)"
            )
    if w.value.shape != (4 * hidden, weights.input_dim + hidden):
        raise ContractError(f"{w.name!r} has shape {w.value.shape}")
    z = graph.add(graph.matvec(w, graph.concat([x, h_prev])), b)
    i = graph.sigmoid(graph.slice(z, 0, hidden))
    f = graph.sigmoid(graph.slice(z, hidden, 2 * hidden))
    o = graph.sigmoid(graph.slice(z, 2 * hidden, 3 * hidden))
    g = graph.tanh(graph.slice(z, 3 * hidden, 4 * hidden))
    c = graph.add(graph.mul(f, c_prev), graph.mul(i, g))
    h = graph.mul(o, graph.tanh(c))
    return h, c


def run_lstm(graph: Graph, xs: Node, weights: LSTMWeights, mask=None, reverse=False) -> Node:
    """Fused LSTM over a ``(batch, steps, dim)`` node using the learned initial state."""
    params = [graph.param(n) for n in weights.names]
    return graph.lstm(xs, *params, mask=mask, reverse=reverse)
