"""A small dynamic computation graph with reverse-mode differentiation.

Nodes are evaluated eagerly as they are added (when all of their inputs have
values), so a graph is built and run in one pass per utterance, DyNet style.
:func:`forward` re-evaluates an existing graph in topological order and
:func:`backward` accumulates gradients from a scalar loss.

Parameter nodes alias the tensors of a :class:`~onenet.params.ParameterStore`
and accumulate their gradients directly into the store's gradient buffer.
"""

from __future__ import annotations

import numpy as np

from . import crf as crf_math


class ContractError(ValueError):
    """A graph operation was called with arguments violating its contract."""


class EvaluationError(RuntimeError):
    """A node could not be evaluated (e.g. an input was never assigned)."""


class Node:
    __slots__ = ("id", "op", "inputs", "attrs", "value", "grad", "cache", "name")

    def __init__(self, id, op, inputs, attrs, name=None):
        self.id = id
        self.op = op
        self.inputs = inputs
        self.attrs = attrs
        self.value = None
        self.grad = None
        self.cache = None
        self.name = name

    @property
    def shape(self):
        return None if self.value is None else self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node {self.id} {self.op}{label} shape={self.shape}>"


def _acc(node, g):
    if node.grad is None:
        node.grad = np.array(g, dtype=node.value.dtype).reshape(node.value.shape)
    else:
        node.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _lse(x):
    m = np.max(x, axis=-1, keepdims=True)
    return np.squeeze(np.log(np.sum(np.exp(x - m), axis=-1, keepdims=True)) + m, axis=-1)


# --- op kernels -------------------------------------------------------------
# Each op is a (forward, backward) pair.  forward(node) sets node.value (and
# optionally node.cache); backward(node, g) accumulates into node.inputs.


def _fwd_leaf(node):
    if node.value is None:
        raise EvaluationError(f"input node {node.name or node.id!r} has no value assigned")


def _fwd_matvec(node):
    w, x = node.inputs
    node.value = x.value @ w.value.T


def _bwd_matvec(node, g):
    w, x = node.inputs
    xv = x.value
    if xv.ndim == 1:
        _acc(w, np.outer(g, xv))
    else:
        _acc(w, g.reshape(-1, g.shape[-1]).T @ xv.reshape(-1, xv.shape[-1]))
    _acc(x, g @ w.value)


def _fwd_add(node):
    a, b = node.inputs
    node.value = a.value + b.value


def _bwd_add(node, g):
    a, b = node.inputs
    _acc(a, _unbroadcast(g, a.value.shape))
    _acc(b, _unbroadcast(g, b.value.shape))


def _fwd_mul(node):
    a, b = node.inputs
    node.value = a.value * b.value


def _bwd_mul(node, g):
    a, b = node.inputs
    _acc(a, _unbroadcast(g * b.value, a.value.shape))
    _acc(b, _unbroadcast(g * a.value, b.value.shape))


def _fwd_negate(node):
    node.value = -node.inputs[0].value


def _bwd_negate(node, g):
    _acc(node.inputs[0], -g)


def _fwd_scalar_add(node):
    node.value = node.inputs[0].value + node.attrs["c"]


def _bwd_scalar_add(node, g):
    _acc(node.inputs[0], g)


def _fwd_concat(node):
    node.value = np.concatenate([x.value for x in node.inputs], axis=node.attrs["axis"])


def _bwd_concat(node, g):
    axis = node.attrs["axis"]
    sizes = [x.value.shape[axis] for x in node.inputs]
    for x, part in zip(node.inputs, np.split(g, np.cumsum(sizes)[:-1], axis=axis)):
        _acc(x, part)


def _fwd_tanh(node):
    node.value = np.tanh(node.inputs[0].value)


def _bwd_tanh(node, g):
    _acc(node.inputs[0], g * (1.0 - node.value**2))


def _fwd_sigmoid(node):
    node.value = _sigmoid(node.inputs[0].value)


def _bwd_sigmoid(node, g):
    _acc(node.inputs[0], g * node.value * (1.0 - node.value))


def _fwd_sum(node):
    node.value = np.asarray(np.sum(node.inputs[0].value, axis=node.attrs["axis"]))


def _bwd_sum(node, g):
    x = node.inputs[0]
    axis = node.attrs["axis"]
    if axis is None:
        _acc(x, np.broadcast_to(g, x.value.shape))
    else:
        _acc(x, np.broadcast_to(np.expand_dims(g, axis), x.value.shape))


def _fwd_logsumexp(node):
    node.value = np.asarray(_lse(node.inputs[0].value))


def _bwd_logsumexp(node, g):
    x = node.inputs[0]
    soft = np.exp(x.value - np.expand_dims(node.value, -1))
    _acc(x, np.expand_dims(g, -1) * soft)


def _fwd_pick(node):
    x = node.inputs[0].value
    node.value = np.array(x[node.attrs["index"]], dtype=x.dtype)


def _bwd_pick(node, g):
    x = node.inputs[0]
    if x.grad is None:
        x.grad = np.zeros_like(x.value)
    x.grad[node.attrs["index"]] += g


def _fwd_reshape(node):
    node.value = node.inputs[0].value.reshape(node.attrs["shape"])


def _bwd_reshape(node, g):
    x = node.inputs[0]
    _acc(x, g.reshape(x.value.shape))


def _fwd_dropout(node):
    node.value = node.inputs[0].value * node.attrs["mask"]


def _bwd_dropout(node, g):
    _acc(node.inputs[0], g * node.attrs["mask"])


def _fwd_lookup(node):
    node.value = node.inputs[0].value[node.attrs["indices"]]


def _bwd_lookup(node, g):
    table = node.inputs[0]
    if table.grad is None:
        table.grad = np.zeros_like(table.value)
    np.add.at(table.grad, node.attrs["indices"], g)


def _fwd_lstm(node):
    xs, w, b, h0, c0 = (n.value for n in node.inputs)
    mask = node.attrs["mask"]
    batch, steps, dim = xs.shape
    hidden = h0.shape[0]
    h = np.broadcast_to(h0, (batch, hidden)).copy()
    c = np.broadcast_to(c0, (batch, hidden)).copy()
    # input projections for every step at once; only h @ W_h stays in the loop
    xw = xs @ w[:, :dim].T + b
    wh_t = w[:, dim:].T
    dt = xw.dtype
    out = np.empty((batch, steps, hidden), dtype=dt)
    h_prev = np.empty((batch, steps, hidden), dtype=dt)
    c_prev = np.empty((batch, steps, hidden), dtype=dt)
    gates = np.empty((batch, steps, 3 * hidden), dtype=dt)
    cands = np.empty((batch, steps, hidden), dtype=dt)
    tcs = np.empty((batch, steps, hidden), dtype=dt)
    order = range(steps - 1, -1, -1) if node.attrs["reverse"] else range(steps)
    for t in order:
        z = xw[:, t] + h @ wh_t
        gate = _sigmoid(z[:, : 3 * hidden])
        cand = np.tanh(z[:, 3 * hidden :])
        c_new = gate[:, hidden : 2 * hidden] * c + gate[:, :hidden] * cand
        tc = np.tanh(c_new)
        h_new = gate[:, 2 * hidden :] * tc
        h_prev[:, t], c_prev[:, t] = h, c
        gates[:, t], cands[:, t], tcs[:, t] = gate, cand, tc
        if mask is None:
            c, h = c_new, h_new
        else:
            m = mask[:, t : t + 1]
            c = m * c_new + (1.0 - m) * c
            h = m * h_new + (1.0 - m) * h
        out[:, t] = h
    node.value = out
    node.cache = (h_prev, c_prev, gates, cands, tcs)


def _bwd_lstm(node, g):
    xs_n, w_n, b_n, h0_n, c0_n = node.inputs
    xs, w = xs_n.value, w_n.value
    mask = node.attrs["mask"]
    batch, steps, dim = xs.shape
    hidden = h0_n.value.shape[0]
    h_prev, c_prev, gates, cands, tcs = node.cache
    wh = w[:, dim:]
    dz_all = np.empty((batch, steps, 4 * hidden), dtype=w.dtype)
    dh = np.zeros((batch, hidden), dtype=w.dtype)
    dc = np.zeros((batch, hidden), dtype=w.dtype)
    order = range(steps) if node.attrs["reverse"] else range(steps - 1, -1, -1)
    for t in order:
        dh = dh + g[:, t]
        if mask is None:
            dh_new, dc_new = dh, dc
            dh_keep = dc_keep = 0.0
        else:
            m = mask[:, t : t + 1]
            dh_new, dc_new = m * dh, m * dc
            dh_keep, dc_keep = (1.0 - m) * dh, (1.0 - m) * dc
        gate, cand, tc = gates[:, t], cands[:, t], tcs[:, t]
        i, f, o = gate[:, :hidden], gate[:, hidden : 2 * hidden], gate[:, 2 * hidden :]
        dcn = dc_new + dh_new * o * (1.0 - tc * tc)
        dgate = np.concatenate([dcn * cand, dcn * c_prev[:, t], dh_new * tc], axis=1)
        dz = dz_all[:, t]
        dz[:, : 3 * hidden] = dgate * gate * (1.0 - gate)
        dz[:, 3 * hidden :] = dcn * i * (1.0 - cand * cand)
        dh = dz @ wh + dh_keep
        dc = dcn * f + dc_keep
    dz_flat = dz_all.reshape(-1, 4 * hidden)
    if w_n.grad is None:
        w_n.grad = np.zeros_like(w)
    w_n.grad[:, :dim] += dz_flat.T @ xs.reshape(-1, dim)
    w_n.grad[:, dim:] += dz_flat.T @ h_prev.reshape(-1, hidden)
    _acc(xs_n, dz_all @ w[:, :dim])
    _acc(b_n, dz_flat.sum(axis=0))
    _acc(h0_n, dh.sum(axis=0))
    _acc(c0_n, dc.sum(axis=0))


def _fwd_crf_log_partition(node):
    emissions, transitions = (n.value for n in node.inputs)
    phi = crf_math.potentials(emissions, transitions, node.attrs["mode"])
    _, _, log_z = crf_math.forward_backward(phi)
    node.value = np.asarray(log_z)


def _bwd_crf_log_partition(node, g):
    e_n, t_n = node.inputs
    emissions, transitions = e_n.value, t_n.value
    phi = crf_math.potentials(emissions, transitions, node.attrs["mode"])
    marg, _ = crf_math.pair_marginals(phi)
    marg *= g
    if node.attrs["mode"] == "additive":
        _acc(t_n, marg.sum(axis=0))
        _acc(e_n, marg.sum(axis=1))
    else:
        _acc(t_n, np.einsum("iab,ib->ab", marg, emissions))
        _acc(e_n, np.einsum("iab,ab->ib", marg, transitions))


def _fwd_crf_score(node):
    emissions, transitions = (n.value for n in node.inputs)
    node.value = np.asarray(
        crf_math.score_total(emissions, transitions, node.attrs["labels"], node.attrs["mode"])
    )


def _bwd_crf_score(node, g):
    e_n, t_n = node.inputs
    emissions, transitions = e_n.value, t_n.value
    num_labels = emissions.shape[1]
    de = np.zeros_like(emissions)
    dt = np.zeros_like(transitions)
    prev = num_labels
    for i, y in enumerate(node.attrs["labels"]):
        if node.attrs["mode"] == "additive":
            dt[prev, y] += g
            de[i, y] += g
        else:
            dt[prev, y] += g * emissions[i, y]
            de[i, y] += g * transitions[prev, y]
        prev = y
    _acc(e_n, de)
    _acc(t_n, dt)


OPS = {
    "input": (_fwd_leaf, None),
    "parameter": (_fwd_leaf, None),
    "matvec": (_fwd_matvec, _bwd_matvec),
    "add": (_fwd_add, _bwd_add),
    "mul": (_fwd_mul, _bwd_mul),
    "negate": (_fwd_negate, _bwd_negate),
    "scalar-add": (_fwd_scalar_add, _bwd_scalar_add),
    "concat": (_fwd_concat, _bwd_concat),
    "tanh": (_fwd_tanh, _bwd_tanh),
    "sigmoid": (_fwd_sigmoid, _bwd_sigmoid),
    "sum": (_fwd_sum, _bwd_sum),
    "log-sum-exp": (_fwd_logsumexp, _bwd_logsumexp),
    "pick": (_fwd_pick, _bwd_pick),
    "reshape": (_fwd_reshape, _bwd_reshape),
    "dropout": (_fwd_dropout, _bwd_dropout),
    "lookup": (_fwd_lookup, _bwd_lookup),
    "lstm": (_fwd_lstm, _bwd_lstm),
    "crf-log-partition": (_fwd_crf_log_partition, _bwd_crf_log_partition),
    "crf-score": (_fwd_crf_score, _bwd_crf_score),
}


class Graph:
    """Expression graph for one utterance.

    ``train`` enables dropout; masks are drawn from a generator seeded with
    ``seed`` so a graph is reproducible given its inputs and seed.
    """

    def __init__(self, store=None, train=False, seed=0, ops=None):
        self.store = store
        self.train = train
        self.rng = np.random.default_rng(seed)
        self.nodes: list[Node] = []
        self.ops = OPS if ops is None else ops
        # inputs follow the store's precision (float64 unless a checker asks otherwise)
        self.dtype = store.flat.dtype if store is not None and store.flat is not None else np.float64
        self._params: dict[str, Node] = {}

    def __len__(self):
        return len(self.nodes)

    def count(self, op: str) -> int:
        return sum(1 for n in self.nodes if n.op == op)

    def _add(self, op, inputs, name=None, **attrs) -> Node:
        for x in inputs:
            if not isinstance(x, Node):
                raise ContractError(f"{op}: inputs must be graph nodes, got {type(x).__name__}")
        node = Node(len(self.nodes), op, tuple(inputs), attrs, name)
        self.nodes.append(node)
        if inputs and all(x.value is not None for x in node.inputs):
            self.ops[op][0](node)
        return node

    # leaves

    def input(self, value=None, name=None) -> Node:
        node = self._add("input", (), name=name)
        if value is not None:
            node.value = np.asarray(value, dtype=self.dtype)
        return node

    def assign(self, node: Node, value) -> None:
        if node.op != "input":
            raise ContractError("only input nodes can be assigned")
        node.value = np.asarray(value, dtype=self.dtype)

    def param(self, name: str) -> Node:
        if self.store is None:
            raise ContractError("graph has no parameter store")
        if name not in self._params:
            node = self._add("parameter", (), name=name)
            node.value = self.store.values[name]
            node.grad = self.store.grads[name]
            self._params[name] = node
        return self._params[name]

    @property
    def parameter_nodes(self) -> dict[str, Node]:
        return dict(self._params)

    # ops

    def matvec(self, w, x):
        if w.value is not None and x.value is not None and w.value.shape[-1] != x.value.shape[-1]:
            raise ContractError(
                f"matvec: {w.name or 'matrix'} has {w.value.shape[-1]} columns, "
                f"input {x.name or x.id} has dimension {x.value.shape[-1]}"
            )
        return self._add("matvec", (w, x))

    def add(self, a, b):
        return self._add("add", (a, b))

    def mul(self, a, b):
        return self._add("mul", (a, b))

    def negate(self, a):
        return self._add("negate", (a,))

    def scalar_add(self, a, c: float):
        return self._add("scalar-add", (a,), c=float(c))

    def concat(self, xs, axis=-1):
        return self._add("concat", tuple(xs), axis=axis)

    def tanh(self, x):
        return self._add("tanh", (x,))

    def sigmoid(self, x):
        return self._add("sigmoid", (x,))

    def sum(self, x, axis=0):
        return self._add("sum", (x,), axis=axis)

    def logsumexp(self, x):
        return self._add("log-sum-exp", (x,))

    def pick(self, x, index):
        return self._add("pick", (x,), index=index)

    def slice(self, x, start, stop):
        return self._add("pick", (x,), index=(Ellipsis, slice(start, stop)))

    def reshape(self, x, shape):
        return self._add("reshape", (x,), shape=tuple(shape))

    def dropout(self, x, keep: float):
        if not self.train or keep >= 1.0:
            return x
        mask = (self.rng.random(x.value.shape) < keep) / keep
        return self._add("dropout", (x,), mask=mask, keep=keep)

    def lookup(self, table, indices):
        indices = np.asarray(indices, dtype=np.int64)
        size = table.value.shape[0]
        if indices.size and (indices.min() < 0 or indices.max() >= size):
            raise ContractError(f"lookup: index out of range for {table.name!r} with {size} rows")
        return self._add("lookup", (table,), indices=indices)

    def lstm(self, xs, w, b, h0, c0, mask=None, reverse=False):
        """Run an LSTM over ``xs`` of shape ``(batch, steps, dim)`` as one fused node.

        Steps where ``mask`` is 0 carry the previous state unchanged.  The
        output holds the hidden state after every step, shape
        ``(batch, steps, hidden)``.
        """
        hidden = h0.value.shape[0]
        dim = xs.value.shape[2]
        if w.value.shape != (4 * hidden, dim + hidden):
            raise ContractError(
                f"lstm: {w.name!r} has shape {w.value.shape}, expected {(4 * hidden, dim + hidden)}"
            )
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64)
        return self._add("lstm", (xs, w, b, h0, c0), mask=mask, reverse=bool(reverse))

    def crf_log_partition(self, emissions, transitions, mode="additive"):
        return self._add("crf-log-partition", (emissions, transitions), mode=mode)

    def crf_score(self, emissions, transitions, labels, mode="additive"):
        labels = [int(y) for y in labels]
        crf_math.check_labels(labels, emissions.value.shape[0], emissions.value.shape[1])
        return self._add("crf-score", (emissions, transitions), labels=labels, mode=mode)

    def forward(self):
        forward(self)
        return self

    def backward(self, loss, zero_grad=True):
        return backward(self, loss, zero_grad=zero_grad)


def forward(graph: Graph) -> list:
    """(Re)evaluate every node in topological order and return their values."""
    for node in graph.nodes:
        if node.op in ("input", "parameter"):
            _fwd_leaf(node)
        else:
            for x in node.inputs:
                if x.value is None:
                    raise EvaluationError(f"node {x.id} feeding {node.op} has no value")
            graph.ops[node.op][0](node)
    return [n.value for n in graph.nodes]


def backward(graph: Graph, loss: Node, zero_grad: bool = True) -> dict:
    """Backpropagate from scalar ``loss``; return gradients of parameter nodes by name.

    With ``zero_grad`` the parameter store's gradient buffer is cleared first,
    otherwise gradients add onto whatever is already there.
    """
    if loss.value is None:
        raise EvaluationError("forward has not been run for the loss node")
    if np.ndim(loss.value) != 0:
        raise ContractError(f"loss must be a scalar, got shape {np.shape(loss.value)}")
    if zero_grad and graph.store is not None:
        graph.store.zero_grad()
    for node in graph.nodes:
        if node.op != "parameter":
            node.grad = None
    loss.grad = np.ones((), dtype=loss.value.dtype)
    for node in reversed(graph.nodes[: loss.id + 1]):
        bwd = graph.ops[node.op][1]
        if node.grad is None or bwd is None:
            continue
        bwd(node, node.grad)
    for node in graph.nodes:
        if node.grad is None:
            node.grad = np.zeros_like(node.value)
    return {name: node.grad for name, node in graph._params.items()}
