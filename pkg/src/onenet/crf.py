"""Linear-chain CRF numerics on plain arrays.

Emissions have shape ``(n, L)``; transitions have shape ``(L + 1, L)`` where
row ``L`` holds the scores out of the internal START state.  The score of a
labeling is ``sum_i phi_i[y_{i-1}, y_i]`` with ``y_0 = START`` and

* additive:        ``phi_i[a, b] = T[a, b] + E[i, b]``
* multiplicative:  ``phi_i[a, b] = T[a, b] * E[i, b]``
"""

from __future__ import annotations

import numpy as np

SCORE_MODES = ("additive", "multiplicative")


def _check_mode(mode):
    if mode not in SCORE_MODES:
        raise ValueError(f"crf score mode must be one of {SCORE_MODES}, got {mode!r}")


def _as_float(a):
    a = np.asarray(a)
    # keep extended precision when given; everything else becomes float64
    return a if a.dtype == np.longdouble else a.astype(np.float64)


def potentials(emissions: np.ndarray, transitions: np.ndarray, mode: str = "additive") -> np.ndarray:
    """Pairwise log-potentials of shape ``(n, L + 1, L)``."""
    _check_mode(mode)
    emissions = _as_float(emissions)
    transitions = _as_float(transitions)
    n, num_labels = emissions.shape
    if transitions.shape != (num_labels + 1, num_labels):
        raise ValueError(
            f"transitions must have shape {(num_labels + 1, num_labels)}, got {transitions.shape}"
        )
    if mode == "additive":
        return transitions[None, :, :] + emissions[:, None, :]
    return transitions[None, :, :] * emissions[:, None, :]


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def forward_backward(phi: np.ndarray):
    """Return ``(alpha, beta, log_z)`` for potentials from :func:`potentials`."""
    n, _, num_labels = phi.shape
    start = num_labels
    alpha = np.empty((n, num_labels), dtype=phi.dtype)
    beta = np.zeros((n, num_labels), dtype=phi.dtype)
    alpha[0] = phi[0, start]
    for i in range(1, n):
        alpha[i] = _logsumexp(alpha[i - 1][:, None] + phi[i, :num_labels], axis=0)
    for i in range(n - 1, 0, -1):
        beta[i - 1] = _logsumexp(phi[i, :num_labels] + beta[i][None, :], axis=1)
    log_z = _logsumexp(alpha[-1], axis=0)[()]
    return alpha, beta, log_z


def log_partition(emissions, transitions, mode="additive") -> float:
    _, _, log_z = forward_backward(potentials(emissions, transitions, mode))
    return float(log_z)


def pair_marginals(phi: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient of log Z with respect to ``phi`` (pairwise posterior marginals)."""
    alpha, beta, log_z = forward_backward(phi)
    n, _, num_labels = phi.shape
    marg = np.zeros_like(phi)
    marg[0, num_labels] = np.exp(alpha[0] + beta[0] - log_z)
    for i in range(1, n):
        marg[i, :num_labels] = np.exp(
            alpha[i - 1][:, None] + phi[i, :num_labels] + beta[i][None, :] - log_z
        )
    return marg, log_z


def sequence_score(emissions, transitions, labels, mode="additive") -> float:
    return float(score_total(emissions, transitions, labels, mode))


def score_total(emissions, transitions, labels, mode="additive"):
    """Labeling score in the precision of the inputs."""
    _check_mode(mode)
    emissions = _as_float(emissions)
    transitions = _as_float(transitions)
    num_labels = emissions.shape[1]
    check_labels(labels, emissions.shape[0], num_labels)
    prev = num_labels
    total = emissions.dtype.type(0)
    for i, y in enumerate(labels):
        if mode == "additive":
            total += transitions[prev, y] + emissions[i, y]
        else:
            total += transitions[prev, y] * emissions[i, y]
        prev = y
    return total


def check_labels(labels, n, num_labels):
    if len(labels) != n:
        raise ValueError(f"expected {n} labels, got {len(labels)}")
    for i, y in enumerate(labels):
        if not 0 <= int(y) < num_labels:
            raise ValueError(f"label {y} at position {i} out of range [0, {num_labels})")


def viterbi(emissions, transitions, mode="additive") -> list[int]:
    """Max-scoring labeling; ties go to the lowest label index."""
    phi = potentials(emissions, transitions, mode)
    n, _, num_labels = phi.shape
    delta = phi[0, num_labels].copy()
    backptr = np.zeros((n, num_labels), dtype=np.int64)
    for i in range(1, n):
        cand = delta[:, None] + phi[i, :num_labels]
        # argmax returns the first maximum, i.e. the lowest index
        backptr[i] = np.argmax(cand, axis=0)
        delta = cand[backptr[i], np.arange(num_labels)]
    best = [int(np.argmax(delta))]
    for i in range(n - 1, 0, -1):
        best.append(int(backptr[i, best[-1]]))
    best.reverse()
    return best
