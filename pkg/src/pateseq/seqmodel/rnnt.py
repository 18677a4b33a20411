"""Transducer loss: dynamic programming over the (time, label) lattice.

A path sits at node (t, u); emitting blank consumes frame t and moves to
(t+1, u), emitting the next label moves to (t, u+1), and every path ends
with a blank at (T-1, U). The loss is the negative log sum over all such
monotone paths; the gradient is with respect to the lattice logits.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch
from ._fast import rnnt_forward_backward

NEG_INF = -np.inf


def rnnt_loss(lattice: np.ndarray, labels):
    """(loss, dloss/dlattice_logits) for a (T, U+1, V+1) posterior lattice."""
    probs = np.asarray(lattice, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 3:
        raise DimensionMismatch("lattice must be (T, U+1, V+1)")
    T, U1, J = probs.shape
    U = labels.size
    if U1 != U + 1:
        raise DimensionMismatch(f"lattice has {U1} label rows but {U} labels")
    if U and (labels.min() < 0 or labels.max() >= J - 1):
        raise DimensionMismatch("labels out of range for the lattice")
    blank = J - 1

    with np.errstate(divide="ignore"):
        lpb = np.ascontiguousarray(np.log(probs[:, :, blank]))   # (T, U+1)
        if U:
            lpy = np.ascontiguousarray(
                np.log(probs[np.arange(T)[:, None], np.arange(U)[None, :], labels[None, :]]))
        else:
            lpy = np.zeros((T, 0))

    alpha, beta, log_p = rnnt_forward_backward(lpb, lpy)
    if log_p == NEG_INF:
        return np.inf, np.zeros_like(probs)

    # Emission occupancies: probability a path emits blank / the next
    # label at each node. dL/dz = p * (node visit prob) - occupancy.
    occ = np.zeros_like(probs)
    blank_future = np.full((T, U + 1), NEG_INF)
    blank_future[:-1] = beta[1:]
    blank_future[T - 1, U] = 0.0
    with np.errstate(invalid="ignore"):
        occ_b = np.exp(alpha + lpb + blank_future - log_p)
    occ_b[np.isnan(occ_b)] = 0.0
    occ[:, :, blank] = occ_b
    if U:
        with np.errstate(invalid="ignore"):
            occ_y = np.exp(alpha[:, :-1] + lpy + beta[:, 1:] - log_p)
        occ_y[np.isnan(occ_y)] = 0.0
        occ[np.arange(T)[:, None], np.arange(U)[None, :], labels[None, :]] += occ_y

    visit = occ.sum(axis=2, keepdims=True)
    return float(-log_p), probs * visit - occ
