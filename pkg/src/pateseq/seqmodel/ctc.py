"""Alignment-free sequence loss over blank-augmented frame posteriors.

Log-space forward-backward over the extended label sequence
[blank, y1, blank, y2, ..., blank]. The blank symbol is the last posterior
column. Returns the exact gradient with respect to the pre-softmax logits
(valid whenever the posterior rows came from a softmax).
"""

from __future__ import annotations

import numpy as np

from ..errors import InfeasibleAlignment
from ._fast import ctc_forward_backward

NEG_INF = -np.inf


def min_frames(labels) -> int:
    """Fewest frames that admit any alignment: U plus one per adjacent repeat."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0
    return int(labels.size + np.sum(labels[1:] == labels[:-1]))


def collapse(frame_symbols, blank: int) -> np.ndarray:
    """Merge repeats, then strip blanks (the many-to-one alignment map)."""
    out = []
    prev = None
    for s in np.asarray(frame_symbols).tolist():
        if s != prev and s != blank:
            out.append(s)
        prev = s
    return np.asarray(out, dtype=np.int64)


def _extended(labels: np.ndarray, blank: int) -> np.ndarray:
    ext = np.full(2 * labels.size + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def ctc_loss(posteriors: np.ndarray, labels, blank: int | None = None):
    """Negative log total probability of all alignments collapsing to `labels`.

    Returns (loss, dloss/dlogits) with the gradient the same shape as the
    posterior matrix. Raises InfeasibleAlignment when the label sequence
    cannot fit in the available frames. Posteriors containing exact zeros
    on every alignment yield an infinite loss and a zero gradient.
    """
    probs = np.asarray(posteriors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    T, J = probs.shape
    if blank is None:
        blank = J - 1
    if min_frames(labels) > T:
        raise InfeasibleAlignment(
            f"{labels.size} labels (with repeats) cannot align to {T} frames")

    ext = _extended(labels, blank)
    L = ext.size
    with np.errstate(divide="ignore"):
        lp = np.log(probs)
    lpe = np.ascontiguousarray(lp[:, ext])  # (T, L) log prob of the extended symbols

    # Skip transitions s-2 -> s are allowed into non-blank symbols that
    # differ from the symbol two back.
    can_skip = np.zeros(L, dtype=bool)
    if L > 2:
        can_skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    alpha, beta, log_p = ctc_forward_backward(lpe, can_skip)
    if log_p == NEG_INF:
        return np.inf, np.zeros_like(probs)

    # State occupancies; each frame's occupancies sum to 1.
    with np.errstate(invalid="ignore"):
        log_gamma = alpha + beta - lpe - log_p
    log_gamma[np.isnan(log_gamma)] = NEG_INF
    gamma = np.exp(log_gamma)
    occ = np.zeros_like(probs)
    for s in range(L):
        occ[:, ext[s]] += gamma[:, s]
    return float(-log_p), probs - occ
