"""Greedy and N-best decoding.

Beam search proposes candidate token sequences; every returned hypothesis
is rescored with the exact full-sum sequence probability, so scores do not
depend on beam bookkeeping. Width 1 is exactly the greedy decode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import collapse, ctc_loss, min_frames
from .network import _encoder_states, frame_posteriors, softmax
from .params import RNNT, ModelParams, views


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    log_prob: float
    normalized_prob: float


def _finalize(scored: dict, width: int) -> list:
    """Sort candidates, keep the top width, attach a softmax over the kept list."""
    ranked = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))[:width]
    logs = np.array([s for _, s in ranked])
    norm = np.exp(logs - logs.max())
    norm /= norm.sum()
    return [Hypothesis(tok, float(s), float(p)) for (tok, s), p in zip(ranked, norm)]


def greedy_frame_symbols(params: ModelParams, features) -> np.ndarray:
    """Per-frame pre-collapse symbol (blank included) from a greedy decode."""
    if params.arch != RNNT:
        probs, _ = frame_posteriors(params, features)
        return probs.argmax(axis=1)
    return _rnnt_greedy(params, features)[1]


def greedy_decode(params: ModelParams, features) -> np.ndarray:
    """Most likely token per frame, collapsed; transducer walks its lattice."""
    if params.arch != RNNT:
        probs, _ = frame_posteriors(params, features)
        return collapse(probs.argmax(axis=1), params.dims.blank)
    return _rnnt_greedy(params, features)[0]


def nbest_from_posteriors(posteriors: np.ndarray, width: int) -> list:
    """CTC prefix beam over a (T, V+1) posterior matrix, exact rescoring."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    probs = np.asarray(posteriors, dtype=np.float64)
    T, J = probs.shape
    blank = J - 1
    greedy = tuple(collapse(probs.argmax(axis=1), blank).tolist())
    candidates = {greedy}
    if width > 1:
        candidates.update(_ctc_prefix_beam(probs, blank, width))
    scored = {}
    for tokens in candidates:
        if min_frames(tokens) > T:
            continue
        loss, _ = ctc_loss(probs, np.asarray(tokens, dtype=np.int64), blank)
        if np.isfinite(loss):
            scored[tokens] = -loss
    return _finalize(scored, width)


def _ctc_prefix_beam(probs: np.ndarray, blank: int, width: int) -> set:
    lp = np.log(np.maximum(probs, 1e-300))
    T, J = lp.shape
    beams = {(): (0.0, -np.inf)}  # prefix -> (log p ending in blank, ending in non-blank)
    seen = {()}
    for t in range(T):
        nxt = {}

        def add(prefix, b, nb):
            old_b, old_nb = nxt.get(prefix, (-np.inf, -np.inf))
            nxt[prefix] = (np.logaddexp(old_b, b), np.logaddexp(old_nb, nb))

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            add(prefix, total + lp[t, blank], -np.inf)
            for k in range(J - 1):
                ext = prefix + (k,)
                if prefix and prefix[-1] == k:
                    add(prefix, -np.inf, pnb + lp[t, k])
                    add(ext, -np.inf, pb + lp[t, k])
                else:
                    add(ext, -np.inf, total + lp[t, k])
        ranked = sorted(nxt.items(), key=lambda kv: -np.logaddexp(*kv[1]))[:width]
        beams = dict(ranked)
        seen.update(beams)
    return seen


def _joint_row(v: dict, enc_acts: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Log posteriors (T, J) for one prediction state across all frames."""
    logits = enc_acts + v["Wb"] @ g + v["bo"]
    return np.log(softmax(logits))


def _rnnt_greedy(params: ModelParams, features):
    v = views(params.arch, params.dims, params.values)
    x = np.asarray(features, dtype=np.float64)
    hs = _encoder_states(v, x)
    enc_acts = hs @ v["Wa"].T
    blank = params.dims.blank
    g = np.tanh(v["bq"])
    row = _joint_row(v, enc_acts, g)
    tokens = []
    frame_symbols = np.full(x.shape[0], blank, dtype=np.int64)
    emitted = 0
    for t in range(x.shape[0]):
        while True:
            k = int(row[t].argmax())
            if k == blank or emitted >= 2 * x.shape[0]:
                break
            tokens.append(k)
            frame_symbols[t] = k  # last non-blank emitted in this frame
            emitted += 1
            g = np.tanh(v["Wy"][:, k] + v["Wq"] @ g + v["bq"])
            row = _joint_row(v, enc_acts, g)
    return np.asarray(tokens, dtype=np.int64), frame_symbols


def _rnnt_nbest(params: ModelParams, features, width: int, max_labels: int | None = None) -> list:
    """Beam over label prefixes; each prefix keeps its exact forward row.

    The forward row of a prefix depends only on the prefix, so every
    complete-sequence score below is the exact full-sum probability;
    the beam only limits which prefixes get expanded.
    """
    v = views(params.arch, params.dims, params.values)
    x = np.asarray(features, dtype=np.float64)
    T = x.shape[0]
    V = params.dims.vocab
    blank = params.dims.blank
    if max_labels is None:
        max_labels = T
    hs = _encoder_states(v, x)
    enc_acts = hs @ v["Wa"].T

    g0 = np.tanh(v["bq"])
    row0 = _joint_row(v, enc_acts, g0)
    alpha0 = np.concatenate(([0.0], np.cumsum(row0[:-1, blank])))
    scored = {(): float(alpha0[T - 1] + row0[T - 1, blank])}
    frontier = [((), g0, row0, alpha0)]

    for _ in range(max_labels):
        expansions = []
        for prefix, g, row, alpha in frontier:
            for k in range(V):
                g2 = np.tanh(v["Wy"][:, k] + v["Wq"] @ g + v["bq"])
                row2 = _joint_row(v, enc_acts, g2)
                alpha2 = np.empty(T)
                acc = -np.inf
                for t in range(T):
                    if t > 0:
                        acc = acc + row2[t - 1, blank]
                    acc = np.logaddexp(acc, alpha[t] + row[t, k])
                    alpha2[t] = acc
                tokens = prefix + (k,)
                complete = float(alpha2[T - 1] + row2[T - 1, blank])
                scored[tokens] = complete
                potential = float(np.logaddexp.reduce(alpha2))
                expansions.append((max(complete, potential), tokens, g2, row2, alpha2))
        if not expansions:
            break
        expansions.sort(key=lambda item: -item[0])
        frontier = [(tok, g, row, alpha) for _, tok, g, row, alpha in expansions[:width]]
    return _finalize(scored, width)


def beam_search(source, width: int, features=None, max_labels: int | None = None) -> list:
    """N-best hypotheses from a posterior matrix or a model plus features.

    Returns at most `width` hypotheses, log_probs non-increasing,
    normalized_prob a softmax over the returned list.
    """
    if isinstance(source, ModelParams):
        if source.arch == RNNT:
            return _rnnt_nbest(source, features, width, max_labels)
        probs, _ = frame_posteriors(source, features)
        return nbest_from_posteriors(probs, width)
    return nbest_from_posteriors(np.asarray(source), width)
