"""Forward passes and hand-derived backward passes for the three architectures.

No autodiff: each architecture's backward is written out and guarded by
finite-difference checks in the test suite. Everything is float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch
from ._fast import encoder_deltas, encoder_forward
from .ctc import ctc_loss
from .params import CTC, FRAME, RNNT, ModelParams, views
from .rnnt import rnnt_loss


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_features(params: ModelParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims.feat:
        raise DimensionMismatch(
            f"features must be (T, {params.dims.feat}), got {x.shape}")
    return x


def _encoder_states(v: dict, x: np.ndarray) -> np.ndarray:
    """Tanh recurrence h_t = tanh(Wx x_t + Wh h_{t-1} + bh), h_{-1} = 0."""
    pre = x @ v["Wx"].T + v["bh"]
    return encoder_forward(pre, v["Wh"])


def _encoder_backward(v: dict, gv: dict, x: np.ndarray, hs: np.ndarray,
                      dh: np.ndarray) -> np.ndarray:
    """Accumulate encoder grads into gv; returns dL/dx."""
    deltas = encoder_deltas(np.ascontiguousarray(dh), hs,
                            np.ascontiguousarray(v["Wh"].T))
    h_prev = np.vstack([np.zeros((1, hs.shape[1])), hs[:-1]])
    gv["Wx"] += deltas.T @ x
    gv["Wh"] += deltas.T @ h_prev
    gv["bh"] += deltas.sum(axis=0)
    return deltas @ v["Wx"]


def frame_posteriors(params: ModelParams, features: np.ndarray):
    """Per-frame posteriors over the V+1 symbols, with a backward cache.

    For the transducer this is the joint posterior with an empty label
    context (its frame-level acoustic score); for the other two it is the
    model's output distribution.
    """
    x = _check_features(params, features)
    v = views(params.arch, params.dims, params.values)
    if params.arch == FRAME:
        logits = x @ v["W"].T + v["b"]
        cache = {"x": x, "v": v}
    elif params.arch == CTC:
        hs = _encoder_states(v, x)
        logits = hs @ v["Wo"].T + v["bo"]
        cache = {"x": x, "v": v, "hs": hs}
    elif params.arch == RNNT:
        hs = _encoder_states(v, x)
        g0 = np.tanh(v["bq"])
        logits = hs @ v["Wa"].T + v["Wb"] @ g0 + v["bo"]
        cache = {"x": x, "v": v, "hs": hs, "g0": g0}
    else:
        raise ValueError(f"unknown architecture {params.arch!r}")
    return softmax(logits), cache


def _frame_backward(params: ModelParams, cache: dict, dlogits: np.ndarray):
    """Map frame-level dL/dlogits to (flat parameter grad, dL/dx)."""
    grad = np.zeros_like(params.values)
    gv = views(params.arch, params.dims, grad)
    v, x = cache["v"], cache["x"]
    if params.arch == FRAME:
        gv["W"] += dlogits.T @ x
        gv["b"] += dlogits.sum(axis=0)
        dx = dlogits @ v["W"]
    elif params.arch == CTC:
        hs = cache["hs"]
        gv["Wo"] += dlogits.T @ hs
        gv["bo"] += dlogits.sum(axis=0)
        dx = _encoder_backward(v, gv, x, hs, dlogits @ v["Wo"])
    else:
        raise ValueError("frame-level backward is defined for frame/ctc archs only")
    return grad, dx


def _prediction_states(v: dict, labels: np.ndarray) -> np.ndarray:
    """Label recurrence g_0 = tanh(bq), g_u = tanh(Wy e(y_u) + Wq g_{u-1} + bq)."""
    U = labels.shape[0]
    H = v["bq"].shape[0]
    gs = np.empty((U + 1, H))
    g = np.tanh(v["bq"])
    gs[0] = g
    for u in range(1, U + 1):
        g = np.tanh(v["Wy"][:, labels[u - 1]] + v["Wq"] @ g + v["bq"])
        gs[u] = g
    return gs


def rnnt_lattice(params: ModelParams, features: np.ndarray, labels):
    """Joint posterior lattice (T, U+1, V+1) plus backward cache."""
    if params.arch != RNNT:
        raise DimensionMismatch("lattice forward requires the transducer architecture")
    x = _check_features(params, features)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= params.dims.vocab):
        raise DimensionMismatch("labels out of vocabulary range")
    v = views(params.arch, params.dims, params.values)
    hs = _encoder_states(v, x)
    gs = _prediction_states(v, labels)
    logits = (hs @ v["Wa"].T)[:, None, :] + (gs @ v["Wb"].T)[None, :, :] + v["bo"]
    cache = {"x": x, "v": v, "hs": hs, "gs": gs, "labels": labels}
    return softmax(logits), cache


def _rnnt_backward(params: ModelParams, cache: dict, dlogits: np.ndarray):
    grad = np.zeros_like(params.values)
    gv = views(params.arch, params.dims, grad)
    v, x, hs, gs, labels = cache["v"], cache["x"], cache["hs"], cache["gs"], cache["labels"]
    gv["Wa"] += np.einsum("tuj,th->jh", dlogits, hs)
    gv["Wb"] += np.einsum("tuj,uh->jh", dlogits, gs)
    gv["bo"] += dlogits.sum(axis=(0, 1))
    dh = np.einsum("tuj,jh->th", dlogits, v["Wa"])
    dg = np.einsum("tuj,jh->uh", dlogits, v["Wb"])
    # prediction recurrence BPTT
    U = gs.shape[0] - 1
    carry = np.zeros(gs.shape[1])
    WqT = v["Wq"].T
    for u in range(U, -1, -1):
        delta = (dg[u] + carry) * (1.0 - gs[u] * gs[u])
        if u >= 1:
            gv["Wy"][:, labels[u - 1]] += delta
            gv["Wq"] += np.outer(delta, gs[u - 1])
        gv["bq"] += delta
        carry = WqT @ delta
    dx = _encoder_backward(v, gv, x, hs, dh)
    return grad, dx


def _frame_ce(probs: np.ndarray, target):
    """Mean per-frame cross entropy; target is int labels (T,) or soft rows (T, J)."""
    T, J = probs.shape
    target = np.asarray(target)
    if target.ndim == 1:
        if target.shape[0] != T:
            raise DimensionMismatch("one frame label per frame required")
        hot = np.zeros((T, J))
        hot[np.arange(T), target.astype(int)] = 1.0
        target = hot
    elif target.shape != (T, J):
        raise DimensionMismatch(f"soft targets must be (T, {J})")
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    loss = -(target * np.where(target > 0, logp, 0.0)).sum() / T
    dlogits = (probs - target) / T
    return loss, dlogits


def loss_and_grad(params: ModelParams, features, target, loss_kind: str,
                  want_input_grad: bool = False):
    """Loss plus flat parameter gradient (optionally also dL/dfeatures).

    loss kinds: "ctc" and "rnnt" take a token sequence; "frame_ce" takes
    per-frame hard labels or soft rows over the V+1 symbols.
    """
    if loss_kind == "rnnt":
        lattice, cache = rnnt_lattice(params, features, target)
        loss, dlogits = rnnt_loss(lattice, cache["labels"])
        grad, dx = _rnnt_backward(params, cache, dlogits)
    elif loss_kind == "ctc":
        if params.arch == RNNT:
            raise DimensionMismatch("the transducer trains with the rnnt loss")
        probs, cache = frame_posteriors(params, features)
        loss, dlogits = ctc_loss(probs, np.asarray(target, dtype=np.int64))
        grad, dx = _frame_backward(params, cache, dlogits)
    elif loss_kind == "frame_ce":
        if params.arch == RNNT:
            raise DimensionMismatch("the transducer trains with the rnnt loss")
        probs, cache = frame_posteriors(params, features)
        loss, dlogits = _frame_ce(probs, target)
        grad, dx = _frame_backward(params, cache, dlogits)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    if want_input_grad:
        return loss, grad, dx
    return loss, grad


def sequence_nll(params: ModelParams, features, tokens) -> float:
    """Full-sum negative log probability of a token sequence under the model."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if params.arch == RNNT:
        lattice, cache = rnnt_lattice(params, features, tokens)
        loss, _ = rnnt_loss(lattice, cache["labels"])
        return loss
    probs, _ = frame_posteriors(params, features)
    loss, _ = ctc_loss(probs, tokens)
    return loss


def default_loss_kind(arch: str) -> str:
    return "rnnt" if arch == RNNT else "ctc"
