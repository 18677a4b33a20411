"""Optional numba kernels for the recurrence and lattice loops.

Pure speed: each kernel mirrors the numpy reference implementation next to
it in this package. When numba is unavailable the package falls back to
the numpy paths; results agree to within the usual 1-ulp log-sum-exp
reassociation, and every correctness test runs against whichever path is
active.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

NEG_INF = -np.inf


@njit(cache=True)
def _lse(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


@njit(cache=True)
def encoder_forward(pre, Wh):
    T = pre.shape[0]
    H = pre.shape[1]
    hs = np.empty((T, H))
    h = np.zeros(H)
    for t in range(T):
        z = pre[t] + Wh @ h
        for i in range(H):
            h[i] = math.tanh(z[i])
        hs[t] = h
    return hs


@njit(cache=True)
def encoder_deltas(dh, hs, WhT):
    T = hs.shape[0]
    H = hs.shape[1]
    deltas = np.empty((T, H))
    carry = np.zeros(H)
    for t in range(T - 1, -1, -1):
        for i in range(H):
            deltas[t, i] = (dh[t, i] + carry[i]) * (1.0 - hs[t, i] * hs[t, i])
        carry = WhT @ deltas[t]
    return deltas


@njit(cache=True)
def ctc_forward_backward(lpe, can_skip):
    """alpha, beta (both emission-inclusive) and the total log probability."""
    T, L = lpe.shape
    alpha = np.full((T, L), NEG_INF)
    beta = np.full((T, L), NEG_INF)
    alpha[0, 0] = lpe[0, 0]
    if L > 1:
        alpha[0, 1] = lpe[0, 1]
    for t in range(1, T):
        for s in range(L):
            acc = alpha[t - 1, s]
            if s >= 1:
                acc = _lse(acc, alpha[t - 1, s - 1])
            if s >= 2 and can_skip[s]:
                acc = _lse(acc, alpha[t - 1, s - 2])
            alpha[t, s] = acc + lpe[t, s]
    if L > 1:
        log_p = _lse(alpha[T - 1, L - 1], alpha[T - 1, L - 2])
    else:
        log_p = alpha[T - 1, L - 1]

    beta[T - 1, L - 1] = lpe[T - 1, L - 1]
    if L > 1:
        beta[T - 1, L - 2] = lpe[T - 1, L - 2]
    for t in range(T - 2, -1, -1):
        for s in range(L - 1, -1, -1):
            acc = beta[t + 1, s]
            if s + 1 < L:
                acc = _lse(acc, beta[t + 1, s + 1])
            if s + 2 < L and can_skip[s + 2]:
                acc = _lse(acc, beta[t + 1, s + 2])
            beta[t, s] = acc + lpe[t, s]
    return alpha, beta, log_p


@njit(cache=True)
def rnnt_forward_backward(lpb, lpy):
    """alpha, beta over the (T, U+1) lattice and the total log probability."""
    T, U1 = lpb.shape
    U = U1 - 1
    alpha = np.full((T, U1), NEG_INF)
    beta = np.full((T, U1), NEG_INF)
    alpha[0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            acc = NEG_INF
            if t > 0:
                acc = alpha[t - 1, u] + lpb[t - 1, u]
            if u > 0:
                acc = _lse(acc, alpha[t, u - 1] + lpy[t, u - 1])
            alpha[t, u] = acc
    log_p = alpha[T - 1, U] + lpb[T - 1, U]

    beta[T - 1, U] = lpb[T - 1, U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            acc = NEG_INF
            if t < T - 1:
                acc = lpb[t, u] + beta[t + 1, u]
            if u < U:
                acc = _lse(acc, lpy[t, u] + beta[t, u + 1])
            beta[t, u] = acc
    return alpha, beta, log_p
