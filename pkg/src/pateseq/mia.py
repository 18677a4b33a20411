"""Model-inversion attack: reconstruct input features that maximize the
likelihood of a chosen target sequence, and quantify what they recover.

The attack drives the deployed (student) model only, mirroring a
query-access threat: each forward evaluation counts against a query
budget. Recovery is scored as cosine similarity between the standardized
reconstruction (mean-pooled per token segment) and the per-token class
mean template, a stand-in for eyeballing reconstructed spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleTarget, ZeroVector
from .seqmodel import ModelParams, default_loss_kind, loss_and_grad, min_frames
from .streams import derive_rng

INIT_ZEROS = "zeros"
INIT_RANDOM = "random"


@dataclass
class InversionResult:
    features: np.ndarray
    loglik_trace: list = field(default_factory=list)
    queries_used: int = 0


def invert(params: ModelParams, target_tokens, num_frames: int, steps: int = 150,
           step_size: float = 0.5, init: str = INIT_RANDOM, seed: int = 0,
           query_budget: int = 10_000, max_halvings: int = 20) -> InversionResult:
    """Gradient ascent on log p(target | x) with a backtracking line search.

    The trace is non-decreasing by construction: a step is only accepted
    after halving the step size (up to `max_halvings`) until the
    log-likelihood does not drop. Stops at `steps`, at the query budget,
    or when even the smallest step cannot improve.
    """
    tokens = np.asarray(target_tokens, dtype=np.int64)
    if min_frames(tokens) > num_frames:
        raise InfeasibleTarget(
            f"target of {tokens.size} tokens cannot align to {num_frames} frames")
    loss_kind = default_loss_kind(params.arch)
    F = params.dims.feat
    if init == INIT_ZEROS:
        x = np.zeros((num_frames, F))
    elif init == INIT_RANDOM:
        x = derive_rng(seed, 30).standard_normal((num_frames, F))
    else:
        raise ValueError(f"unknown init {init!r}")

    queries = 0

    def loglik_and_grad(feats):
        nonlocal queries
        queries += 1
        loss, _, dx = loss_and_grad(params, feats, tokens, loss_kind, want_input_grad=True)
        return -loss, -dx

    ll, grad = loglik_and_grad(x)
    trace = [ll]
    for _ in range(steps):
        if queries >= query_budget:
            break
        step = step_size
        improved = False
        for _ in range(max_halvings + 1):
            if queries >= query_budget:
                break
            candidate = x + step * grad
            cand_ll, cand_grad = loglik_and_grad(candidate)
            if cand_ll >= ll:
                x, ll, grad = candidate, cand_ll, cand_grad
                improved = True
                break
            step *= 0.5
        trace.append(ll)
        if not improved:
            break
    return InversionResult(x, trace, queries)


def pool_frames(features: np.ndarray, num_segments: int) -> np.ndarray:
    """Mean-pool frames into contiguous, near-equal segments."""
    T = features.shape[0]
    if num_segments < 1 or T < num_segments:
        raise ZeroVector(f"cannot pool {T} frames into {num_segments} segments")
    bounds = np.linspace(0, T, num_segments + 1).round().astype(int)
    return np.stack([features[a:b].mean(axis=0) for a, b in zip(bounds[:-1], bounds[1:])])


def _standardize(mat: np.ndarray) -> np.ndarray:
    mu = mat.mean(axis=0, keepdims=True)
    sd = mat.std(axis=0, keepdims=True)
    out = np.zeros_like(mat, dtype=np.float64)
    np.divide(mat - mu, sd, out=out, where=sd > 0)
    return out


def similarity(reconstruction: np.ndarray, reference: np.ndarray) -> float:
    """Cosine similarity of flattened, per-dimension-standardized matrices in [-1, 1].

    A reconstruction with more rows than the reference is mean-pooled per
    token segment first. Matrices with a single row skip standardization
    (it would zero them out).
    """
    recon = np.asarray(reconstruction, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if recon.shape[0] != ref.shape[0]:
        recon = pool_frames(recon, ref.shape[0])
    if recon.shape != ref.shape:
        raise ZeroVector(f"incompatible shapes {recon.shape} vs {ref.shape}")
    if ref.shape[0] > 1:
        recon = _standardize(recon)
        ref = _standardize(ref)
    a, b = recon.ravel(), ref.ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cannot compare an all-constant matrix")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def class_mean_template(class_means: np.ndarray, tokens) -> np.ndarray:
    """One row per target token: the emission mean of that token's class."""
    tokens = np.asarray(tokens, dtype=np.int64)
    return class_means[tokens]


@dataclass
class AttackRow:
    epsilon: float   # math.inf for the non-private model
    trial: int
    similarity: float
    final_loglik: float


@dataclass
class AttackSummary:
    epsilon: float
    mean_similarity: float
    stderr: float
    protected: bool | None  # None for the non-private reference row


def attack_report(models: dict, target_tokens, class_means: np.ndarray, num_frames: int,
                  trials: int = 5, steps: int = 150, step_size: float = 0.5,
                  seed: int = 0, query_budget: int = 10_000):
    """Attack every model `trials` times; flag DP models whose mean recovery
    drops below the non-private mean by more than two pooled standard errors.

    `models` maps epsilon (float, math.inf for the non-private reference)
    to ModelParams. Returns (rows, summaries) sorted by epsilon descending.
    """
    if trials < 5:
        raise ValueError("need at least 5 trials per model")
    if math.inf not in models:
        raise ValueError("attack_report needs the non-private reference model (key math.inf)")
    template = class_mean_template(class_means, target_tokens)
    rows = []
    stats = {}
    for eps in sorted(models, reverse=True):
        sims = []
        for trial in range(trials):
            res = invert(models[eps], target_tokens, num_frames, steps=steps,
                         step_size=step_size, init=INIT_RANDOM,
                         seed=derive_seed_for(eps, trial, seed), query_budget=query_budget)
            sim = similarity(res.features, template)
            sims.append(sim)
            rows.append(AttackRow(eps, trial, sim, res.loglik_trace[-1]))
        sims = np.asarray(sims)
        stats[eps] = (float(sims.mean()), float(sims.std(ddof=1) / math.sqrt(trials)))

    ref_mean, ref_se = stats[math.inf]
    summaries = []
    for eps in sorted(stats, reverse=True):
        mean, se = stats[eps]
        if eps == math.inf:
            protected = None
        else:
            pooled = math.hypot(se, ref_se)
            protected = mean < ref_mean - 2.0 * pooled
        summaries.append(AttackSummary(eps, mean, se, protected))
    return rows, summaries


def derive_seed_for(eps: float, trial: int, seed: int) -> int:
    """Stable per-(model, trial) seed; epsilon hashed via its IEEE bits."""
    bits = np.frombuffer(np.float64(eps).tobytes(), dtype=np.uint64)[0]
    return int(derive_rng(seed, 31, int(bits % (2**31)), trial).integers(2**63))
