"""Randomized primitives: Laplace/Gaussian sampling, noisy argmax, noisy posterior aggregation.

All routines are pure given an explicit ``numpy.random.Generator``; callers
own their streams (see :mod:`pateseq.streams`). Sampling is not
cryptographic and does not defend against floating-point attacks on DP
(e.g. snapping); this is a known limitation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidWeights

LAPLACE = "laplace"
GAUSSIAN = "gaussian"
NONE = "none"

_KINDS = (LAPLACE, GAUSSIAN, NONE)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise description.

    ``scale`` is the Laplace scale b or the Gaussian standard deviation,
    in the units of the perturbed quantity. ``kind="none"`` or
    ``scale=0`` means no noise at all (bit-identical to the noiseless
    formula, no stream consumption).
    """

    kind: str
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not np.isfinite(self.scale) or self.scale < 0:
            raise ValueError(f"noise scale must be finite and >= 0, got {self.scale}")

    @property
    def is_null(self) -> bool:
        return self.kind == NONE or self.scale == 0.0

    @staticmethod
    def none() -> "NoiseSpec":
        return NoiseSpec(NONE, 0.0)


@dataclass(frozen=True)
class VoteHistogram:
    """Per-class vote counts from an ensemble of teachers."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if len(counts) < 2:
            raise ValueError("a vote histogram needs at least 2 classes")
        if any(c < 0 for c in counts):
            raise ValueError("vote counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @staticmethod
    def from_votes(votes, num_classes: int) -> "VoteHistogram":
        counts = np.bincount(np.asarray(votes, dtype=int), minlength=num_classes)
        return VoteHistogram(tuple(int(c) for c in counts))


def noise_vector(spec: NoiseSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """n i.i.d. draws per ``spec``. Null specs return exact zeros and draw nothing."""
    if spec.is_null:
        return np.zeros(n)
    if spec.kind == LAPLACE:
        # Inverse CDF from one uniform per draw: reproducible and platform
        # stable. The clamp keeps u=0 from mapping to -inf.
        u = rng.random(n) - 0.5
        return -spec.scale * np.sign(u) * np.log1p(-np.minimum(2.0 * np.abs(u), 1.0 - 1e-16))
    return spec.scale * rng.standard_normal(n)


def sample_noise(spec: NoiseSpec, rng: np.random.Generator) -> float:
    """One draw from Laplace(0, b) or Normal(0, sigma^2); exactly 0 for null specs."""
    if spec.is_null:
        return 0.0
    return float(noise_vector(spec, rng, 1)[0])


def noisy_max(votes: VoteHistogram, spec: NoiseSpec, rng: np.random.Generator) -> int:
    """argmax_j(counts[j] + Y_j) with i.i.d. Y_j; zero noise breaks ties toward the lowest index."""
    counts = np.asarray(votes.counts, dtype=float)
    return int(np.argmax(counts + noise_vector(spec, rng, counts.size)))


def noisy_max_batch(votes: VoteHistogram, spec: NoiseSpec, rng: np.random.Generator,
                    trials: int) -> np.ndarray:
    """Vectorized ``noisy_max``: one outcome per trial, fresh noise each trial."""
    counts = np.asarray(votes.counts, dtype=float)
    if spec.is_null:
        return np.full(trials, int(np.argmax(counts)), dtype=np.int64)
    noise = noise_vector(spec, rng, trials * counts.size).reshape(trials, counts.size)
    return np.argmax(counts[None, :] + noise, axis=1)


def noisy_aggregate_posterior(posteriors, weights, spec: NoiseSpec,
                              rng: np.random.Generator) -> np.ndarray:
    """Weighted average of per-teacher posteriors with one fresh noise vector per teacher.

    The raw noisy mixture can leave the simplex; negative entries are
    clipped to 0 and the result renormalized to sum 1. If everything
    clips away, falls back to the noiseless weighted average. With a
    null spec the output equals the plain weighted average exactly.
    """
    rows = [np.asarray(p, dtype=float) for p in posteriors]
    length = rows[0].size
    if any(r.size != length for r in rows):
        raise DimensionMismatch("teacher posteriors must share one length")
    w = np.asarray(weights, dtype=float)
    if w.size != len(rows):
        raise InvalidWeights(f"{len(rows)} teachers but {w.size} weights")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidWeights("weights must be non-negative and sum to 1")

    stack = np.stack(rows)
    clean = w @ stack
    if spec.is_null:
        return clean
    noise = np.empty_like(stack)
    for i in range(stack.shape[0]):
        noise[i] = noise_vector(spec, rng, length)
    mixed = w @ (stack + noise)
    clipped = np.maximum(mixed, 0.0)
    total = clipped.sum()
    if total <= 0.0:
        return clean
    return clipped / total
