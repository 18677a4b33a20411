"""Renyi-DP accounting for the deployed mechanisms.

Closed-form per-query RDP curves for the Gaussian and Laplace mechanisms,
entry-wise composition, conversion to (epsilon, delta), noise calibration
against a target budget, and an empirical epsilon estimator that tests the
DP inequality directly on a mechanism's output distributions.

Accounting here is data independent: each labeling query is charged its
worst-case per-query cost and costs compose additively over queries. The
K/(2*epsilon) convenience mapping used in reporting is exposed separately
and is *not* what the accountant certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (GridMismatch, InsufficientMass, InvalidDelta, InvalidOrder,
                     InvalidScale, NoConvergence)
from .mechanisms import GAUSSIAN, LAPLACE, NoiseSpec
from .streams import derive_rng

DEFAULT_ORDERS = (1.25, 1.5, 2.0, 3.0, 4.0, 8.0, 16.0, 32.0, 64.0, 256.0, 1024.0)
DEFAULT_DELTA = 1e-3

# Per-query sensitivities of one relabeling release at utterance
# granularity: moving one teacher's vote shifts two histogram bins by 1
# (L1 = 2, L2 = sqrt(2)); swapping one teacher's posterior row moves at
# most total variation 1 in and out (same norms).
VOTE_L1_SENSITIVITY = 2.0
VOTE_L2_SENSITIVITY = math.sqrt(2.0)


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) pair. epsilon may be math.inf for non-private runs."""

    epsilon: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.epsilon < 0 or math.isnan(self.epsilon):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class RdpCurve:
    """RDP epsilon at each Renyi order; composition is entry-wise addition."""

    orders: tuple
    epsilons: tuple

    def __post_init__(self):
        orders = tuple(float(a) for a in self.orders)
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "epsilons", eps)
        if len(orders) != len(eps) or not orders:
            raise ValueError("orders and epsilons must be same nonzero length")
        if any(a <= 1 for a in orders):
            raise InvalidOrder("all orders must exceed 1")
        if any(b <= a for a, b in zip(orders, orders[1:])) and len(orders) > 1:
            raise ValueError("orders must be strictly increasing")
        if any(e < 0 for e in eps):
            raise ValueError("rdp epsilons must be non-negative")

    def scaled(self, k: int) -> "RdpCurve":
        return RdpCurve(self.orders, tuple(k * e for e in self.epsilons))


def rdp_gaussian(sigma: float, sensitivity: float, alpha: float) -> float:
    """RDP of the Gaussian mechanism: alpha * Delta^2 / (2 sigma^2)."""
    if alpha <= 1:
        raise InvalidOrder(f"alpha must exceed 1, got {alpha}")
    if sigma <= 0:
        raise InvalidScale(f"sigma must be positive, got {sigma}")
    if sensitivity < 0:
        raise ValueError("sensitivity must be >= 0")
    return alpha * sensitivity**2 / (2.0 * sigma**2)


def rdp_laplace(b: float, sensitivity: float, alpha: float) -> float:
    """RDP of the Laplace mechanism at order alpha.

    (1/(a-1)) * log[ a/(2a-1) * e^{(a-1)D/b} + (a-1)/(2a-1) * e^{-aD/b} ],
    evaluated in log space so large exponents do not overflow.
    """
    if alpha <= 1:
        raise InvalidOrder(f"alpha must exceed 1, got {alpha}")
    if b <= 0:
        raise InvalidScale(f"scale must be positive, got {b}")
    if sensitivity < 0:
        raise ValueError("sensitivity must be >= 0")
    t = sensitivity / b
    term1 = math.log(alpha / (2.0 * alpha - 1.0)) + (alpha - 1.0) * t
    term2 = math.log((alpha - 1.0) / (2.0 * alpha - 1.0)) - alpha * t
    return max(float(np.logaddexp(term1, term2)) / (alpha - 1.0), 0.0)


def mechanism_curve(kind: str, scale: float, sensitivity: float,
                    orders=DEFAULT_ORDERS) -> RdpCurve:
    """Per-query RDP curve of one Laplace or Gaussian release."""
    if kind == GAUSSIAN:
        eps = [rdp_gaussian(scale, sensitivity, a) for a in orders]
    elif kind == LAPLACE:
        eps = [rdp_laplace(scale, sensitivity, a) for a in orders]
    else:
        raise ValueError(f"no RDP curve for noise kind {kind!r}")
    return RdpCurve(tuple(orders), tuple(eps))


def compose(curves) -> RdpCurve:
    """Entry-wise sum of curves defined on one shared order grid."""
    curves = list(curves)
    if not curves:
        raise ValueError("nothing to compose")
    grid = curves[0].orders
    for c in curves[1:]:
        if c.orders != grid:
            raise GridMismatch("curves use different order grids")
    total = np.sum([c.epsilons for c in curves], axis=0)
    return RdpCurve(grid, tuple(float(e) for e in total))


def rdp_to_dp(curve: RdpCurve, delta: float) -> float:
    """Best (epsilon, delta) conversion over the curve's orders."""
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    log_inv_delta = math.log(1.0 / delta)
    return min(e + log_inv_delta / (a - 1.0) for a, e in zip(curve.orders, curve.epsilons))


def spend(kind: str, scale: float, sensitivity: float, queries: int,
          delta: float = DEFAULT_DELTA, orders=DEFAULT_ORDERS) -> PrivacyBudget:
    """Budget spent by `queries` releases of one mechanism."""
    if queries < 0:
        raise ValueError("queries must be >= 0")
    if queries == 0:
        return PrivacyBudget(0.0, delta)
    if kind == "none" or scale <= 0:
        # Releasing without noise carries no guarantee.
        return PrivacyBudget(math.inf, delta)
    curve = mechanism_curve(kind, scale, sensitivity, orders).scaled(queries)
    return PrivacyBudget(rdp_to_dp(curve, delta), delta)


def calibrate_noise(target: PrivacyBudget, queries: int, kind: str,
                    sensitivity: float, orders=DEFAULT_ORDERS) -> NoiseSpec:
    """Smallest noise scale whose accounted epsilon over `queries` stays within target.

    Bisection on the scale, tightened to 1% relative slack; the returned
    scale is the smallest tested scale that satisfies the bound. Raises
    NoConvergence when even enormous noise cannot reach the target (the
    conversion term log(1/delta)/(alpha_max - 1) floors the achievable
    epsilon for any data-independent curve on this order grid).
    """
    if target.epsilon <= 0:
        raise ValueError("target epsilon must be positive")
    if queries < 1:
        raise ValueError("queries must be >= 1")

    def accounted(scale: float) -> float:
        return rdp_to_dp(mechanism_curve(kind, scale, sensitivity, orders).scaled(queries),
                         target.delta)

    hi = 1.0
    for _ in range(200):
        if accounted(hi) <= target.epsilon:
            break
        hi *= 2.0
    else:
        raise NoConvergence(
            f"no scale up to {hi:g} meets epsilon={target.epsilon} "
            f"(conversion floor {accounted(hi):.4g} at delta={target.delta})")
    lo = hi / 2.0
    if hi == 1.0:
        # 1.0 already satisfies; walk down to bracket from below.
        lo = 0.5
        while accounted(lo) <= target.epsilon and lo > 1e-30:
            hi = lo
            lo /= 2.0
        if lo <= 1e-30:
            return NoiseSpec(kind, hi)
    while hi / lo > 1.01:
        mid = math.sqrt(lo * hi)
        if accounted(mid) <= target.epsilon:
            hi = mid
        else:
            lo = mid
    return NoiseSpec(kind, hi)


def lambda_from_budget(queries: int, epsilon: float) -> float:
    """The K/(2*epsilon) reporting convention; not a calibrated noise scale."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if queries < 1:
        raise ValueError("queries must be >= 1")
    return queries / (2.0 * epsilon)


@dataclass(frozen=True)
class EmpiricalEpsilon:
    estimate: float
    stderr: float
    event_hits_a: tuple = field(repr=False, default=())
    event_hits_b: tuple = field(repr=False, default=())


def estimate_epsilon_empirical(mechanism, d, d_prime, num_events: int, trials: int,
                               seed: int = 0, delta: float = 0.0,
                               chunk: int = 200_000) -> EmpiricalEpsilon:
    """Empirical epsilon of a mechanism on a fixed neighboring input pair.

    ``mechanism(input, rng, n)`` must return n outcome indices in
    [0, num_events); the event partition is the outcome classes. The
    estimate is max_S log((Pr[M(d) in S] - delta) / Pr[M(d') in S]) over
    singleton events, with a delta correction matching the DP inequality,
    plus a delta-method standard error. A deterministic mechanism that
    separates the inputs yields math.inf.
    """
    if trials < 10**5:
        raise ValueError("need at least 1e5 trials for a stable estimate")
    hits_a = np.zeros(num_events, dtype=np.int64)
    hits_b = np.zeros(num_events, dtype=np.int64)
    rng_a = derive_rng(seed, 0)
    rng_b = derive_rng(seed, 1)
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        hits_a += np.bincount(mechanism(d, rng_a, n), minlength=num_events)
        hits_b += np.bincount(mechanism(d_prime, rng_b, n), minlength=num_events)
        done += n

    starved = (hits_a < 100) & (hits_b < 100)
    if np.any(starved):
        raise InsufficientMass(
            f"events {np.flatnonzero(starved).tolist()} have fewer than 100 hits under both inputs")

    p = hits_a / trials
    q = hits_b / trials
    best = -math.inf
    best_se = math.nan
    for e in range(num_events):
        mass = p[e] - delta
        if mass <= 0:
            continue
        if q[e] == 0:
            return EmpiricalEpsilon(math.inf, math.inf, tuple(hits_a), tuple(hits_b))
        ratio = math.log(mass / q[e])
        if ratio > best:
            best = ratio
            best_se = math.sqrt((1 - p[e]) / (trials * p[e]) + (1 - q[e]) / (trials * q[e]))
    if best == -math.inf:
        # Every event's mass fell below delta; the bound is vacuous.
        best, best_se = 0.0, 0.0
    return EmpiricalEpsilon(max(best, 0.0), best_se, tuple(hits_a), tuple(hits_b))


def accounting_report(kind: str, scale: float, sensitivity: float, queries: int,
                      delta: float, orders=DEFAULT_ORDERS) -> dict:
    """JSON-ready accounting summary for a relabeling run."""
    curve = mechanism_curve(kind, scale, sensitivity, orders).scaled(queries)
    epsilon = rdp_to_dp(curve, delta)
    return {
        "mechanism": kind,
        "scale": scale,
        "K": queries,
        "orders": list(curve.orders),
        "rdp": list(curve.epsilons),
        "epsilon": epsilon,
        "delta": delta,
        "lambda_paper": lambda_from_budget(queries, epsilon),
    }
