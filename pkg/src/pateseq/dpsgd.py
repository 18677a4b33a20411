"""Differentially private SGD baseline: per-example clipping, Gaussian noise,
and budget-aware training that refuses to exceed its target.

Accounting composes the Gaussian mechanism over steps with full
participation (no subsampling amplification), so the reported epsilon is
valid but conservative. Spent budget depends only on (noise multiplier,
steps, delta), never on data or seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import accountant
from .accountant import DEFAULT_DELTA, PrivacyBudget, mechanism_curve, rdp_to_dp
from .errors import BudgetExhaustedBeforeOneEpoch
from .mechanisms import GAUSSIAN, NoiseSpec, noise_vector
from .seqmodel import ModelParams, TrainConfig, loss_and_grad
from .seqmodel.train import epoch_batches
from .streams import derive_rng


@dataclass
class DpSgdConfig:
    clip_norm: float = 1.0
    noise_multiplier: float = 1.0   # noise std = multiplier * clip_norm
    lr: float = 0.05
    epochs: int = 3
    batch_size: int = 16
    target: PrivacyBudget | None = None
    shuffle: bool = True

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise ValueError("clip norm must be positive")
        if self.noise_multiplier < 0:
            raise ValueError("noise multiplier must be >= 0")


@dataclass
class DpSgdResult:
    params: ModelParams
    spent: PrivacyBudget
    epoch_losses: list = field(default_factory=list)
    steps_taken: int = 0
    stopped_early: bool = False


def clip_gradient(grad: np.ndarray, clip_norm: float) -> np.ndarray:
    """Rescale to at most clip_norm in L2; unchanged (bit-exact) below it."""
    norm = float(np.linalg.norm(grad))
    return grad * min(1.0, clip_norm / norm) if norm > clip_norm else grad


def dpsgd_step(per_example_grads, config: DpSgdConfig, rng) -> np.ndarray:
    """-lr * (sum of clipped grads + N(0, (multiplier*C)^2 I)) / batch."""
    if not len(per_example_grads):
        raise ValueError("a step needs at least one example gradient")
    total = np.zeros_like(per_example_grads[0])
    for g in per_example_grads:
        total += clip_gradient(g, config.clip_norm)
    if config.noise_multiplier > 0:
        spec = NoiseSpec(GAUSSIAN, config.noise_multiplier * config.clip_norm)
        total = total + noise_vector(spec, rng, total.size)
    # Association matches the plain SGD step bit for bit when noise is off.
    return -(config.lr * (total / len(per_example_grads)))


def epsilon_after(steps: int, noise_multiplier: float, delta: float = DEFAULT_DELTA) -> float:
    """Accounted epsilon after `steps` full-participation noisy steps."""
    if steps == 0:
        return 0.0
    if noise_multiplier == 0:
        return math.inf
    curve = mechanism_curve(GAUSSIAN, noise_multiplier, 1.0).scaled(steps)
    return rdp_to_dp(curve, delta)


def calibrate_multiplier(target: PrivacyBudget, steps: int) -> float:
    """Noise multiplier whose accounted epsilon over `steps` meets the target."""
    return accountant.calibrate_noise(target, steps, GAUSSIAN, 1.0).scale


def dpsgd_train(dataset, params: ModelParams, loss_kind: str, config: DpSgdConfig,
                seed: int) -> DpSgdResult:
    """Train under the budget; stops before any step that would exceed it.

    Raises BudgetExhaustedBeforeOneEpoch when not even the first epoch
    fits, which signals a misconfigured (too small) noise multiplier for
    the target rather than a meaningful training run.
    """
    samples = list(dataset)
    if not samples:
        raise ValueError("training needs at least one sample")
    params = params.copy()
    delta = config.target.delta if config.target is not None else DEFAULT_DELTA
    rng = derive_rng(seed, 4)          # same shuffle stream as the plain loop
    noise_rng = derive_rng(seed, 6)
    steps_per_epoch = math.ceil(len(samples) / config.batch_size)

    steps = 0
    stopped = False
    trace = []
    for _ in range(config.epochs):
        if stopped:
            break
        total = 0.0
        seen = 0
        for batch in epoch_batches(len(samples), config.batch_size,
                                   rng if config.shuffle else None):
            if config.target is not None and \
                    epsilon_after(steps + 1, config.noise_multiplier, delta) > config.target.epsilon:
                stopped = True
                if steps < steps_per_epoch:
                    raise BudgetExhaustedBeforeOneEpoch(
                        f"budget epsilon={config.target.epsilon} allows only {steps} of the "
                        f"{steps_per_epoch} steps in the first epoch")
                break
            grads = []
            for idx in batch:
                feats, target = samples[int(idx)]
                loss, grad = loss_and_grad(params, feats, target, loss_kind)
                total += loss
                grads.append(grad)
            seen += batch.size
            params.values += dpsgd_step(grads, config, noise_rng)
            steps += 1
        if seen:
            trace.append(total / seen)
    spent = PrivacyBudget(epsilon_after(steps, config.noise_multiplier, delta), delta)
    return DpSgdResult(params, spent, trace, steps, stopped)
