"""Minibatch training loop, optimizers, and finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceDetected
from ..streams import derive_rng
from .network import loss_and_grad
from .params import ModelParams


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 0.02
    epochs: int = 12
    batch_size: int = 8
    shuffle: bool = True
    lr_schedule: str = "constant"  # "constant" | "cosine"
    weight_decay: float = 0.0
    feature_noise: float = 0.0     # train-time Gaussian jitter on input frames
    grad_clip: float = 0.0         # global-norm clip on the batch gradient; 0 = off
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def epoch_lr(self, epoch: int) -> float:
        if self.lr_schedule == "constant":
            return self.lr
        if self.lr_schedule == "cosine":
            return self.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / max(1, self.epochs)))
        raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list = field(default_factory=list)


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, values, grad):
        values -= self.lr * grad


class _Adam:
    def __init__(self, lr, beta1, beta2, eps, size):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, values, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        values -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(config: TrainConfig, size: int):
    if config.optimizer == "sgd":
        return _Sgd(config.lr)
    if config.optimizer == "adam":
        return _Adam(config.lr, config.adam_beta1, config.adam_beta2,
                     config.adam_eps, size)
    raise ValueError(f"unknown optimizer {config.optimizer!r}")


def epoch_batches(n: int, batch_size: int, rng=None):
    """Index batches for one epoch; shuffled when an rng is given."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_objective(params: ModelParams, samples, objective, config: TrainConfig,
                    seed: int, augment=None) -> TrainResult:
    """Generic loop: objective(params, sample) -> (loss, flat grad).

    Batch gradients are per-sample gradients summed in batch index order,
    then divided by the batch size, so runs are deterministic given the
    seed regardless of how callers parallelize sample gradient work.
    ``augment(sample, rng) -> sample`` is applied per draw when given.
    """
    if not samples:
        raise ValueError("training needs at least one sample")
    params = params.copy()
    opt = make_optimizer(config, params.values.size)
    rng = derive_rng(seed, 4)
    aug_rng = derive_rng(seed, 7)
    trace = []
    for epoch in range(config.epochs):
        opt.lr = config.epoch_lr(epoch)
        total = 0.0
        for batch in epoch_batches(len(samples), config.batch_size,
                                   rng if config.shuffle else None):
            grad_sum = np.zeros_like(params.values)
            loss_sum = 0.0
            for idx in batch:
                sample = samples[int(idx)]
                if augment is not None:
                    sample = augment(sample, aug_rng)
                loss, grad = objective(params, sample)
                loss_sum += loss
                grad_sum += grad
            if not np.isfinite(loss_sum):
                raise DivergenceDetected("non-finite training loss")
            mean_grad = grad_sum / batch.size
            if config.weight_decay:
                mean_grad = mean_grad + config.weight_decay * params.values
            if config.grad_clip:
                norm = float(np.linalg.norm(mean_grad))
                if norm > config.grad_clip:
                    mean_grad = mean_grad * (config.grad_clip / norm)
            opt.step(params.values, mean_grad)
            total += loss_sum
        trace.append(total / len(samples))
    return TrainResult(params, trace)


def feature_jitter(noise_std: float):
    """Augmentation for (features, target, ...) samples: fresh input jitter per draw."""

    def augment(sample, rng):
        feats = sample[0]
        return (feats + noise_std * rng.standard_normal(feats.shape),) + tuple(sample[1:])

    return augment


def train(params: ModelParams, dataset, loss_kind: str, config: TrainConfig,
          seed: int) -> TrainResult:
    """Train on (features, target) pairs with one of the built-in losses."""

    def objective(p, sample):
        features, target = sample
        return loss_and_grad(p, features, target, loss_kind)

    augment = feature_jitter(config.feature_noise) if config.feature_noise else None
    return train_objective(params, list(dataset), objective, config, seed, augment)


def grad_check(params: ModelParams, features, target, loss_kind: str, seed: int = 0,
               sample_fraction: float = 0.05, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks a random subsample of coordinates (at least 10) to keep large
    models affordable.
    """
    _, grad = loss_and_grad(params, features, target, loss_kind)
    n = params.values.size
    k = max(10, int(round(sample_fraction * n)))
    rng = derive_rng(seed, 5)
    coords = rng.choice(n, size=min(k, n), replace=False)
    worst = 0.0
    work = params.copy()
    for c in coords:
        orig = work.values[c]
        work.values[c] = orig + h
        up, _ = loss_and_grad(work, features, target, loss_kind)
        work.values[c] = orig - h
        down, _ = loss_and_grad(work, features, target, loss_kind)
        work.values[c] = orig
        fd = (up - down) / (2 * h)
        err = abs(fd - grad[c]) / max(1.0, abs(fd), abs(grad[c]))
        worst = max(worst, err)
    return worst
