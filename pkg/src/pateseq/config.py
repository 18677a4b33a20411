"""Experiment configuration: JSON schema, defaults, validation, hashing.

A config file is a JSON object whose sections mirror ExperimentConfig's
fields; omitted sections and keys fall back to the defaults below, and
unknown keys are rejected so typos fail loudly (exit code 2 in the CLI).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .seqmodel import TrainConfig


@dataclass
class CorpusConfig:
    vocab_size: int = 8
    feat_dim: int = 8
    frames_per_token: list = field(default_factory=lambda: [4, 12])
    token_len_range: list = field(default_factory=lambda: [2, 5])
    num_speakers: int = 24
    num_train: int = 1440
    num_eval: int = 120
    emission_std: float = 0.3
    speaker_offset_std: float = 0.25
    means_seed: int = 7


@dataclass
class PartitionConfig:
    num_teachers: int = 15
    strategy: str = "round_robin"
    public_fraction: float = 1.0 / 6.0


@dataclass
class ArchConfig:
    kind: str = "ctc"      # frame | ctc | rnnt
    hidden: int = 32


@dataclass
class MechanismConfig:
    mode: str = "vote_noisy_max"   # vote_noisy_max | posterior_noise
    delta: float = 1e-3


@dataclass
class KdConfig:
    weight: float = 0.0
    nbest_width: int = 0


@dataclass
class EvalConfig:
    beam_width: int = 8


@dataclass
class DpSgdTrainConfig:
    clip_norm: float = 1.0
    lr: float = 0.2
    epochs: int = 6
    batch_size: int = 16


@dataclass
class AttackConfig:
    target_tokens: list = field(default_factory=lambda: [1, 5])
    trials: int = 6
    steps: int = 120
    step_size: float = 0.5
    num_frames: int = 16
    query_budget: int = 10_000


def _teacher_train_default() -> TrainConfig:
    return TrainConfig(optimizer="adam", lr=0.03, epochs=160, batch_size=8,
                       lr_schedule="cosine", weight_decay=1e-3, feature_noise=0.25,
                       grad_clip=5.0)


def _student_train_default() -> TrainConfig:
    return TrainConfig(optimizer="adam", lr=0.03, epochs=120, batch_size=8,
                       lr_schedule="cosine", weight_decay=1e-3, feature_noise=0.25,
                       grad_clip=5.0)


@dataclass
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    teacher_train: TrainConfig = field(default_factory=_teacher_train_default)
    student_train: TrainConfig = field(default_factory=_student_train_default)
    dpsgd: DpSgdTrainConfig = field(default_factory=DpSgdTrainConfig)
    mechanism: MechanismConfig = field(default_factory=MechanismConfig)
    kd: KdConfig = field(default_factory=KdConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    budget_grid: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 1000.0])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def sha256(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()


_SECTIONS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _build(cls, data: dict, where: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    bad = set(data) - set(known)
    if bad:
        raise ConfigError(f"unknown keys {sorted(bad)} in section {where!r}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad values in section {where!r}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    bad = set(data) - set(_SECTIONS)
    if bad:
        raise ConfigError(f"unknown config sections {sorted(bad)}")
    kwargs = {}
    for name, fld in _SECTIONS.items():
        if name not in data:
            continue
        value = data[name]
        if name in ("budget_grid", "seeds"):
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{name} must be a nonempty list")
            kwargs[name] = [float(v) for v in value] if name == "budget_grid" \
                else [int(v) for v in value]
        else:
            if not isinstance(value, dict):
                raise ConfigError(f"section {name!r} must be an object")
            cls = fld.default_factory().__class__
            kwargs[name] = _build(cls, value, name)
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.arch.kind not in ("frame", "ctc", "rnnt"):
        raise ConfigError(f"unknown architecture {cfg.arch.kind!r}")
    if cfg.mechanism.mode not in ("vote_noisy_max", "posterior_noise"):
        raise ConfigError(f"unknown mechanism mode {cfg.mechanism.mode!r}")
    if not 0 < cfg.mechanism.delta < 1:
        raise ConfigError("mechanism delta must lie in (0, 1)")
    if any(e <= 0 for e in cfg.budget_grid):
        raise ConfigError("budget grid epsilons must be positive")
    if not 0 < cfg.partition.public_fraction < 1:
        raise ConfigError("public fraction must lie strictly between 0 and 1")
    if cfg.eval.beam_width < 1:
        raise ConfigError("eval beam width must be >= 1")
    if cfg.kd.weight < 0 or cfg.kd.nbest_width < 0:
        raise ConfigError("kd weight and nbest width must be >= 0")
    if cfg.kd.weight > 0 and cfg.kd.nbest_width < 1:
        raise ConfigError("kd weight > 0 needs nbest_width >= 1")
