"""Teacher-ensemble pipeline: disjoint training, noisy aggregation, public
relabeling under an accounted budget, and student training with optional
sequence-level distillation.

Relabeling charges one query per public utterance (its frames are released
together); the per-query sensitivity is one teacher's contribution to a
frame release. The distillation N-best rides on the same release and is
not charged separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import accountant
from .accountant import PrivacyBudget
from .corpus import Corpus, CorpusPartition, corpus_token_error_rate
from .errors import BudgetExceeded, DimensionMismatch, EmptySubset, InvalidWeights
from .mechanisms import (GAUSSIAN, LAPLACE, NoiseSpec, VoteHistogram,
                         noisy_aggregate_posterior, noisy_max)
from .seqmodel import (ModelDims, ModelParams, TrainConfig, collapse,
                       default_loss_kind, frame_posteriors, greedy_frame_symbols,
                       init_params, loss_and_grad, train_objective)
from .seqmodel.train import feature_jitter
from .seqmodel.decode import Hypothesis, nbest_from_posteriors
from .streams import derive_rng, derive_seed

VOTE_NOISY_MAX = "vote_noisy_max"
POSTERIOR_NOISE = "posterior_noise"


@dataclass
class TeacherEnsemble:
    teachers: list
    weights: np.ndarray

    def __post_init__(self):
        if not self.teachers:
            raise InvalidWeights("an ensemble needs at least one teacher")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.teachers),):
            raise InvalidWeights("one weight per teacher required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise InvalidWeights("weights must be non-negative and sum to 1")
        first = self.teachers[0]
        for t in self.teachers[1:]:
            if t.arch != first.arch or t.dims != first.dims:
                raise DimensionMismatch("teachers must share architecture and dims")

    @property
    def num_teachers(self) -> int:
        return len(self.teachers)

    @property
    def dims(self) -> ModelDims:
        return self.teachers[0].dims


@dataclass
class StudentLabelEntry:
    utterance_id: str
    frame_labels: np.ndarray            # (T,) symbols incl. blank
    tokens: np.ndarray                  # collapsed label sequence
    posterior_rows: np.ndarray | None   # (T, J) in posterior mode
    nbest: list = field(default_factory=list)


@dataclass
class StudentLabelSet:
    entries: list
    spent: PrivacyBudget
    mechanism: str
    scale: float
    sensitivity: float

    @property
    def num_queries(self) -> int:
        return len(self.entries)


def sensitivity_for(spec: NoiseSpec) -> float:
    """Per-query sensitivity of one relabeling release under the spec's norm."""
    if spec.kind == GAUSSIAN:
        return accountant.VOTE_L2_SENSITIVITY
    if spec.kind == LAPLACE:
        return accountant.VOTE_L1_SENSITIVITY
    return 0.0


def train_teachers(corpus: Corpus, part: CorpusPartition, arch: str, hidden: int,
                   train_cfg: TrainConfig, seed: int, loss_kind: str | None = None) -> TeacherEnsemble:
    """One independently seeded teacher per disjoint private subset, uniform weights."""
    dims = ModelDims(corpus.feat_dim, hidden, corpus.vocab_size)
    if loss_kind is None:
        loss_kind = default_loss_kind(arch)
    teachers = []
    for i, subset in enumerate(part.subsets):
        if not subset:
            raise EmptySubset(f"teacher {i} has no training data")
        samples = [(corpus[idx].features, corpus[idx].tokens) for idx in subset]
        params = init_params(arch, dims, derive_seed(seed, 11, i))
        result = _train_samples(params, samples, loss_kind, train_cfg,
                                derive_seed(seed, 10, i))
        teachers.append(result)
    weights = np.full(len(teachers), 1.0 / len(teachers))
    return TeacherEnsemble(teachers, weights)


def _train_samples(params, samples, loss_kind, cfg, seed):
    def objective(p, sample):
        feats, target = sample
        return loss_and_grad(p, feats, target, loss_kind)

    augment = feature_jitter(cfg.feature_noise) if cfg.feature_noise else None
    return train_objective(params, samples, objective, cfg, seed, augment).params


def aggregate(ensemble: TeacherEnsemble, features) -> np.ndarray:
    """Weighted frame-posterior average of the ensemble: the clean teacher."""
    rows = None
    for w, teacher in zip(ensemble.weights, ensemble.teachers):
        probs, _ = frame_posteriors(teacher, features)
        rows = w * probs if rows is None else rows + w * probs
    return rows


def _teacher_frame_votes(ensemble, features):
    return [greedy_frame_symbols(t, features) for t in ensemble.teachers]


def _teacher_frame_posteriors(ensemble, features):
    return [frame_posteriors(t, features)[0] for t in ensemble.teachers]


def relabel_public(ensemble: TeacherEnsemble, corpus: Corpus, public_ids, mode: str,
                   spec: NoiseSpec, seed: int, delta: float = accountant.DEFAULT_DELTA,
                   target: PrivacyBudget | None = None, nbest_width: int = 0) -> StudentLabelSet:
    """Label the public set through the noisy ensemble and account the cost.

    vote mode: each teacher greedy-decodes; its per-frame pre-collapse
    symbol (blank included) is one vote, and a noisy argmax picks each
    frame label. posterior mode: per-frame noisy weighted posterior
    aggregation; the frame label is its argmax.

    One query per utterance; noise streams derive from (seed, utterance
    index) so results are independent of scheduling. The optional N-best
    list for distillation is decoded from the released aggregate
    (posterior mode) or the noiseless aggregate (vote mode) and is covered
    by the same per-query accounting.
    """
    if mode not in (VOTE_NOISY_MAX, POSTERIOR_NOISE):
        raise ValueError(f"unknown relabel mode {mode!r}")
    if not public_ids:
        raise ValueError("public set is empty")
    J = ensemble.dims.num_symbols
    blank = ensemble.dims.blank

    entries = []
    for q, idx in enumerate(public_ids):
        utt = corpus[idx]
        rng = derive_rng(seed, 20, q)
        posterior_rows = None
        if mode == VOTE_NOISY_MAX:
            votes = _teacher_frame_votes(ensemble, utt.features)
            stacked = np.stack(votes)  # (I, T)
            frame_labels = np.empty(stacked.shape[1], dtype=np.int64)
            for t in range(stacked.shape[1]):
                hist = VoteHistogram.from_votes(stacked[:, t], J)
                frame_labels[t] = noisy_max(hist, spec, rng)
            nbest_source = aggregate(ensemble, utt.features) if nbest_width else None
        else:
            teacher_rows = _teacher_frame_posteriors(ensemble, utt.features)
            T = teacher_rows[0].shape[0]
            posterior_rows = np.empty((T, J))
            for t in range(T):
                posterior_rows[t] = noisy_aggregate_posterior(
                    [r[t] for r in teacher_rows], ensemble.weights, spec, rng)
            frame_labels = posterior_rows.argmax(axis=1)
            nbest_source = posterior_rows
        nbest = nbest_from_posteriors(nbest_source, nbest_width) if nbest_width else []
        entries.append(StudentLabelEntry(
            utterance_id=utt.utterance_id,
            frame_labels=frame_labels,
            tokens=collapse(frame_labels, blank),
            posterior_rows=posterior_rows,
            nbest=nbest,
        ))

    sensitivity = sensitivity_for(spec)
    spent = accountant.spend(spec.kind, spec.scale, sensitivity, len(entries), delta)
    if target is not None and spent.epsilon > target.epsilon:
        raise BudgetExceeded(
            f"relabeling spends epsilon={spent.epsilon:.4g} > target {target.epsilon:.4g}")
    return StudentLabelSet(entries, spent, spec.kind, spec.scale, sensitivity)


def relabel_clean(ensemble: TeacherEnsemble, corpus: Corpus, public_ids, mode: str,
                  nbest_width: int = 0) -> StudentLabelSet:
    """The noiseless ensemble pipeline, written without the noise machinery.

    Vote mode takes the plurality of teacher frame votes (lowest index on
    ties); posterior mode takes the argmax of the weighted average.
    """
    blank = ensemble.dims.blank
    J = ensemble.dims.num_symbols
    entries = []
    for idx in public_ids:
        utt = corpus[idx]
        posterior_rows = None
        if mode == VOTE_NOISY_MAX:
            stacked = np.stack(_teacher_frame_votes(ensemble, utt.features))
            frame_labels = np.empty(stacked.shape[1], dtype=np.int64)
            for t in range(stacked.shape[1]):
                frame_labels[t] = np.argmax(np.bincount(stacked[:, t], minlength=J))
            nbest_source = aggregate(ensemble, utt.features) if nbest_width else None
        else:
            posterior_rows = aggregate(ensemble, utt.features)
            frame_labels = posterior_rows.argmax(axis=1)
            nbest_source = posterior_rows
        nbest = nbest_from_posteriors(nbest_source, nbest_width) if nbest_width else []
        entries.append(StudentLabelEntry(
            utterance_id=utt.utterance_id,
            frame_labels=frame_labels.astype(np.int64),
            tokens=collapse(frame_labels, blank),
            posterior_rows=posterior_rows,
            nbest=nbest,
        ))
    return StudentLabelSet(entries, PrivacyBudget(math.inf, accountant.DEFAULT_DELTA),
                           "none", 0.0, 0.0)


MAX_SEQUENCE_NLL = 700.0  # log-space floor for vanishing student probabilities


def kd_loss(nbest, params: ModelParams, features, loss_kind: str | None = None):
    """Sequence-level distillation: teacher-probability-weighted student NLL.

    Hypotheses the student cannot align (or assigns vanishing mass) are
    clamped at the log-space floor and contribute no gradient.
    """
    if loss_kind is None:
        loss_kind = default_loss_kind(params.arch)
    total = 0.0
    grad = np.zeros_like(params.values)
    for hyp in nbest:
        try:
            nll, g = loss_and_grad(params, features, np.asarray(hyp.tokens, dtype=np.int64),
                                   loss_kind)
        except Exception:
            nll, g = math.inf, None
        if not np.isfinite(nll) or nll > MAX_SEQUENCE_NLL:
            total += hyp.normalized_prob * MAX_SEQUENCE_NLL
            continue
        total += hyp.normalized_prob * nll
        grad += hyp.normalized_prob * g
    return total, grad


@dataclass
class StudentResult:
    params: ModelParams
    spent: PrivacyBudget
    epoch_losses: list
    label_quality_ter: float | None = None


def train_student(label_set: StudentLabelSet, corpus: Corpus, public_ids, arch: str,
                  hidden: int, train_cfg: TrainConfig, seed: int,
                  kd_weight: float = 0.0, loss_kind: str | None = None) -> StudentResult:
    """Train on the relabeled public set; hard sequence loss plus optional KD.

    The emitted budget is the label set's, verbatim: training is
    post-processing of the released labels and adds no cost.
    """
    dims = ModelDims(corpus.feat_dim, hidden, corpus.vocab_size)
    if loss_kind is None:
        loss_kind = default_loss_kind(arch)
    by_id = {corpus[i].utterance_id: corpus[i] for i in public_ids}
    samples = []
    for entry in label_set.entries:
        utt = by_id[entry.utterance_id]
        target = entry.frame_labels if loss_kind == "frame_ce" else entry.tokens
        samples.append((utt.features, target, entry.nbest))

    def objective(p, sample):
        feats, target, nbest = sample
        loss, grad = loss_and_grad(p, feats, target, loss_kind)
        if kd_weight > 0.0 and nbest:
            kd, kd_grad = kd_loss(nbest, p, feats, loss_kind)
            loss = loss + kd_weight * kd
            grad = grad + kd_weight * kd_grad
        return loss, grad

    params = init_params(arch, dims, derive_seed(seed, 13))
    augment = feature_jitter(train_cfg.feature_noise) if train_cfg.feature_noise else None
    result = train_objective(params, samples, objective, train_cfg, derive_seed(seed, 12),
                             augment)

    quality = None
    refs = [by_id[e.utterance_id].tokens for e in label_set.entries
            if len(by_id[e.utterance_id].tokens)]
    hyps = [e.tokens for e in label_set.entries if len(by_id[e.utterance_id].tokens)]
    if refs:
        quality = corpus_token_error_rate(refs, hyps)
    return StudentResult(result.params, label_set.spent, result.epoch_losses, quality)
