"""Synthetic speech-like corpus: generation, teacher partitioning, metrics, disk format.

Utterances are token sequences rendered as Gaussian feature frames around
per-token class means, plus a per-speaker offset vector so an inversion
attack has something speaker-specific to chase. Class means and speaker
offsets come from a dedicated fixed seed so separately generated corpora
(e.g. train vs eval) can share them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyReference, InvalidRange, TooFewSpeakers
from .streams import derive_rng

ROUND_ROBIN = "round_robin"
BY_SPEAKER = "by_speaker"

DEFAULT_MEANS_SEED = 7


@dataclass
class SyntheticUtterance:
    utterance_id: str
    features: np.ndarray  # (T, F)
    tokens: np.ndarray    # (U,) ints in [0, V)
    speaker_id: int


@dataclass
class Corpus:
    utterances: list
    class_means: np.ndarray      # (V, F)
    speaker_offsets: np.ndarray  # (num_speakers, F)
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.utterances)

    def __getitem__(self, i):
        return self.utterances[i]

    @property
    def vocab_size(self) -> int:
        return self.class_means.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.class_means.shape[1]


@dataclass
class CorpusPartition:
    subsets: list      # list of I disjoint utterance-index lists
    public_set: list   # utterance indices, disjoint from every subset

    @property
    def num_teachers(self) -> int:
        return len(self.subsets)


def generate_corpus(vocab_size: int, feat_dim: int, frames_per_token: tuple,
                    emission_std: float, num_utterances: int, token_len_range: tuple,
                    num_speakers: int, seed: int, speaker_offset_std: float = 0.5,
                    means_seed: int = DEFAULT_MEANS_SEED, id_prefix: str = "utt") -> Corpus:
    """Draw a corpus; bit-deterministic in (seed, means_seed) and all sizes."""
    lo, hi = int(frames_per_token[0]), int(frames_per_token[1])
    ulo, uhi = int(token_len_range[0]), int(token_len_range[1])
    if vocab_size < 2 or lo < 1 or hi < lo or ulo < 1 or uhi < ulo:
        raise InvalidRange("need vocab >= 2, frames per token >= 1, and ordered ranges")
    if emission_std < 0 or num_utterances < 1 or num_speakers < 1:
        raise InvalidRange("emission std >= 0 and positive counts required")

    means_rng = derive_rng(means_seed, 0)
    class_means = means_rng.standard_normal((vocab_size, feat_dim))
    speaker_offsets = speaker_offset_std * means_rng.standard_normal((num_speakers, feat_dim))

    rng = derive_rng(seed, 1)
    utts = []
    for n in range(num_utterances):
        speaker = int(rng.integers(num_speakers))
        length = int(rng.integers(ulo, uhi + 1))
        tokens = rng.integers(0, vocab_size, size=length)
        frames = []
        for tok in tokens:
            reps = int(rng.integers(lo, hi + 1))
            base = class_means[tok] + speaker_offsets[speaker]
            frames.append(base + emission_std * rng.standard_normal((reps, feat_dim)))
        utts.append(SyntheticUtterance(
            utterance_id=f"{id_prefix}{n:05d}",
            features=np.concatenate(frames, axis=0),
            tokens=np.asarray(tokens, dtype=np.int64),
            speaker_id=speaker,
        ))
    config = {
        "vocab_size": vocab_size, "feat_dim": feat_dim,
        "frames_per_token": [lo, hi], "emission_std": emission_std,
        "num_utterances": num_utterances, "token_len_range": [ulo, uhi],
        "num_speakers": num_speakers, "seed": seed,
        "speaker_offset_std": speaker_offset_std, "means_seed": means_seed,
        "id_prefix": id_prefix,
    }
    return Corpus(utts, class_means, speaker_offsets, config)


def partition(corpus: Corpus, num_teachers: int, strategy: str, public_fraction: float,
              seed: int) -> CorpusPartition:
    """Split a corpus into I disjoint private subsets plus a public set."""
    n = len(corpus)
    if num_teachers < 1 or n < num_teachers + 1:
        raise InvalidRange(f"corpus of {n} cannot feed {num_teachers} teachers plus a public set")
    if not 0 < public_fraction < 1:
        raise InvalidRange("public fraction must lie strictly between 0 and 1")

    rng = derive_rng(seed, 2)
    order = rng.permutation(n)
    n_public = max(1, round(public_fraction * n))
    public = sorted(int(i) for i in order[:n_public])
    private = [int(i) for i in order[n_public:]]
    if len(private) < num_teachers:
        raise InvalidRange("public fraction leaves fewer utterances than teachers")

    subsets = [[] for _ in range(num_teachers)]
    if strategy == ROUND_ROBIN:
        for k, idx in enumerate(private):
            subsets[k % num_teachers].append(idx)
    elif strategy == BY_SPEAKER:
        by_spk = {}
        for idx in private:
            by_spk.setdefault(corpus[idx].speaker_id, []).append(idx)
        speakers = sorted(by_spk)
        if len(speakers) < num_teachers:
            raise TooFewSpeakers(f"{len(speakers)} speakers cannot fill {num_teachers} subsets")
        for k, spk in enumerate(rng.permutation(speakers)):
            subsets[k % num_teachers].extend(by_spk[int(spk)])
    else:
        raise InvalidRange(f"unknown partition strategy {strategy!r}")
    return CorpusPartition([sorted(s) for s in subsets], public)


def edit_distance(ref, hyp) -> tuple:
    """Minimal-cost (substitutions, insertions, deletions) aligning hyp to ref.

    Unit costs; among cost ties the alignment preferring substitution,
    then deletion, then insertion is reported (total is unaffected).
    """
    ref = list(ref)
    hyp = list(hyp)
    R, H = len(ref), len(hyp)
    # dp[i][j] = (total, S, I, D) for ref[:i] vs hyp[:j]
    dp = [[None] * (H + 1) for _ in range(R + 1)]
    dp[0][0] = (0, 0, 0, 0)
    for j in range(1, H + 1):
        t, s, ins, d = dp[0][j - 1]
        dp[0][j] = (t + 1, s, ins + 1, d)
    for i in range(1, R + 1):
        t, s, ins, d = dp[i - 1][0]
        dp[i][0] = (t + 1, s, ins, d + 1)
        for j in range(1, H + 1):
            if ref[i - 1] == hyp[j - 1]:
                dp[i][j] = dp[i - 1][j - 1]
                continue
            t, s, ins, d = dp[i - 1][j - 1]
            best = (t + 1, s + 1, ins, d)
            t, s, ins, d = dp[i - 1][j]
            if t + 1 < best[0]:
                best = (t + 1, s, ins, d + 1)
            t, s, ins, d = dp[i][j - 1]
            if t + 1 < best[0]:
                best = (t + 1, s, ins + 1, d)
            dp[i][j] = best
    return dp[R][H][1], dp[R][H][2], dp[R][H][3]


def token_error_rate(ref, hyp) -> float:
    """(S + I + D) / len(ref) for one utterance."""
    if len(ref) == 0:
        raise EmptyReference("token error rate needs a nonempty reference")
    s, i, d = edit_distance(ref, hyp)
    return (s + i + d) / len(ref)


def corpus_token_error_rate(refs, hyps) -> float:
    """Pooled error rate: total edits over total reference length."""
    total_ref = sum(len(r) for r in refs)
    if total_ref == 0:
        raise EmptyReference("no reference tokens")
    edits = sum(sum(edit_distance(r, h)) for r, h in zip(refs, hyps))
    return edits / total_ref


def save_corpus(corpus: Corpus, directory) -> None:
    """Write manifest + per-utterance feature CSVs + labels CSV. Round-trips bit-exactly."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": corpus.config,
        "class_means": [[repr(x) for x in row] for row in corpus.class_means],
        "speaker_offsets": [[repr(x) for x in row] for row in corpus.speaker_offsets],
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    with open(d / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance_id", "speaker_id", "tokens"])
        for utt in corpus.utterances:
            writer.writerow([utt.utterance_id, utt.speaker_id,
                             " ".join(str(t) for t in utt.tokens)])
    for utt in corpus.utterances:
        write_feature_csv(d / f"{utt.utterance_id}.csv", utt.features)


def load_corpus(directory) -> Corpus:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    class_means = np.array([[float(x) for x in row] for row in manifest["class_means"]])
    offsets = np.array([[float(x) for x in row] for row in manifest["speaker_offsets"]])
    utts = []
    with open(d / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            tokens = np.array([int(t) for t in row["tokens"].split()] if row["tokens"] else [],
                              dtype=np.int64)
            utts.append(SyntheticUtterance(
                utterance_id=row["utterance_id"],
                features=read_feature_csv(d / f"{row['utterance_id']}.csv"),
                tokens=tokens,
                speaker_id=int(row["speaker_id"]),
            ))
    return Corpus(utts, class_means, offsets, manifest["config"])


def write_feature_csv(path, features: np.ndarray) -> None:
    """Rows = frames, columns = features; repr() so floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.atleast_2d(features):
            writer.writerow([repr(float(x)) for x in row])


def read_feature_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh)]
    return np.asarray(rows, dtype=np.float64)
