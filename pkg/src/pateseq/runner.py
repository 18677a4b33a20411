"""Pipeline orchestration shared by the CLI subcommands and the test suite.

Every artifact is a deterministic function of (config, seed): corpora,
partitions, teacher ensembles, label sets, students, and the sweep table
all derive their streams from the master seed plus fixed integer keys, so
any output file can be regenerated bit-exactly from its manifest.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, accountant, corpus as corpus_mod, dpsgd, pate
from .accountant import PrivacyBudget
from .config import ExperimentConfig
from .errors import ConfigError
from .mechanisms import GAUSSIAN, LAPLACE, NoiseSpec
from .seqmodel import (ModelDims, beam_search, init_params, load_checkpoint,
                       save_checkpoint)
from .streams import derive_seed

CLEAN = "clean"
PATE_GNMAX = "pate_gnmax"
PATE_LNMAX = "pate_lnmax"
DPSGD = "dpsgd"
SWEEP_METHODS = (PATE_GNMAX, PATE_LNMAX, CLEAN, DPSGD)

_MECH_KIND = {PATE_GNMAX: GAUSSIAN, PATE_LNMAX: LAPLACE}


def fmt(x) -> str:
    """Round-trippable text for floats; everything else via str."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])


def write_manifest(out_dir, command: str, cfg: ExperimentConfig, seed, outputs,
                   extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "seed": seed,
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256(),
        "versions": {
            "pateseq": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def build_train_corpus(cfg: ExperimentConfig, seed: int):
    c = cfg.corpus
    return corpus_mod.generate_corpus(
        vocab_size=c.vocab_size, feat_dim=c.feat_dim,
        frames_per_token=tuple(c.frames_per_token), emission_std=c.emission_std,
        num_utterances=c.num_train, token_len_range=tuple(c.token_len_range),
        num_speakers=c.num_speakers, seed=seed,
        speaker_offset_std=c.speaker_offset_std, means_seed=c.means_seed)


def build_eval_corpus(cfg: ExperimentConfig, seed: int):
    c = cfg.corpus
    return corpus_mod.generate_corpus(
        vocab_size=c.vocab_size, feat_dim=c.feat_dim,
        frames_per_token=tuple(c.frames_per_token), emission_std=c.emission_std,
        num_utterances=c.num_eval, token_len_range=tuple(c.token_len_range),
        num_speakers=c.num_speakers, seed=derive_seed(seed, 9),
        speaker_offset_std=c.speaker_offset_std, means_seed=c.means_seed,
        id_prefix="ev")


def build_partition(cfg: ExperimentConfig, corpus, seed: int):
    p = cfg.partition
    return corpus_mod.partition(corpus, p.num_teachers, p.strategy, p.public_fraction, seed)


def train_teachers(cfg: ExperimentConfig, corpus, part, seed: int):
    return pate.train_teachers(corpus, part, cfg.arch.kind, cfg.arch.hidden,
                               cfg.teacher_train, seed)


def model_ter(params, eval_corpus, beam_width: int) -> float:
    refs = [u.tokens for u in eval_corpus.utterances]
    hyps = []
    for u in eval_corpus.utterances:
        best = beam_search(params, beam_width, features=u.features)[0]
        hyps.append(np.asarray(best.tokens, dtype=np.int64))
    return corpus_mod.corpus_token_error_rate(refs, hyps)


def ensemble_ter(ensemble, eval_corpus, beam_width: int) -> float:
    """Clean-aggregate decoding quality: the non-private ensemble ceiling."""
    refs = [u.tokens for u in eval_corpus.utterances]
    hyps = []
    for u in eval_corpus.utterances:
        probs = pate.aggregate(ensemble, u.features)
        best = beam_search(probs, beam_width)[0]
        hyps.append(np.asarray(best.tokens, dtype=np.int64))
    return corpus_mod.corpus_token_error_rate(refs, hyps)


def calibrated_spec(cfg: ExperimentConfig, kind: str, epsilon: float, queries: int) -> NoiseSpec:
    sens = accountant.VOTE_L2_SENSITIVITY if kind == GAUSSIAN else accountant.VOTE_L1_SENSITIVITY
    return accountant.calibrate_noise(PrivacyBudget(epsilon, cfg.mechanism.delta),
                                      queries, kind, sens)


def run_relabel(cfg: ExperimentConfig, ensemble, corpus, public_ids, kind: str,
                epsilon: float | None, seed: int):
    """(label_set, accounting dict). kind "none" gives the clean pipeline."""
    if kind == "none":
        label_set = pate.relabel_clean(ensemble, corpus, public_ids, cfg.mechanism.mode,
                                       nbest_width=cfg.kd.nbest_width)
        report = {"mechanism": "none", "scale": 0.0, "K": len(public_ids),
                  "epsilon": math.inf, "delta": cfg.mechanism.delta}
        return label_set, report
    if epsilon is None:
        raise ConfigError("a target epsilon is required for a noisy relabel")
    spec = calibrated_spec(cfg, kind, epsilon, len(public_ids))
    target = PrivacyBudget(epsilon, cfg.mechanism.delta)
    label_set = pate.relabel_public(ensemble, corpus, public_ids, cfg.mechanism.mode,
                                    spec, seed, delta=cfg.mechanism.delta, target=target,
                                    nbest_width=cfg.kd.nbest_width)
    report = accountant.accounting_report(spec.kind, spec.scale, label_set.sensitivity,
                                          label_set.num_queries, cfg.mechanism.delta)
    return label_set, report


def run_student(cfg: ExperimentConfig, label_set, corpus, public_ids, seed: int):
    return pate.train_student(label_set, corpus, public_ids, cfg.arch.kind,
                              cfg.arch.hidden, cfg.student_train, seed,
                              kd_weight=cfg.kd.weight)


def run_dpsgd(cfg: ExperimentConfig, corpus, part, epsilon: float, seed: int):
    """DP-SGD on the private subsets, noise calibrated to the planned steps."""
    private_ids = [i for subset in part.subsets for i in subset]
    samples = [(corpus[i].features, corpus[i].tokens) for i in private_ids]
    d = cfg.dpsgd
    steps = math.ceil(len(samples) / d.batch_size) * d.epochs
    target = PrivacyBudget(epsilon, cfg.mechanism.delta)
    mult = dpsgd.calibrate_multiplier(target, steps)
    dp_cfg = dpsgd.DpSgdConfig(clip_norm=d.clip_norm, noise_multiplier=mult, lr=d.lr,
                               epochs=d.epochs, batch_size=d.batch_size, target=target)
    dims = ModelDims(corpus.feat_dim, cfg.arch.hidden, corpus.vocab_size)
    params0 = init_params(cfg.arch.kind, dims, derive_seed(seed, 14))
    loss_kind = "rnnt" if cfg.arch.kind == "rnnt" else "ctc"
    return dpsgd.dpsgd_train(samples, params0, loss_kind, dp_cfg, derive_seed(seed, 15))


def save_label_set(label_set, directory) -> list:
    """labels.csv (utterance_id, frame, label) + JSON N-best sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for e in label_set.entries:
        for t, lab in enumerate(e.frame_labels):
            rows.append((e.utterance_id, t, int(lab)))
    write_csv(d / "labels.csv", ["utterance_id", "frame", "label"], rows)
    sidecar = {
        e.utterance_id: [{"tokens": list(map(int, h.tokens)),
                          "log_prob": h.log_prob,
                          "normalized_prob": h.normalized_prob} for h in e.nbest]
        for e in label_set.entries
    }
    (d / "nbest.json").write_text(json.dumps(sidecar, indent=0, sort_keys=True))
    return ["labels.csv", "nbest.json"]


def load_label_set(directory, blank: int, spent: PrivacyBudget, mechanism: str,
                   scale: float, sensitivity: float):
    from .seqmodel import Hypothesis, collapse

    d = Path(directory)
    frames = {}
    order = []
    with open(d / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            uid = row["utterance_id"]
            if uid not in frames:
                frames[uid] = []
                order.append(uid)
            frames[uid].append((int(row["frame"]), int(row["label"])))
    sidecar = json.loads((d / "nbest.json").read_text())
    entries = []
    for uid in order:
        labs = np.array([lab for _, lab in sorted(frames[uid])], dtype=np.int64)
        nbest = [Hypothesis(tuple(h["tokens"]), h["log_prob"], h["normalized_prob"])
                 for h in sidecar.get(uid, [])]
        entries.append(pate.StudentLabelEntry(uid, labs, collapse(labs, blank), None, nbest))
    return pate.StudentLabelSet(entries, spent, mechanism, scale, sensitivity)


@dataclass
class SweepRow:
    method: str
    epsilon: float
    seed: int
    eval_ter: float
    label_ter: float | None
    spent_epsilon: float
    noise_scale: float


def sweep_one_seed(cfg: ExperimentConfig, seed: int) -> list:
    train_c = build_train_corpus(cfg, seed)
    eval_c = build_eval_corpus(cfg, seed)
    part = build_partition(cfg, train_c, seed)
    ensemble = train_teachers(cfg, train_c, part, seed)
    width = cfg.eval.beam_width
    rows = []

    clean_set, _ = run_relabel(cfg, ensemble, train_c, part.public_set, "none", None, seed)
    clean_student = run_student(cfg, clean_set, train_c, part.public_set, derive_seed(seed, 22, 99))
    clean_ter = model_ter(clean_student.params, eval_c, width)
    for eps in cfg.budget_grid:
        rows.append(SweepRow(CLEAN, eps, seed, clean_ter, clean_student.label_quality_ter,
                             math.inf, 0.0))

    for gi, eps in enumerate(cfg.budget_grid):
        for method in (PATE_GNMAX, PATE_LNMAX):
            kind = _MECH_KIND[method]
            label_set, _ = run_relabel(cfg, ensemble, train_c, part.public_set, kind, eps,
                                       derive_seed(seed, 21, gi, 0 if kind == GAUSSIAN else 1))
            student = run_student(cfg, label_set, train_c, part.public_set,
                                  derive_seed(seed, 22, gi))
            rows.append(SweepRow(method, eps, seed, model_ter(student.params, eval_c, width),
                                 student.label_quality_ter, label_set.spent.epsilon,
                                 label_set.scale))
        result = run_dpsgd(cfg, train_c, part, eps, derive_seed(seed, 23, gi))
        rows.append(SweepRow(DPSGD, eps, seed, model_ter(result.params, eval_c, width),
                             None, result.spent.epsilon, result.params.values.size * 0.0))
    return rows


def run_sweep(cfg: ExperimentConfig, master_seed: int, jobs: int = 1) -> list:
    """All (method, epsilon, seed) cells; row order independent of scheduling."""
    seeds = [derive_seed(master_seed, 40, s) for s in range(len(cfg.seeds))] \
        if master_seed is not None else None
    actual = cfg.seeds if master_seed is None else seeds
    if jobs > 1 and len(actual) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_sweep_worker, [(cfg.to_dict(), s) for s in actual]))
    else:
        chunks = [sweep_one_seed(cfg, s) for s in actual]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.method, r.epsilon, r.seed))
    return rows


def _sweep_worker(arg):
    from .config import config_from_dict

    cfg_dict, seed = arg
    return sweep_one_seed(config_from_dict(cfg_dict), seed)


def summarize_sweep(rows) -> list:
    """(method, epsilon) -> mean TER and standard error over seeds."""
    cells = {}
    for r in rows:
        cells.setdefault((r.method, r.epsilon), []).append(r.eval_ter)
    out = []
    for (method, eps), ters in sorted(cells.items()):
        arr = np.asarray(ters)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append((method, eps, float(arr.mean()), se, arr.size))
    return out


def sweep_rows_to_csv(rows, path) -> None:
    write_csv(path, ["method", "epsilon", "seed", "eval_ter", "label_ter",
                     "spent_epsilon", "noise_scale"],
              [(r.method, r.epsilon, r.seed, r.eval_ter,
                "" if r.label_ter is None else r.label_ter,
                r.spent_epsilon, r.noise_scale) for r in rows])


def summary_to_csv(summary, path) -> None:
    write_csv(path, ["method", "epsilon", "mean_ter", "se_ter", "n_seeds"], summary)


def load_sweep_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(SweepRow(
                method=row["method"], epsilon=float(row["epsilon"]),
                seed=int(row["seed"]), eval_ter=float(row["eval_ter"]),
                label_ter=float(row["label_ter"]) if row["label_ter"] else None,
                spent_epsilon=float(row["spent_epsilon"]),
                noise_scale=float(row["noise_scale"])))
    return rows


def gap_report(rows) -> list:
    """Per-epsilon mean TER gap of each PATE mechanism versus the baseline."""
    summary = {(m, e): mean for m, e, mean, _, _ in summarize_sweep(rows)}
    out = []
    epsilons = sorted({e for m, e in summary if m == DPSGD})
    for eps in epsilons:
        base = summary.get((DPSGD, eps))
        for method in (PATE_GNMAX, PATE_LNMAX):
            mean = summary.get((method, eps))
            if base is None or mean is None:
                continue
            out.append((method, eps, mean, base, base - mean))
    return out
