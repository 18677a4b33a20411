"""Trainable sequence models with exact dynamic-programming losses."""

from .checkpoint import checksum, load_checkpoint, save_checkpoint
from .ctc import collapse, ctc_loss, min_frames
from .decode import Hypothesis, beam_search, greedy_decode, greedy_frame_symbols
from .network import (default_loss_kind, frame_posteriors, loss_and_grad,
                      rnnt_lattice, sequence_nll, softmax)
from .params import ARCHS, CTC, FRAME, RNNT, ModelDims, ModelParams, init_params, param_count, views
from .rnnt import rnnt_loss
from .train import TrainConfig, TrainResult, grad_check, train, train_objective

__all__ = [
    "ARCHS", "CTC", "FRAME", "RNNT", "Hypothesis", "ModelDims", "ModelParams",
    "TrainConfig", "TrainResult", "beam_search", "checksum", "collapse",
    "ctc_loss", "default_loss_kind", "frame_posteriors", "grad_check",
    "greedy_decode", "greedy_frame_symbols", "init_params", "load_checkpoint",
    "loss_and_grad", "min_frames", "param_count", "rnnt_lattice", "rnnt_loss",
    "save_checkpoint", "sequence_nll", "softmax", "train", "train_objective",
    "views",
]
