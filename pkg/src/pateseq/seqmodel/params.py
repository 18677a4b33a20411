"""Model parameter container with a flat, index-stable layout.

Three architectures share the container:

* ``frame``: per-frame linear softmax classifier.
    layout: W (J,F), b (J)                              with J = V + 1
* ``ctc``: single-layer tanh recurrence + linear softmax per frame.
    layout: Wx (H,F), Wh (H,H), bh (H), Wo (J,H), bo (J)
* ``rnnt``: encoder recurrence + label-prediction recurrence + additive joint.
    layout: Wx (H,F), Wh (H,H), bh (H),
            Wy (H,V), Wq (H,H), bq (H),
            Wa (J,H), Wb (J,H), bo (J)

Values are a single contiguous float64 vector in exactly that block order;
all gradients, clipping, noising, and checkpoints operate on the flat view.
The blank symbol is always index V (last).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch
from ..streams import derive_rng

FRAME = "frame"
CTC = "ctc"
RNNT = "rnnt"
ARCHS = (FRAME, CTC, RNNT)


@dataclass(frozen=True)
class ModelDims:
    feat: int
    hidden: int
    vocab: int

    def __post_init__(self):
        if min(self.feat, self.hidden, self.vocab) < 1:
            raise ValueError("all dimensions must be positive")

    @property
    def blank(self) -> int:
        return self.vocab

    @property
    def num_symbols(self) -> int:
        return self.vocab + 1


def _blocks(arch: str, dims: ModelDims):
    F, H, V, J = dims.feat, dims.hidden, dims.vocab, dims.num_symbols
    if arch == FRAME:
        return [("W", (J, F)), ("b", (J,))]
    if arch == CTC:
        return [("Wx", (H, F)), ("Wh", (H, H)), ("bh", (H,)),
                ("Wo", (J, H)), ("bo", (J,))]
    if arch == RNNT:
        return [("Wx", (H, F)), ("Wh", (H, H)), ("bh", (H,)),
                ("Wy", (H, V)), ("Wq", (H, H)), ("bq", (H,)),
                ("Wa", (J, H)), ("Wb", (J, H)), ("bo", (J,))]
    raise ValueError(f"unknown architecture {arch!r}")


def param_count(arch: str, dims: ModelDims) -> int:
    return sum(int(np.prod(shape)) for _, shape in _blocks(arch, dims))


@dataclass
class ModelParams:
    arch: str
    dims: ModelDims
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = param_count(self.arch, self.dims)
        if self.values.shape != (expected,):
            raise DimensionMismatch(
                f"{self.arch} with dims {self.dims} needs {expected} values, "
                f"got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter values must be finite")

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.dims, self.values.copy())


def views(arch: str, dims: ModelDims, flat: np.ndarray) -> dict:
    """Named reshaped views into a flat vector (shared memory)."""
    out = {}
    offset = 0
    for name, shape in _blocks(arch, dims):
        size = int(np.prod(shape))
        out[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    return out


def init_params(arch: str, dims: ModelDims, seed: int, blank_bias: float = 2.0) -> ModelParams:
    """Fan-in scaled Gaussian init, deterministic in the seed.

    The output bias of the blank symbol starts at ``blank_bias`` so the
    alignment-marginalizing losses begin blank-dominant, which is what
    lets them discover peaky alignments instead of collapsing early.
    """
    rng = derive_rng(seed, 3)
    flat = np.zeros(param_count(arch, dims))
    v = views(arch, dims, flat)
    for name, w in v.items():
        if w.ndim == 2:
            w[:] = rng.standard_normal(w.shape) / np.sqrt(w.shape[1])
    out_bias = "b" if arch == FRAME else "bo"
    v[out_bias][dims.blank] = blank_bias
    return ModelParams(arch, dims, flat)
