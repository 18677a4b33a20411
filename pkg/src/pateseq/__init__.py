"""Differentially private sequence labeling with teacher ensembles.

Subpackages and modules:
    mechanisms  - seeded noise primitives (Laplace/Gaussian, noisy argmax)
    accountant  - Renyi-DP curves, composition, calibration, empirical DP
    corpus      - synthetic speech-like data, partitioning, error rates
    seqmodel    - frame/CTC/transducer models, exact losses, decoding
    pate        - teacher training, noisy relabeling, student distillation
    dpsgd       - clipped-and-noised SGD baseline with budget enforcement
    mia         - model-inversion attack harness and recovery scoring
    cli         - experiment orchestration and reporting
"""

__version__ = "0.1.0"

from .accountant import PrivacyBudget, RdpCurve
from .mechanisms import NoiseSpec, VoteHistogram

__all__ = ["NoiseSpec", "PrivacyBudget", "RdpCurve", "VoteHistogram", "__version__"]
