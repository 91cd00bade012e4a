"""Censored quantile regression with neural networks.

The main entry points are :func:`cqrnn.algorithms.train` together with the
synthetic data generators in :mod:`cqrnn.synthgen` and the metrics in
:mod:`cqrnn.metrics`.
"""

from .algorithms import (
    METHODS,
    TrainConfig,
    TrainedQuantileModel,
    estimate_censored_quantiles,
    train,
    train_cqrnn,
    train_excl_censor,
    train_lognorm_mle,
    train_sequential_grid,
)
from .data import CensoredDataset, load_csv, save_csv, split
from .losses import PseudoValue, QuantileGrid
from .metrics import evaluate
from .synthgen import generate_type1, make_type1_split

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "CensoredDataset",
    "PseudoValue",
    "QuantileGrid",
    "TrainConfig",
    "TrainedQuantileModel",
    "estimate_censored_quantiles",
    "evaluate",
    "generate_type1",
    "load_csv",
    "make_type1_split",
    "save_csv",
    "split",
    "train",
    "train_cqrnn",
    "train_excl_censor",
    "train_lognorm_mle",
    "train_sequential_grid",
]
