"""Robust long-tailed learning under label noise, in embedding space."""

from .datasim import (
    BenchmarkSpec,
    ClassProfile,
    LabeledDataset,
    build_transition_matrix,
    inject_noise,
    long_tailed_counts,
    make_benchmark,
    synth_blobs,
)
from .gmm import CleanNoisySplit, GmmFit, detect, fit_gmm2, split_class
from .model import LinearModel, loss_gradient, predict_erm, sgd_step, softmax_cross_entropy
from .prototypes import PrototypeSet, compute_prototypes, predict_ncm
from .pseudolabel import GuessPriors, MomentumLogits, soft_label, update_momentum
from .trainer import TrainConfig, train

__version__ = "0.1.0"
