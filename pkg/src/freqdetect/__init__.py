"""Adaptive frequency-decomposition image forgery detector.

A small numpy/scipy research library: a reverse-mode tensor engine, exact
orthonormal DCT transforms, learnable frequency-band masks, a two-branch
convolutional detector with frequency feature fusion, a synthetic forgery
corpus generator, and a two-phase training protocol. The ``freqdetect``
console command wires everything together.
"""

from .autodiff import GradientTape, Tensor, finite_diff_check
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Corpus, balance_resample, gen_forged, gen_real, generate_corpus, read_corpus, write_corpus
from .masks import MaskBank, decompose, export_masks, init_mask_logits, masks_from_logits, triplet_loss
from .metrics import accuracy, domain_breakdown, roc_auc
from .model import ModelConfig, TwoBranchModel
from .optim import AdamMoments, adam_step, cosine_lr
from .spectral import LearnableTransform, adat_init, dct2, dct_matrix, idct2
from .training import (
    EvalReport,
    TrainConfig,
    TrainResult,
    evaluate_checkpoint,
    evaluate_model,
    restore_model,
    train_adad,
    train_adat,
)

__version__ = "0.1.0"

__all__ = [
    "GradientTape",
    "Tensor",
    "finite_diff_check",
    "load_checkpoint",
    "save_checkpoint",
    "Corpus",
    "balance_resample",
    "gen_forged",
    "gen_real",
    "generate_corpus",
    "read_corpus",
    "write_corpus",
    "MaskBank",
    "decompose",
    "export_masks",
    "init_mask_logits",
    "masks_from_logits",
    "triplet_loss",
    "accuracy",
    "domain_breakdown",
    "roc_auc",
    "ModelConfig",
    "TwoBranchModel",
    "AdamMoments",
    "adam_step",
    "cosine_lr",
    "LearnableTransform",
    "adat_init",
    "dct2",
    "dct_matrix",
    "idct2",
    "EvalReport",
    "TrainConfig",
    "TrainResult",
    "evaluate_checkpoint",
    "evaluate_model",
    "restore_model",
    "train_adad",
    "train_adat",
]
