"""GRU language model: parameters, training, checkpoints."""

from .kernels import BACKEND
from .model import (
    CLIP_NORM,
    LanguageModel,
    LrSchedule,
    NlmConfig,
    NlmParams,
    UnitVocab,
    adapt,
    clip_gradients,
    forward_step,
    init_model,
    load_checkpoint,
    load_model,
    loss_and_grads,
    run_epoch,
    run_sequence,
    save_checkpoint,
    save_model,
    sequence_entropy_bits,
    sgd_step,
    step_batch,
    train,
)

__all__ = [
    "BACKEND", "CLIP_NORM", "LanguageModel", "LrSchedule", "NlmConfig", "NlmParams",
    "UnitVocab", "adapt", "clip_gradients", "forward_step", "init_model",
    "load_checkpoint", "load_model", "loss_and_grads", "run_epoch", "run_sequence",
    "save_checkpoint", "save_model", "sequence_entropy_bits", "sgd_step", "step_batch",
    "train",
]
