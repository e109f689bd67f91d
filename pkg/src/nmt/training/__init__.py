"""Optimizers, schedules, batching, checkpoint ensembling and the training loop."""

import numpy as np

from ..errors import ContractError
from ..nn import label_smoothed_nll
from ..tensor import Tensor
from .batching import BatchPlan, pair_cost, plan_batches
from .ensemble import CheckpointDirectory, EnsembleSpec, average_checkpoints, select_ensemble_checkpoints
from .loop import Trainer, TrainResult
from .optim import NAG, SGD, Adam, Optimizer, OptimizerState, clip_gradients, global_norm, make_optimizer
from .schedules import STOP, ScheduleConfig, lr_force_anneal, lr_halving, lr_noam, scale_lr_for_batch


def label_smoothed_loss(log_probs, target_id: int, epsilon: float = 0.1, vocab_size: int | None = None) -> Tensor:
    """Cross-entropy of one position against ``(1 - eps) * onehot + eps / T``."""
    log_probs = log_probs if isinstance(log_probs, Tensor) else Tensor(np.asarray(log_probs))
    size = log_probs.shape[-1]
    if vocab_size is not None and vocab_size != size:
        raise ContractError(f"log_probs has length {size}, expected {vocab_size}")
    return label_smoothed_nll(log_probs, np.asarray(target_id), epsilon)


__all__ = [
    "BatchPlan", "pair_cost", "plan_batches", "CheckpointDirectory", "EnsembleSpec", "average_checkpoints",
    "select_ensemble_checkpoints", "Trainer", "TrainResult", "NAG", "SGD", "Adam", "Optimizer",
    "OptimizerState", "clip_gradients", "global_norm", "make_optimizer", "STOP", "ScheduleConfig",
    "lr_force_anneal", "lr_halving", "lr_noam", "scale_lr_for_batch", "label_smoothed_loss",
]
