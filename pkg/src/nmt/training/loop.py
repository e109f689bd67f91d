"""The training loop: batches, loss normalization, clipping, schedules, checkpoints."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigError, TrainingDivergenceError
from ..models.base import Batch, Seq2SeqModel
from ..tensor import backward, parameters_grads
from .batching import BatchPlan, Pair, plan_batches
from .ensemble import CheckpointDirectory
from .optim import Optimizer, clip_gradients
from .schedules import STOP, ScheduleConfig

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    steps: int
    epochs: float
    final_loss: float
    stopped_by_schedule: bool
    tokens: int


class Trainer:
    """Runs optimizer steps over a token-budget batch plan.

    The summed loss of a batch is divided by its size before clipping:
    the number of real target tokens when ``normalize="tokens"``, the number
    of sentence pairs when ``normalize="sentences"``.
    """

    def __init__(
        self,
        model: Seq2SeqModel,
        optimizer: Optimizer,
        schedule: ScheduleConfig,
        *,
        clip_norm: float | None = 5.0,
        label_smoothing: float = 0.0,
        normalize: str = "tokens",
        seed: int = 0,
        checkpoints: CheckpointDirectory | None = None,
        save_every: int = 1000,
        log_path: str | Path | None = None,
    ):
        if normalize not in ("tokens", "sentences"):
            raise ConfigError(f"unknown gradient normalization {normalize!r}")
        self.model = model
        self.optimizer = optimizer
        self.schedule = schedule
        self.clip_norm = clip_norm
        self.label_smoothing = label_smoothing
        self.normalize = normalize
        self.rng = np.random.default_rng(seed)
        self.checkpoints = checkpoints
        self.save_every = save_every
        self.log_path = Path(log_path) if log_path else None
        self.step_num = 0
        self.tokens_seen = 0
        self.corpus_tokens = 0
        self._params = list(model.params.values())

    @property
    def epoch(self) -> float:
        """Fractional epochs: tokens consumed divided by tokens in the corpus."""
        return self.tokens_seen / self.corpus_tokens if self.corpus_tokens else 0.0

    def train_step(self, batch: Batch, lr: float, cost: int | None = None) -> float:
        loss = self.model.loss(batch, self.label_smoothing, training=True, rng=self.rng)
        denom = batch.n_target_tokens if self.normalize == "tokens" else batch.size
        value = float(loss.item()) / denom
        if not np.isfinite(value):
            raise TrainingDivergenceError(f"non-finite loss at step {self.step_num + 1}")
        grads = backward(loss)
        arrays = [g / np.asarray(denom, dtype=g.dtype) for g in parameters_grads(grads, self._params)]
        if self.clip_norm is not None:
            arrays = clip_gradients(arrays, self.clip_norm)
        self.optimizer.step(arrays, lr)
        self.step_num += 1
        self.tokens_seen += cost if cost is not None else batch.n_target_tokens
        return value

    def fit(
        self,
        corpus: Sequence[Pair],
        batch_size: int,
        *,
        max_length: int = 70,
        length_mode: str = "exclude",
        max_steps: int | None = None,
        max_epochs: int | None = None,
        validate: Callable[[Seq2SeqModel], tuple[float | None, float | None]] | None = None,
        on_step: Callable[[int, float], bool | None] | None = None,
        shuffle: bool = True,
    ) -> TrainResult:
        """Train until ``max_steps``, ``max_epochs`` or the schedule says stop.

        ``on_step(step, loss)`` may return True to end training early.
        """
        if max_steps is None and max_epochs is None:
            raise ConfigError("set max_steps or max_epochs")
        epoch_index = 0
        last_loss = float("nan")
        stopped = False
        log = self._open_log()
        try:
            while True:
                seed = int(self.rng.integers(2**31)) if shuffle else None
                plan = plan_batches(corpus, batch_size, max_length, seed, length_mode)
                self.corpus_tokens = plan.total_tokens
                epoch_index += 1
                for b in range(len(plan)):
                    lr = self.schedule.rate(self.step_num + 1, epoch_index)
                    if lr is STOP:
                        stopped = True
                        break
                    start = time.perf_counter()
                    batch = Batch.from_pairs(*plan.materialize(corpus, b))
                    last_loss = self.train_step(batch, lr, plan.costs[b])
                    elapsed = time.perf_counter() - start
                    if log:
                        log.write(f"{self.step_num}\t{lr:.6g}\t{last_loss:.6f}\t{plan.costs[b] / max(elapsed, 1e-9):.1f}\n")
                    if self.checkpoints and self.save_every and self.step_num % self.save_every == 0:
                        self._save(validate)
                    if on_step and on_step(self.step_num, last_loss):
                        stopped = True
                        break
                    if max_steps is not None and self.step_num >= max_steps:
                        break
                if stopped or (max_steps is not None and self.step_num >= max_steps):
                    break
                if max_epochs is not None and epoch_index >= max_epochs:
                    break
        finally:
            if log:
                log.close()
        if self.checkpoints and self.step_num and self.step_num not in self.checkpoints.steps():
            self._save(validate)
        return TrainResult(self.step_num, self.epoch, last_loss, stopped, self.tokens_seen)

    def _save(self, validate) -> None:
        valid_loss = valid_bleu = None
        if validate is not None:
            valid_loss, valid_bleu = validate(self.model)
        self.checkpoints.save(self.step_num, self.epoch, self.model.params.to_arrays(), valid_loss, valid_bleu)
        logger.info("saved checkpoint at step %d (epoch %.3f)", self.step_num, self.epoch)

    def _open_log(self):
        if self.log_path is None:
            return None
        new = not self.log_path.exists()
        fh = open(self.log_path, "a")
        if new:
            fh.write("step\tlr\tloss\ttokens_per_sec\n")
        return fh
