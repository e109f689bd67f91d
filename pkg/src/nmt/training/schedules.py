"""Learning-rate schedules keyed on epoch or step."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigError


class _Stop:
    def __repr__(self) -> str:
        return "STOP"

    def __bool__(self) -> bool:
        return False


STOP = _Stop()
"""Returned by a schedule once training should end."""


def lr_halving(epoch: int, base: float = 1.0, start: int = 10) -> float:
    """Constant ``base`` through epoch ``start``, then halved every epoch."""
    if epoch <= start:
        return base
    return base * 2.0 ** -(epoch - start)


def lr_force_anneal(epoch: int, base: float, anneal_start: int, lr_shrink: float, stop_below: float = 1e-5):
    """Fixed ``base`` until ``anneal_start``, then multiplied by ``lr_shrink`` each epoch.

    Returns :data:`STOP` once the rate drops below ``stop_below``.
    """
    if epoch < anneal_start:
        lr = base
    else:
        lr = base * lr_shrink ** (epoch - anneal_start + 1)
    return STOP if lr < stop_below else lr


def lr_noam(step_num: int, d_model: int, warmup_steps: int, paper_literal: bool = False) -> float:
    """Inverse-square-root decay after a linear warmup.

    ``paper_literal`` evaluates the formula as printed, whose second argument
    to ``min`` is ``step^-0.5 * warmup^-1.5`` and is therefore always the
    smaller one.
    """
    step_num = max(step_num, 1)
    if paper_literal:
        second = step_num ** -0.5 * warmup_steps ** -1.5
    else:
        second = step_num * warmup_steps ** -1.5
    return d_model ** -0.5 * min(step_num ** -0.5, second)


def scale_lr_for_batch(lr: float, batch_size: int, reference_batch: int) -> float:
    """Scale ``lr`` by ``sqrt(k)`` when the batch size is multiplied by ``k``."""
    return lr * math.sqrt(batch_size / reference_batch)


@dataclass
class ScheduleConfig:
    kind: str = "constant"  # constant | halving | force_anneal | noam
    lr: float = 1.0
    halve_start_epoch: int = 10
    anneal_start_epoch: int = 50
    lr_shrink: float = 0.2
    warmup_steps: int = 4000
    d_model: int = 512
    stop_below: float = 1e-5
    paper_literal_noam: bool = False

    def __post_init__(self):
        if self.kind not in ("constant", "halving", "force_anneal", "noam"):
            raise ConfigError(f"unknown schedule {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0 < self.lr_shrink < 1:
            raise ConfigError("lr_shrink must lie in (0, 1)")

    def rate(self, step_num: int, epoch: int):
        """Learning rate for optimizer step ``step_num`` inside (1-based) ``epoch``."""
        if self.kind == "constant":
            return self.lr
        if self.kind == "halving":
            return lr_halving(epoch, self.lr, self.halve_start_epoch)
        if self.kind == "force_anneal":
            return lr_force_anneal(epoch, self.lr, self.anneal_start_epoch, self.lr_shrink, self.stop_below)
        return self.lr * lr_noam(step_num, self.d_model, self.warmup_steps, self.paper_literal_noam)
