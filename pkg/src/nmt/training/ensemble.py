"""Checkpoint directory bookkeeping, selection and averaging."""

from __future__ import annotations

import csv
import os
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..errors import ConfigError, IncompatibleCheckpointError, InsufficientHistoryError

METADATA_FIELDS = ("step", "epoch", "valid_loss", "valid_bleu")


@dataclass
class EnsembleSpec:
    n: int = 8
    interval: float = 0.03  # spacing between averaged checkpoints, as a fraction of an epoch

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("ensemble size must be >= 1")
        if self.interval <= 0:
            raise ConfigError("ensemble interval must be positive")


def average_checkpoints(paths: Sequence[str | os.PathLike]) -> "OrderedDict[str, np.ndarray]":
    """Elementwise mean of several checkpoints, rounded to 32-bit.

    Values are accumulated in 64-bit after sorting along the checkpoint axis,
    so the result does not depend on the order of ``paths``.

    Raises:
        IncompatibleCheckpointError: if record names or shapes differ.
    """
    if not paths:
        raise ConfigError("no checkpoints to average")
    loaded = [load_checkpoint(p) for p in paths]
    reference = loaded[0]
    for path, ckpt in zip(paths[1:], loaded[1:]):
        if list(ckpt) != list(reference):
            raise IncompatibleCheckpointError(f"incompatible checkpoint {path}: record names differ from {paths[0]}")
        for name, value in ckpt.items():
            if value.shape != reference[name].shape:
                raise IncompatibleCheckpointError(
                    f"incompatible checkpoint {path}: {name} has shape {value.shape}, expected {reference[name].shape}"
                )
    averaged: "OrderedDict[str, np.ndarray]" = OrderedDict()
    n = len(loaded)
    for name in reference:
        stacked = np.sort(np.stack([c[name].astype(np.float64) for c in loaded]), axis=0)
        averaged[name] = (stacked.sum(axis=0) / n).astype(np.float32)
    return averaged


def select_ensemble_checkpoints(history: Sequence[int], spec: EnsembleSpec, steps_per_epoch: float) -> list[int]:
    """Pick the final step and ``n - 1`` predecessors spaced ``interval`` epochs apart.

    Each target step is matched to the nearest saved step; a match farther
    than half the spacing, or one already used, means the history is too
    sparse.

    Raises:
        InsufficientHistoryError: listing the available steps.
    """
    saved = sorted(set(int(s) for s in history))
    if not saved:
        raise InsufficientHistoryError("no checkpoints saved")
    final = saved[-1]
    spacing = spec.interval * steps_per_epoch
    chosen: list[int] = [final]
    for j in range(1, spec.n):
        target = final - j * spacing
        nearest = min(saved, key=lambda s: (abs(s - target), -s))
        if abs(nearest - target) > spacing / 2 or nearest in chosen:
            raise InsufficientHistoryError(
                f"need {spec.n} checkpoints spaced {spacing:g} steps apart ending at {final}; "
                f"available steps: {saved}"
            )
        chosen.append(nearest)
    return chosen


class CheckpointDirectory:
    """``ckpt/step-<N>.nmtf`` files plus ``ckpt/metadata.tsv``, with a retention ring."""

    def __init__(self, root: str | os.PathLike, keep: int = 20):
        self.root = Path(root)
        self.keep = keep
        self.root.mkdir(parents=True, exist_ok=True)

    @property
    def metadata_path(self) -> Path:
        return self.root / "metadata.tsv"

    def path_for(self, step: int) -> Path:
        return self.root / f"step-{step}.nmtf"

    def rows(self) -> list[dict]:
        if not self.metadata_path.exists():
            return []
        with open(self.metadata_path, newline="") as fh:
            rows = list(csv.DictReader(fh, delimiter="\t"))
        return [
            {"step": int(r["step"]), "epoch": float(r["epoch"]),
             "valid_loss": _maybe_float(r["valid_loss"]), "valid_bleu": _maybe_float(r["valid_bleu"])}
            for r in rows
        ]

    def _write_rows(self, rows: list[dict]) -> None:
        tmp = self.metadata_path.with_suffix(".tmp")
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(METADATA_FIELDS)
            for r in rows:
                writer.writerow([r["step"], f"{r['epoch']:.6f}", _fmt(r["valid_loss"]), _fmt(r["valid_bleu"])])
        os.replace(tmp, self.metadata_path)

    def save(self, step: int, epoch: float, arrays, valid_loss=None, valid_bleu=None) -> Path:
        path = self.path_for(step)
        save_checkpoint(path, arrays)
        rows = [r for r in self.rows() if r["step"] != step]
        rows.append({"step": step, "epoch": epoch, "valid_loss": valid_loss, "valid_bleu": valid_bleu})
        rows.sort(key=lambda r: r["step"])
        while self.keep and len(rows) > self.keep:
            dropped = rows.pop(0)
            self.path_for(dropped["step"]).unlink(missing_ok=True)
        self._write_rows(rows)
        return path

    def steps(self) -> list[int]:
        return [r["step"] for r in self.rows() if self.path_for(r["step"]).exists()]

    def steps_per_epoch(self) -> float:
        rows = [r for r in self.rows() if r["epoch"] > 0]
        if not rows:
            raise InsufficientHistoryError("metadata has no epoch information")
        last = rows[-1]
        return last["step"] / last["epoch"]

    def best_by_bleu(self) -> int | None:
        scored = [r for r in self.rows() if r["valid_bleu"] is not None and self.path_for(r["step"]).exists()]
        if not scored:
            return None
        return max(scored, key=lambda r: (r["valid_bleu"], r["step"]))["step"]

    def latest(self) -> int | None:
        steps = self.steps()
        return steps[-1] if steps else None


def _maybe_float(value: str):
    return None if value in ("", "nan", None) else float(value)


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"
