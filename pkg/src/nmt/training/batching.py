"""Token-budget batching of sentence pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError, EmptyCorpusError

Pair = tuple[Sequence[int], Sequence[int]]


def pair_cost(src: Sequence[int], tgt: Sequence[int]) -> int:
    """Tokens a pair consumes: the longer of its two sides, in subwords."""
    return max(len(src), len(tgt))


@dataclass
class BatchPlan:
    batches: list[list[int]]
    costs: list[int]
    budget: int
    max_length: int
    truncate: bool = False

    def __len__(self) -> int:
        return len(self.batches)

    @property
    def total_tokens(self) -> int:
        return int(sum(self.costs))

    def materialize(self, corpus: Sequence[Pair], index: int) -> tuple[list, list]:
        """Source and target id lists of batch ``index`` (truncated if configured)."""
        cut = self.max_length if self.truncate else None
        rows = [corpus[i] for i in self.batches[index]]
        return [list(s)[:cut] for s, _ in rows], [list(t)[:cut] for _, t in rows]


def plan_batches(
    corpus: Sequence[Pair],
    batch_size_tokens: int,
    max_length: int = 70,
    shuffle_seed: int | None = None,
    mode: str = "exclude",
) -> BatchPlan:
    """Greedily pack pairs into batches whose summed cost stays within the budget.

    Pairs longer than ``max_length`` on either side are dropped
    (``mode="exclude"``) or cut to ``max_length`` (``mode="truncate"``). A
    pair that alone exceeds the budget forms a singleton batch.

    Raises:
        EmptyCorpusError: if no pair survives the length filter.
    """
    if mode not in ("exclude", "truncate"):
        raise ConfigError(f"unknown length mode {mode!r}")
    if batch_size_tokens < 1:
        raise ConfigError("batch_size must be a positive token count")
    if not len(corpus):
        raise EmptyCorpusError("empty corpus after filtering")
    order = np.arange(len(corpus))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(corpus))
    batches: list[list[int]] = []
    costs: list[int] = []
    current: list[int] = []
    cost = 0
    for idx in order.tolist():
        src, tgt = corpus[idx]
        if mode == "exclude" and max(len(src), len(tgt)) > max_length:
            continue
        if not len(src) or not len(tgt):
            continue
        c = min(pair_cost(src, tgt), max_length)
        if current and cost + c > batch_size_tokens:
            batches.append(current)
            costs.append(cost)
            current, cost = [], 0
        current.append(idx)
        cost += c
    if current:
        batches.append(current)
        costs.append(cost)
    if not batches:
        raise EmptyCorpusError("empty corpus after filtering")
    return BatchPlan(batches, costs, batch_size_tokens, max_length, truncate=(mode == "truncate"))
