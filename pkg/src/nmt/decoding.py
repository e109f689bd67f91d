"""Beam search with length normalization, shared by every model family."""

from __future__ import annotations

import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import ConfigError
from .models.base import BOS, EOS, PAD, Seq2SeqModel

PENALTY_KINDS = ("f1", "f2", "none")


@dataclass(frozen=True)
class PenaltyConfig:
    kind: str = "f1"
    alpha: float = 2.0
    beam: int = 5

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ConfigError(f"unknown length penalty {self.kind!r}; expected one of {PENALTY_KINDS}")
        if self.beam < 1:
            raise ConfigError("beam size must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")


def length_penalty(length: int, cfg: PenaltyConfig) -> float:
    """``f1 = ((5 + |Y|) / 6) ** alpha``, ``f2 = (1 + |Y|) ** alpha``, or 1."""
    if length < 0:
        raise ValueError("length must be >= 0")
    if cfg.kind == "f1":
        return ((5.0 + length) / 6.0) ** cfg.alpha
    if cfg.kind == "f2":
        return (1.0 + length) ** cfg.alpha
    return 1.0


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]  # generated ids, including the end marker once finished
    logprob: float
    state: Any = field(default=None, repr=False, compare=False)  # one decoder state per model
    finished: bool = False
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def output(self) -> list[int]:
        """Token ids without the end marker."""
        return list(self.tokens[:-1] if self.finished else self.tokens)


def score(h: Hypothesis, cfg: PenaltyConfig) -> float:
    """Log-probability divided by the length penalty of ``|Y|``."""
    return h.logprob / length_penalty(len(h.tokens), cfg)


def _rank_key(value: float, tokens: tuple[int, ...]):
    return (-value, tokens)


@dataclass
class DecodeStats:
    """Generated-token throughput of the decode calls made so far."""

    tokens: int = 0
    seconds: float = 0.0

    @property
    def tokens_per_sec(self) -> float:
        return self.tokens / self.seconds if self.seconds > 0 else 0.0


STATS = DecodeStats()

BANNED = (PAD, BOS)  # ids never generated


class _Ensemble:
    """Average of the next-token distributions of several models."""

    def __init__(self, models: Sequence[Seq2SeqModel], src_ids: Sequence[int]):
        self.models = list(models)
        vocab = {m.vocab_size for m in self.models}
        if len(vocab) != 1:
            raise ConfigError("ensembled models must share one vocabulary")
        self.vocab_size = vocab.pop()
        started = [m.start(src_ids) for m in self.models]
        self.contexts = [c for c, _ in started]
        self.initial = tuple(s for _, s in started)

    def step(self, states: list[tuple], tokens: np.ndarray) -> tuple[np.ndarray, list[tuple]]:
        per_model = []
        new_states = []
        for j, model in enumerate(self.models):
            lp, ns = model.step(self.contexts[j], [s[j] for s in states], tokens)
            per_model.append(np.asarray(lp, dtype=np.float64))
            new_states.append(ns)
        if len(per_model) == 1:
            log_probs = per_model[0]
        else:
            stacked = np.stack(per_model)
            top = stacked.max(axis=0)
            log_probs = top + np.log(np.exp(stacked - top).mean(axis=0))
        log_probs = log_probs.copy()
        log_probs[:, list(BANNED)] = -np.inf
        return log_probs, [tuple(ns[i] for ns in new_states) for i in range(len(states))]


def _as_models(model) -> list[Seq2SeqModel]:
    return list(model) if isinstance(model, (list, tuple)) else [model]


def beam_search(
    model,
    src_ids: Sequence[int],
    cfg: PenaltyConfig,
    max_output_len: int = 70,
    nbest: int = 1,
) -> Hypothesis | list[Hypothesis]:
    """Find the highest scoring translation of ``src_ids``.

    ``model`` is one model or a list whose distributions are averaged.
    Live hypotheses are ranked by raw log-probability; the length penalty is
    applied only to finished ones. The search ends when ``max_output_len``
    tokens have been generated or when the finished pool holds ``beam``
    entries and no live hypothesis can still beat the worst of them, using
    the optimistic bound ``logprob / lp(max_output_len)``.

    If nothing finishes, the best live hypothesis is returned with
    ``truncated=True``. With ``nbest > 1`` a ranked list is returned; when
    fewer than ``nbest`` hypotheses finished, truncated ones fill the tail.
    """
    if max_output_len < 1:
        raise ConfigError("max_output_len must be >= 1")
    started = time.perf_counter()
    ens = _Ensemble(_as_models(model), src_ids)
    b = cfg.beam
    pool_size = max(b, nbest)
    live = [Hypothesis((), 0.0, ens.initial)]
    finished: list[tuple[float, Hypothesis]] = []
    generated = 0

    for t in range(1, max_output_len + 1):
        feed = np.asarray([h.tokens[-1] if h.tokens else BOS for h in live], dtype=np.int64)
        log_probs, states = ens.step([h.state for h in live], feed)
        generated += len(live)
        totals = np.asarray([h.logprob for h in live])[:, None] + log_probs
        candidates = []
        flat = totals.reshape(-1)
        finite = np.flatnonzero(np.isfinite(flat))
        # a cheap pre-cut keeps sorting bounded; ties at the cut are kept
        if len(finite) > b:
            cut = np.partition(flat[finite], len(finite) - b)[len(finite) - b]
            finite = finite[flat[finite] >= cut]
        for idx in finite.tolist():
            i, tok = divmod(idx, ens.vocab_size)
            candidates.append((float(flat[idx]), live[i].tokens + (tok,), i))
        candidates.sort(key=lambda c: _rank_key(c[0], c[1]))
        next_live = []
        for value, tokens, i in candidates[:b]:
            if tokens[-1] == EOS:
                h = Hypothesis(tokens, value, None, finished=True)
                finished.append((score(h, cfg), h))
            else:
                next_live.append(Hypothesis(tokens, value, states[i]))
        finished.sort(key=lambda f: _rank_key(f[0], f[1].tokens))
        del finished[pool_size:]
        live = next_live
        if not live or t == max_output_len:
            break
        if len(finished) >= pool_size:
            bound = live[0].logprob / length_penalty(max_output_len, cfg)
            if bound <= finished[-1][0]:
                break

    STATS.tokens += generated
    STATS.seconds += time.perf_counter() - started
    ranked = [h for _, h in finished]
    if len(ranked) < nbest or not ranked:
        # unfinished hypotheses fill the remaining n-best slots, flagged as truncated
        for h in live:
            h.truncated = True
        ranked += sorted(live, key=lambda h: _rank_key(score(h, cfg), h.tokens))
    return ranked[:nbest] if nbest > 1 else ranked[0]


def greedy_decode(model, src_ids: Sequence[int], max_output_len: int = 70) -> list[int]:
    """Arg-max decoding; returns the output ids without the end marker."""
    ens = _Ensemble(_as_models(model), src_ids)
    state, token, out = ens.initial, BOS, []
    for _ in range(max_output_len):
        log_probs, states = ens.step([state], np.asarray([token]))
        token = int(np.argmax(log_probs[0]))
        if token == EOS:
            break
        out.append(token)
        state = states[0]
    return out


def thread_count() -> int:
    """Worker threads allowed by ``NMT_THREADS`` (default 1)."""
    raw = os.environ.get("NMT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"NMT_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


@contextmanager
def limited_threads(n: int | None = None) -> Iterator[int]:
    """Cap BLAS threads to ``n`` (default from ``NMT_THREADS``) for the duration."""
    from threadpoolctl import threadpool_limits

    n = thread_count() if n is None else n
    with threadpool_limits(limits=n):
        yield n


def translate_batch(
    model,
    sources: Sequence[Sequence[int]],
    cfg: PenaltyConfig,
    max_output_len: int = 70,
    threads: int | None = None,
) -> list[Hypothesis]:
    """Beam-search every source; results keep input order whatever the thread count."""
    threads = thread_count() if threads is None else threads
    run = lambda src: beam_search(model, src, cfg, max_output_len)  # noqa: E731
    if threads <= 1 or len(sources) <= 1:
        return [run(s) for s in sources]
    with limited_threads(1), ThreadPool(threads) as pool:
        return pool.map(run, sources)


def max_output_length(src_len: int, ratio: float = 1.5, slack: int = 10, cap: int = 200) -> int:
    return int(min(cap, math.ceil(src_len * ratio) + slack))
