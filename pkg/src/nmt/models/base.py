"""Shared model interface, batching of id sequences, and reserved token ids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..errors import ContractError
from ..nn import ModelParameters, label_smoothed_nll
from ..tensor import Tensor, no_grad

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")


@dataclass
class Batch:
    """Padded id matrices for teacher-forced training.

    ``src`` carries a trailing end marker, ``tgt_in`` starts with the start
    marker and ``tgt_out`` ends with the end marker. Masks are true on real
    (non-pad) positions.
    """

    src: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray

    @property
    def n_target_tokens(self) -> int:
        return int(self.tgt_mask.sum())

    @property
    def size(self) -> int:
        return len(self.src)

    @classmethod
    def from_pairs(cls, sources: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]) -> "Batch":
        if len(sources) != len(targets) or not sources:
            raise ContractError("a batch needs the same positive number of sources and targets")
        src = pad_sequences([list(s) + [EOS] for s in sources])
        tgt_in = pad_sequences([[BOS] + list(t) for t in targets])
        tgt_out = pad_sequences([list(t) + [EOS] for t in targets])
        return cls(src, src != PAD, tgt_in, tgt_out, tgt_out != PAD)


def pad_sequences(seqs: Sequence[Sequence[int]]) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD, dtype=np.int64)
    for row, seq in enumerate(seqs):
        out[row, : len(seq)] = seq
    return out


class Seq2SeqModel:
    """Encoder-decoder translation model over a shared vocabulary.

    Subclasses implement :meth:`forward` (teacher forcing over a
    :class:`Batch`) plus :meth:`start` and :meth:`step` for incremental
    decoding, where ``step`` extends a set of hypotheses by one token each.
    """

    family = "base"

    def __init__(self, config, vocab_size: int, params: ModelParameters):
        self.config = config
        self.vocab_size = vocab_size
        self.params = params

    # -- training -------------------------------------------------------
    def forward(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Log-probabilities of shape ``[batch, target_len, vocab]``."""
        raise NotImplementedError

    def loss(
        self,
        batch: Batch,
        label_smoothing: float = 0.0,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Summed label-smoothed cross-entropy over the real target tokens."""
        log_probs = self.forward(batch, training=training, rng=rng)
        return label_smoothed_nll(log_probs, batch.tgt_out, label_smoothing, batch.tgt_mask)

    def score_sequence(self, src_ids: Sequence[int], tgt_ids: Sequence[int]) -> float:
        """Teacher-forced log-likelihood of ``tgt_ids`` followed by the end marker."""
        batch = Batch.from_pairs([src_ids], [tgt_ids])
        with no_grad():
            log_probs = self.forward(batch).data[0]
        return float(log_probs[np.arange(len(batch.tgt_out[0])), batch.tgt_out[0]].sum())

    # -- incremental decoding -------------------------------------------
    def start(self, src_ids: Sequence[int]) -> tuple[Any, Any]:
        """Encode one source sentence; returns ``(context, initial_state)``."""
        raise NotImplementedError

    def step(self, context: Any, states: list, tokens: np.ndarray) -> tuple[np.ndarray, list]:
        """Feed ``tokens[i]`` to hypothesis ``i``; returns next-token log-probs ``[n, vocab]``."""
        raise NotImplementedError

    # -- persistence ----------------------------------------------------
    def save(self, path) -> None:
        save_checkpoint(path, self.params.to_arrays())

    def load(self, path) -> None:
        self.params.load_arrays(load_checkpoint(path))

    def astype(self, dtype) -> "Seq2SeqModel":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = self.params.astype(dtype)
        return clone

    def num_parameters(self) -> int:
        return self.params.numel()


def check_token(token: int, vocab_size: int) -> None:
    if not 0 <= token < vocab_size:
        raise ContractError(f"token id {token} outside vocabulary of size {vocab_size}")
