"""The three model families behind one :class:`Seq2SeqModel` interface."""

from .base import BOS, EOS, PAD, RESERVED, UNK, Batch, Seq2SeqModel
from .convs2s import ConvS2S, ConvS2SConfig, effective_context
from .rnn import RnnConfig, RnnSeq2Seq
from .transformer import Transformer, TransformerConfig

FAMILIES = {
    "rnn": (RnnSeq2Seq, RnnConfig),
    "convs2s": (ConvS2S, ConvS2SConfig),
    "transformer": (Transformer, TransformerConfig),
}


def build_model(family: str, config, vocab_size: int, seed: int = 0, dtype="float32") -> Seq2SeqModel:
    try:
        cls, _ = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; expected one of {sorted(FAMILIES)}") from None
    return cls(config, vocab_size, seed=seed, dtype=dtype)


__all__ = [
    "BOS", "EOS", "PAD", "UNK", "RESERVED", "Batch", "Seq2SeqModel", "FAMILIES", "build_model",
    "ConvS2S", "ConvS2SConfig", "RnnConfig", "RnnSeq2Seq", "Transformer", "TransformerConfig",
    "effective_context",
]
