"""Desk-scale neural machine translation: RNN, ConvS2S and Transformer on a numpy autodiff core."""

from .config import ExperimentConfig, PRESETS, build_config, parse_config
from .decoding import Hypothesis, PenaltyConfig, beam_search, greedy_decode, length_penalty, score
from .errors import (
    CheckpointFormatError, ConfigError, ContractError, DimensionError, EmptyCorpusError,
    IncompatibleCheckpointError, InsufficientHistoryError, NMTError, TrainingDivergenceError,
)
from .evaluation import BleuReport, bleu_tokenize, corpus_bleu
from .models import build_model
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "PRESETS", "build_config", "parse_config", "Hypothesis", "PenaltyConfig",
    "beam_search", "greedy_decode", "length_penalty", "score", "CheckpointFormatError", "ConfigError",
    "ContractError", "DimensionError", "EmptyCorpusError", "IncompatibleCheckpointError",
    "InsufficientHistoryError", "NMTError", "TrainingDivergenceError", "BleuReport", "bleu_tokenize",
    "corpus_bleu", "build_model", "Tensor", "backward", "no_grad",
]
