"""scikit-learn style wrapper: ``Translator().fit(sources, targets).predict(new_sources)``."""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import build_config
from .corpus import BpeEncoder, SubwordVocabulary, learn_bpe
from .decoding import PenaltyConfig
from .errors import ContractError
from .evaluation import corpus_bleu
from . import pipeline


def check_sentences(X, name: str = "X") -> list[str]:
    """A list of strings, or a ContractError naming the offending argument."""
    if isinstance(X, str):
        raise ContractError(f"{name} must be a sequence of sentences, not a single string")
    try:
        items = list(X)
    except TypeError:
        raise ContractError(f"{name} must be an iterable of strings") from None
    for i, item in enumerate(items):
        if not isinstance(item, str):
            raise ContractError(f"{name}[{i}] is {type(item).__name__}, expected str")
    return items


def check_parallel(X, y) -> tuple[list[str], list[str]]:
    X, y = check_sentences(X, "X"), check_sentences(y, "y")
    if len(X) != len(y):
        raise ContractError(f"X has {len(X)} sentences but y has {len(y)}")
    if not X:
        raise ContractError("cannot fit on an empty corpus")
    return X, y


class Translator(BaseEstimator):
    """Train one model family on whitespace-tokenized sentence pairs, in memory.

    Parameters mirror the experiment config keys; ``overrides`` takes any
    further key/value pairs. Fitted attributes end with an underscore.
    """

    def __init__(
        self,
        preset: str = "transformer_tiny",
        max_steps: int = 3000,
        batch_size: int | None = None,
        lr: float | None = None,
        bpe_merges: int = 0,
        beam_size: int = 5,
        length_penalty: float = 2.0,
        penalty_kind: str = "f1",
        seed: int = 1,
        overrides: dict | None = None,
    ):
        self.preset = preset
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.lr = lr
        self.bpe_merges = bpe_merges
        self.beam_size = beam_size
        self.length_penalty = length_penalty
        self.penalty_kind = penalty_kind
        self.seed = seed
        self.overrides = overrides

    def _config(self):
        values = {
            "preset": self.preset, "max_steps": self.max_steps, "bpe_merges": self.bpe_merges,
            "beam_size": self.beam_size, "length_penalty": self.length_penalty,
            "penalty_kind": self.penalty_kind, "seed": self.seed,
        }
        if self.batch_size is not None:
            values["batch_size"] = self.batch_size
        if self.lr is not None:
            values["lr"] = self.lr
        return build_config(values, self.overrides or {})

    def fit(self, X, y):
        X, y = check_parallel(X, y)
        cfg = self._config()
        codes = learn_bpe(X + y, cfg.bpe_merges)
        encoder = BpeEncoder(codes)
        vocab = SubwordVocabulary.build([encoder(s) for s in X + y], cfg.max_vocab or None)
        pairs = [(vocab.encode(encoder(s)), vocab.encode(encoder(t))) for s, t in zip(X, y)]
        model = pipeline.make_model(cfg, len(vocab))
        trainer = pipeline.make_trainer(cfg, model)
        self.train_result_ = trainer.fit(pairs, cfg.batch_size, **pipeline.fit_kwargs(cfg))
        self.config_ = cfg
        self.codes_ = codes
        self.vocab_ = vocab
        self.model_ = model
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("Translator is not fitted yet; call fit first")

    def predict(self, X) -> list[str]:
        self._check_fitted()
        X = check_sentences(X)
        penalty = PenaltyConfig(self.penalty_kind, self.length_penalty, self.beam_size)
        results = pipeline.translate_lines(self.model_, X, BpeEncoder(self.codes_), self.vocab_, penalty, self.config_)
        return [ranked[0][1] for ranked in results]

    def score(self, X, y, smooth: bool = True) -> float:
        """Corpus BLEU of ``predict(X)`` against ``y``."""
        X, y = check_parallel(X, y)
        return corpus_bleu(self.predict(X), y, smooth=smooth).bleu
