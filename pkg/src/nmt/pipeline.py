"""Glue between an :class:`ExperimentConfig` and the corpus, model, training and decoding parts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig
from .corpus import (
    BpeCodes, BpeEncoder, FilterPipeline, SubwordVocabulary, corpus_stats, decode_subwords, extract_directory,
    language_filter, learn_bpe, load_english_vocab, non_empty, read_exclusion_list, read_lines,
    translated_filter, write_lines,
)
from .decoding import PenaltyConfig, beam_search, greedy_decode, max_output_length, score, translate_batch
from .errors import EmptyCorpusError
from .evaluation import corpus_bleu
from .models import Batch, Seq2SeqModel, build_model
from .tensor import no_grad
from .training import CheckpointDirectory, Trainer, make_optimizer

logger = logging.getLogger(__name__)


@dataclass
class RunLayout:
    root: Path

    @property
    def resolved_config(self) -> Path:
        return self.root / "resolved-config"

    @property
    def codes(self) -> Path:
        return self.root / "bpe.codes"

    @property
    def vocab(self) -> Path:
        return self.root / "vocab.txt"

    @property
    def data(self) -> Path:
        return self.root / "data"

    @property
    def ckpt(self) -> Path:
        return self.root / "ckpt"

    @property
    def train_log(self) -> Path:
        return self.root / "train.log"

    @property
    def lock(self) -> Path:
        return self.root / ".lock"

    def bpe_file(self, split: str, lang: str) -> Path:
        return self.data / f"{split}.bpe.{lang}"


def layout(cfg: ExperimentConfig) -> RunLayout:
    return RunLayout(Path(cfg.run_dir))


# -- preprocessing ----------------------------------------------------------------------


def clean_pipeline(cfg: ExperimentConfig) -> FilterPipeline:
    """Filters judge whichever side is Vietnamese; none apply to other language pairs."""
    filters = [non_empty]
    vi_side = "tgt" if cfg.tgt_lang == "vi" else "src" if cfg.src_lang == "vi" else None
    side_filters = []
    if vi_side and cfg.filter_untranslated:
        side_filters.append(translated_filter(load_english_vocab()))
    if vi_side and cfg.filter_language:
        side_filters.append(language_filter())
    for f in side_filters:
        filters.append(f if vi_side == "tgt" else (lambda g: (lambda s, t: g(t, s)))(f))
    exclude = read_exclusion_list(cfg.exclusion_list) if cfg.exclusion_list else frozenset()
    return FilterPipeline(filters, exclude)


def read_raw_split(cfg: ExperimentConfig, split: str) -> tuple[list[str], list[str]]:
    d = Path(cfg.data_dir)
    return read_lines(d / f"{split}.{cfg.src_lang}"), read_lines(d / f"{split}.{cfg.tgt_lang}")


def preprocess(cfg: ExperimentConfig) -> dict:
    """Extract (optional), clean, learn joint BPE, segment splits and build the vocabulary."""
    run = layout(cfg)
    run.data.mkdir(parents=True, exist_ok=True)
    if cfg.html_dir:
        extracted = extract_directory(cfg.html_dir, cfg.source_selector, cfg.target_selector)
        Path(cfg.data_dir).mkdir(parents=True, exist_ok=True)
        write_lines(Path(cfg.data_dir) / f"{cfg.train_split}.{cfg.src_lang}", extracted.sources)
        write_lines(Path(cfg.data_dir) / f"{cfg.train_split}.{cfg.tgt_lang}", extracted.targets)
    src, tgt = read_raw_split(cfg, cfg.train_split)
    _, src, tgt = clean_pipeline(cfg).run(src, tgt)
    if not src:
        raise EmptyCorpusError("empty corpus after filtering")
    codes = learn_bpe(src + tgt, cfg.bpe_merges)
    codes.save(run.codes)
    encoder = BpeEncoder(codes)
    splits = {cfg.train_split: (src, tgt)}
    if cfg.valid_split:
        splits[cfg.valid_split] = read_raw_split(cfg, cfg.valid_split)
    for split, (s, t) in splits.items():
        write_lines(run.bpe_file(split, cfg.src_lang), [encoder(x) for x in s])
        write_lines(run.bpe_file(split, cfg.tgt_lang), [encoder(x) for x in t])
    train_bpe = read_lines(run.bpe_file(cfg.train_split, cfg.src_lang)) + read_lines(
        run.bpe_file(cfg.train_split, cfg.tgt_lang)
    )
    vocab = SubwordVocabulary.build(train_bpe, cfg.max_vocab or None)
    vocab.save(run.vocab)
    stats = corpus_stats([run.bpe_file(sp, lang) for sp in splits for lang in (cfg.src_lang, cfg.tgt_lang)])
    return {"pairs": len(src), "merges": len(codes), "vocab": len(vocab), "stats": stats}


def load_encoded_split(cfg: ExperimentConfig, split: str, vocab: SubwordVocabulary) -> list[tuple[list[int], list[int]]]:
    run = layout(cfg)
    src = read_lines(run.bpe_file(split, cfg.src_lang))
    tgt = read_lines(run.bpe_file(split, cfg.tgt_lang))
    return [(vocab.encode(s), vocab.encode(t)) for s, t in zip(src, tgt)]


# -- models and training ------------------------------------------------------------------


def make_model(cfg: ExperimentConfig, vocab_size: int, dtype="float32") -> Seq2SeqModel:
    return build_model(cfg.family, cfg.model_config(), vocab_size, seed=cfg.seed, dtype=dtype)


def make_trainer(cfg: ExperimentConfig, model: Seq2SeqModel, checkpoints: CheckpointDirectory | None = None,
                 log_path=None) -> Trainer:
    optimizer = make_optimizer(cfg.optimizer, list(model.params.values()), **cfg.optimizer_hyper())
    return Trainer(
        model,
        optimizer,
        cfg.schedule_config(),
        clip_norm=cfg.clip_norm or None,
        label_smoothing=cfg.label_smoothing,
        normalize=cfg.normalize,
        seed=cfg.seed,
        checkpoints=checkpoints,
        save_every=cfg.save_every,
        log_path=log_path,
    )


def fit_kwargs(cfg: ExperimentConfig) -> dict:
    return {
        "max_length": cfg.max_length,
        "length_mode": cfg.length_mode,
        "max_steps": cfg.max_steps or None,
        "max_epochs": cfg.max_epochs or None,
    }


def validation_hook(cfg: ExperimentConfig, pairs, vocab: SubwordVocabulary, max_sentences: int = 500):
    """Validation loss per target token and greedy BLEU on up to ``max_sentences`` pairs."""
    pairs = [p for p in pairs if p[0] and p[1]][:max_sentences]
    if not pairs:
        return None

    def validate(model: Seq2SeqModel):
        total = tokens = 0.0
        for i in range(0, len(pairs), 64):
            chunk = pairs[i : i + 64]
            batch = Batch.from_pairs([s[: cfg.max_length] for s, _ in chunk], [t[: cfg.max_length] for _, t in chunk])
            with no_grad():
                total += float(model.loss(batch).item())
            tokens += batch.n_target_tokens
        hyps = [ids_to_text(greedy_decode(model, s[: cfg.max_length], output_limit(cfg, len(s))), vocab) for s, _ in pairs]
        refs = [ids_to_text(t, vocab) for _, t in pairs]
        return total / tokens, corpus_bleu(hyps, refs).bleu

    return validate


def output_limit(cfg: ExperimentConfig, src_len: int) -> int:
    return cfg.max_output_len or max_output_length(src_len)


def ids_to_text(ids: Sequence[int], vocab: SubwordVocabulary) -> str:
    return decode_subwords(vocab.decode(ids))


# -- translation --------------------------------------------------------------------------


def load_translation_assets(cfg: ExperimentConfig):
    run = layout(cfg)
    return BpeEncoder(BpeCodes.load(run.codes)), SubwordVocabulary.load(run.vocab)


def translate_lines(models, lines: Sequence[str], encoder: BpeEncoder, vocab: SubwordVocabulary,
                    penalty: PenaltyConfig, cfg: ExperimentConfig, nbest: int = 1):
    """Returns one list of ``(score, sentence)`` per input line, best first."""
    sources = [vocab.encode(encoder(line))[: cfg.max_length] for line in lines]
    results = []
    if nbest <= 1:
        hyps = [[h] for h in _translate_all(models, sources, penalty, cfg)]
    else:
        hyps = [beam_search(models, s, penalty, output_limit(cfg, len(s)), nbest=nbest) for s in sources]
    for ranked in hyps:
        results.append([(score(h, penalty), ids_to_text(h.output, vocab)) for h in ranked])
    return results


def _translate_all(models, sources, penalty, cfg):
    # group by output limit so translate_batch can share one setting
    out = [None] * len(sources)
    by_limit: dict[int, list[int]] = {}
    for i, s in enumerate(sources):
        by_limit.setdefault(output_limit(cfg, len(s)), []).append(i)
    for limit, idx in sorted(by_limit.items()):
        for i, h in zip(idx, translate_batch(models, [sources[i] for i in idx], penalty, limit)):
            out[i] = h
    return out


def alpha_grid(spec: str) -> list[float]:
    """``"0.1:3.0:0.1"`` to the inclusive list of values."""
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise ValueError(f"range must look like start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise ValueError(f"empty alpha range {spec!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(n)]
