"""Declarative experiment configuration: a flat ``key = value`` file plus presets."""

from __future__ import annotations

import configparser
import dataclasses
import difflib
import os
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

from .decoding import PenaltyConfig
from .errors import ConfigError
from .models import ConvS2SConfig, RnnConfig, TransformerConfig
from .training import EnsembleSpec, ScheduleConfig

FAMILIES = ("rnn", "convs2s", "transformer")


@dataclass
class ExperimentConfig:
    preset: str = ""
    family: str = "transformer"
    # model shape
    layers: int = 1
    hidden: int = 64  # rnn cell size per layer
    encoder: str = "2x32x3"  # convs2s groups: count x channels x kernel, comma separated
    decoder: str = "2x32x3"
    embed_dim: int = 32
    out_embed_dim: int = 0  # 0 means embed_dim
    faithful_scaling: bool = True
    paper_literal: bool = False
    d_model: int = 32
    heads: int = 2
    d_ff: int = 64
    pe_base: float = 10000.0
    pe_base_odd: float = 10000.0
    dropout: float = 0.1
    # data
    max_length: int = 70
    length_mode: str = "exclude"  # exclude | truncate
    batch_size: int = 4096  # tokens per step
    data_dir: str = "data"
    src_lang: str = "en"
    tgt_lang: str = "vi"
    train_split: str = "train"
    valid_split: str = ""
    bpe_merges: int = 32000
    max_vocab: int = 0  # 0 means unbounded
    filter_untranslated: bool = True
    filter_language: bool = True
    exclusion_list: str = ""
    html_dir: str = ""
    source_selector: str = ""
    target_selector: str = ""
    # optimization
    optimizer: str = "adam"
    momentum: float = 0.99
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    schedule: str = "noam"
    lr: float = 1.0
    halve_start_epoch: int = 10
    anneal_start_epoch: int = 50
    lr_shrink: float = 0.2
    warmup_steps: int = 4000
    stop_below: float = 1e-5
    paper_literal_noam: bool = False
    clip_norm: float = 5.0  # 0 disables clipping
    label_smoothing: float = 0.1
    normalize: str = "tokens"  # tokens | sentences
    max_steps: int = 0
    max_epochs: int = 64
    save_every: int = 1000
    keep_checkpoints: int = 20
    # decoding and ensembling
    beam_size: int = 5
    penalty_kind: str = "f1"
    length_penalty: float = 2.0
    max_output_len: int = 0  # 0 means derived from the source length
    ensemble_n: int = 8
    ensemble_interval: float = 0.03
    seed: int = 1
    run_dir: str = "run"

    def __post_init__(self):
        self.validate()

    # -- validation -----------------------------------------------------------
    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"family: unknown model family {self.family!r}; expected one of {FAMILIES}")
        choices = {
            "length_mode": ("exclude", "truncate"),
            "optimizer": ("sgd", "nag", "adam"),
            "schedule": ("constant", "halving", "force_anneal", "noam"),
            "normalize": ("tokens", "sentences"),
            "penalty_kind": ("f1", "f2", "none"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key}: {getattr(self, key)!r} not in {allowed}")
        for key in ("batch_size", "max_length", "beam_size", "save_every"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout: must lie in [0, 1)")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing: must lie in [0, 1)")
        if self.max_steps <= 0 and self.max_epochs <= 0:
            raise ConfigError("set max_steps or max_epochs")
        # constructing the derived records runs their own checks
        self.model_config()
        self.schedule_config()
        self.penalty_config()
        self.ensemble_spec()

    # -- derived records ------------------------------------------------------
    def model_config(self):
        if self.family == "rnn":
            return RnnConfig(self.layers, self.hidden, self.dropout, self.max_length)
        if self.family == "convs2s":
            return ConvS2SConfig(
                parse_layer_groups(self.encoder, "encoder"),
                parse_layer_groups(self.decoder, "decoder"),
                self.embed_dim,
                self.out_embed_dim or None,
                self.dropout,
                self.max_length,
                self.faithful_scaling,
                self.paper_literal,
            )
        return TransformerConfig(
            self.layers, self.d_model, self.heads, self.d_ff, self.dropout, self.max_length,
            self.pe_base, self.pe_base_odd,
        )

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(
            self.schedule, self.lr, self.halve_start_epoch, self.anneal_start_epoch, self.lr_shrink,
            self.warmup_steps, self.d_model, self.stop_below, self.paper_literal_noam,
        )

    def optimizer_hyper(self) -> dict:
        if self.optimizer == "nag":
            return {"momentum": self.momentum}
        if self.optimizer == "adam":
            return {"beta1": self.adam_beta1, "beta2": self.adam_beta2, "epsilon": self.adam_eps}
        return {}

    def penalty_config(self, beam: int | None = None, alpha: float | None = None) -> PenaltyConfig:
        return PenaltyConfig(
            self.penalty_kind,
            self.length_penalty if alpha is None else alpha,
            self.beam_size if beam is None else beam,
        )

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(self.ensemble_n, self.ensemble_interval)

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in self.to_dict().items())

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())


def parse_layer_groups(text: str, key: str = "layers") -> list[tuple[int, int, int]]:
    """``"4x512x3,2x1024x3"`` to ``[(4, 512, 3), (2, 1024, 3)]``."""
    groups = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        bits = part.lower().split("x")
        if len(bits) != 3 or not all(b.isdigit() for b in bits):
            raise ConfigError(f"{key}: expected groups like 4x512x3, got {part!r}")
        groups.append(tuple(int(b) for b in bits))
    if not groups:
        raise ConfigError(f"{key}: no layer groups given")
    return groups


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# -- presets -------------------------------------------------------------------------

_CONVS2S_COMMON = dict(
    family="convs2s", optimizer="nag", momentum=0.99, schedule="force_anneal", lr=0.5,
    anneal_start_epoch=50, lr_shrink=0.2, label_smoothing=0.1, dropout=0.15, beam_size=10,
    max_epochs=64, batch_size=4096,
)
_B_BASE = dict(
    _CONVS2S_COMMON, encoder="4x256x3", decoder="3x256x3", embed_dim=256, dropout=0.1,
    anneal_start_epoch=24, lr_shrink=0.1, max_epochs=32,
)
_TRANSFORMER_COMMON = dict(
    family="transformer", optimizer="adam", schedule="noam", lr=1.0, label_smoothing=0.1, beam_size=5,
    max_epochs=64,
)
_C2 = dict(
    _TRANSFORMER_COMMON, layers=8, d_model=1024, heads=16, d_ff=4096, dropout=0.15, warmup_steps=16000,
    batch_size=2048,
)
_TINY_TRAINING = dict(
    optimizer="adam", schedule="constant", lr=0.003, batch_size=256, max_steps=3000, max_epochs=0,
    dropout=0.0, label_smoothing=0.0, max_length=70, save_every=500, beam_size=5,
)

PRESETS: dict[str, dict[str, Any]] = {
    "rnn_baseline": dict(
        family="rnn", layers=2, hidden=1024, dropout=0.15, optimizer="sgd", schedule="halving", lr=1.0,
        halve_start_epoch=10, batch_size=1280, length_mode="truncate", label_smoothing=0.0, beam_size=10,
        max_epochs=32,
    ),
    "B_base_table": dict(_B_BASE),
    "B_base_text": dict(_B_BASE, lr=0.25),
    "B_base": dict(_B_BASE),
    "B_1": dict(
        _CONVS2S_COMMON, encoder="4x512x3,2x1024x3,1x2048x1", decoder="4x512x3,2x1024x3,1x2048x1",
        embed_dim=384,
    ),
    "B_2": dict(
        _CONVS2S_COMMON, encoder="9x512x3,4x1024x3,2x2048x1", decoder="9x512x3,4x1024x3,2x2048x1",
        embed_dim=768, out_embed_dim=512,
    ),
    "B_3": dict(
        _CONVS2S_COMMON, encoder="8x512x3,4x1024x3,2x2048x1,1x4096x1",
        decoder="8x512x3,4x1024x3,2x2048x1,1x4096x1", embed_dim=768,
    ),
    "C_base": dict(
        _TRANSFORMER_COMMON, layers=2, d_model=256, heads=4, d_ff=1024, dropout=0.1, warmup_steps=4000,
        batch_size=4096,
    ),
    "C_1": dict(
        _TRANSFORMER_COMMON, layers=6, d_model=512, heads=16, d_ff=2048, dropout=0.15, warmup_steps=16000,
        batch_size=4096,
    ),
    "C_2": dict(_C2),
    "combined": dict(_C2, beam_size=5, length_penalty=1.5, ensemble_n=8, ensemble_interval=0.03),
    "rnn_tiny": dict(_TINY_TRAINING, family="rnn", layers=2, hidden=64),
    "convs2s_tiny": dict(_TINY_TRAINING, family="convs2s", encoder="2x32x3", decoder="2x32x3", embed_dim=32),
    "transformer_tiny": dict(_TINY_TRAINING, family="transformer", layers=1, d_model=32, heads=2, d_ff=64),
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            if text.endswith("%"):
                return float(text[:-1]) / 100.0
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {text!r}") from None
    return text


def _check_keys(keys) -> None:
    for key in keys:
        if key not in _FIELD_TYPES:
            hint = difflib.get_close_matches(key, list(_FIELD_TYPES), n=1)
            suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown config key {key!r}{suggestion}")


def build_config(values: Mapping[str, Any], overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Expand ``preset`` (if any), then apply ``values`` and ``overrides`` on top."""
    merged = dict(values)
    merged.update(overrides or {})
    _check_keys(merged)
    preset = str(merged.get("preset", "") or "").strip()
    if not preset and "family" not in merged:
        raise ConfigError("missing required key 'family' (or a 'preset' that sets it)")
    base: dict[str, Any] = {}
    if preset:
        if preset not in PRESETS:
            hint = difflib.get_close_matches(preset, list(PRESETS), n=1)
            raise ConfigError(f"preset: unknown preset {preset!r}" + (f"; did you mean {hint[0]!r}?" if hint else ""))
        base = dict(PRESETS[preset])
    base.update({k: _coerce(k, v) for k, v in merged.items()})
    base["preset"] = preset
    return ExperimentConfig(**base)


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Raw key/value pairs from a flat file; ``=`` or ``:`` separate, ``#`` and ``;`` comment."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True)
    parser.optionxform = str  # keep key case
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        parser.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return dict(parser["config"])


def parse_config(path: str | os.PathLike, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    return build_config(read_config_file(path), overrides)


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out
