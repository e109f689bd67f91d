"""Self-attention encoder-decoder (post-norm residual sublayers)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import tensor as T
from ..errors import ConfigError, ContractError, DimensionError
from ..nn import ModelParameters, linear, scaled_normal_init
from ..tensor import Tensor, no_grad
from .base import EOS, Batch, Seq2SeqModel, check_token

MASK_VALUE = -1e9


@dataclass
class TransformerConfig:
    layers: int = 1
    d_model: int = 32
    heads: int = 2
    d_ff: int = 64
    dropout: float = 0.1
    max_length: int = 70
    pe_base: float = 10000.0
    pe_base_odd: float = 10000.0  # printed as 1000 for odd dimensions; treated as a typo
    layer_norm_epsilon: float = 1e-6

    def __post_init__(self):
        if self.heads < 1 or self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @property
    def d_v(self) -> int:
        return self.d_model // self.heads


@dataclass
class MultiHeadParams:
    w_q: Tensor  # [h, d_model, d_k]
    w_k: Tensor  # [h, d_model, d_k]
    w_v: Tensor  # [h, d_model, d_v]
    w_o: Tensor  # [h * d_v, d_model]

    def __post_init__(self):
        h, d_model, d_k = self.w_q.shape
        if self.w_k.shape != (h, d_model, d_k) or self.w_v.shape[:2] != (h, d_model):
            raise DimensionError(f"inconsistent head projections {self.w_q.shape}, {self.w_k.shape}, {self.w_v.shape}")
        if self.w_o.shape != (h * self.w_v.shape[2], d_model):
            raise DimensionError(f"output projection {self.w_o.shape} does not match heads")


@dataclass
class FfnParams:
    w_1: Tensor
    b_1: Tensor
    w_2: Tensor
    b_2: Tensor


def positional_encoding(pos, d_model: int, base: float = 10000.0, base_odd: float | None = None) -> np.ndarray:
    """Sinusoidal encoding; ``pos`` may be a scalar or an array of positions.

    Even dimensions ``2i`` hold ``sin(pos / base^(2i/d))`` and odd dimensions
    ``2i+1`` hold ``cos(pos / base_odd^(2i/d))``.
    """
    base_odd = base if base_odd is None else base_odd
    pos = np.asarray(pos, dtype=np.float64)
    pairs = np.arange(0, d_model, 2, dtype=np.float64)
    out = np.zeros(pos.shape + (d_model,))
    out[..., 0::2] = np.sin(pos[..., None] / base ** (pairs / d_model))
    odd = pairs[: d_model // 2]
    out[..., 1::2] = np.cos(pos[..., None] / base_odd ** (odd / d_model))
    return out


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask=None) -> Tensor:
    """``softmax(Q K^T / sqrt(d_k) + mask) V`` with an additive mask of 0 / -1e9."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention shapes Q{q.shape} K{k.shape} V{v.shape} are incompatible")
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        scores = scores + np.asarray(mask, dtype=q.dtype)
    return T.matmul(T.softmax(scores, axis=-1), v)


def _split_heads(x: Tensor, w: Tensor) -> Tensor:
    # [..., L, d] -> [..., h, L, d_head]
    return T.matmul(x.reshape(x.shape[:-2] + (1,) + x.shape[-2:]), w)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, params: MultiHeadParams, mask=None) -> Tensor:
    """``Concat(head_1..head_h) W^O`` with ``head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V)``."""
    if mask is not None:
        mask = np.asarray(mask)
        mask = mask.reshape(mask.shape[:-2] + (1,) + mask.shape[-2:])
    heads = scaled_dot_attention(
        _split_heads(q, params.w_q), _split_heads(k, params.w_k), _split_heads(v, params.w_v), mask
    )
    joined = T.swapaxes(heads, -3, -2)
    joined = joined.reshape(joined.shape[:-2] + (joined.shape[-2] * joined.shape[-1],))
    return T.matmul(joined, params.w_o)


def ffn(x: Tensor, params: FfnParams) -> Tensor:
    """Position-wise ``ReLU(x W_1 + b_1) W_2 + b_2``."""
    return linear(T.relu(linear(x, params.w_1, params.b_1)), params.w_2, params.b_2)


def causal_mask(length: int, dtype=np.float32) -> np.ndarray:
    return np.triu(np.full((length, length), MASK_VALUE, dtype=dtype), k=1)


def padding_mask(key_mask: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Additive ``[batch, 1, keys]`` mask from a boolean real-token mask."""
    return np.where(key_mask, 0.0, MASK_VALUE).astype(dtype)[:, None, :]


class Transformer(Seq2SeqModel):
    family = "transformer"

    def __init__(self, config: TransformerConfig, vocab_size: int, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        params = ModelParameters(dtype)
        d = config.d_model
        # one table for source embedding, target embedding and the output projection
        params.add("embed.tokens", rng.normal(0.0, d ** -0.5, (vocab_size, d)))
        for layer in range(config.layers):
            self._add_attention(params, f"enc.l{layer}.self", config, rng)
            self._add_norm(params, f"enc.l{layer}.ln1", d)
            self._add_ffn(params, f"enc.l{layer}.ffn", config, rng)
            self._add_norm(params, f"enc.l{layer}.ln2", d)
        for layer in range(config.layers):
            self._add_attention(params, f"dec.l{layer}.self", config, rng)
            self._add_norm(params, f"dec.l{layer}.ln1", d)
            self._add_attention(params, f"dec.l{layer}.cross", config, rng)
            self._add_norm(params, f"dec.l{layer}.ln2", d)
            self._add_ffn(params, f"dec.l{layer}.ffn", config, rng)
            self._add_norm(params, f"dec.l{layer}.ln3", d)
        super().__init__(config, vocab_size, params)
        self._pe = positional_encoding(np.arange(config.max_length + 2), d, config.pe_base, config.pe_base_odd)

    @staticmethod
    def _add_attention(params, prefix, cfg: TransformerConfig, rng):
        d, h = cfg.d_model, cfg.heads
        for name, width in (("q", cfg.d_k), ("k", cfg.d_k), ("v", cfg.d_v)):
            params.add(f"{prefix}.w_{name}", scaled_normal_init(rng, (h, d, width), d))
        params.add(f"{prefix}.w_o", scaled_normal_init(rng, (h * cfg.d_v, d), h * cfg.d_v))

    @staticmethod
    def _add_norm(params, prefix, d):
        params.add(f"{prefix}.gain", np.ones(d))
        params.add(f"{prefix}.bias", np.zeros(d))

    @staticmethod
    def _add_ffn(params, prefix, cfg: TransformerConfig, rng):
        params.add(f"{prefix}.w_1", scaled_normal_init(rng, (cfg.d_model, cfg.d_ff), cfg.d_model))
        params.add(f"{prefix}.b_1", np.zeros(cfg.d_ff))
        params.add(f"{prefix}.w_2", scaled_normal_init(rng, (cfg.d_ff, cfg.d_model), cfg.d_ff))
        params.add(f"{prefix}.b_2", np.zeros(cfg.d_model))

    def attention_params(self, prefix: str) -> MultiHeadParams:
        p = self.params
        return MultiHeadParams(p[f"{prefix}.w_q"], p[f"{prefix}.w_k"], p[f"{prefix}.w_v"], p[f"{prefix}.w_o"])

    def ffn_params(self, prefix: str) -> FfnParams:
        p = self.params
        return FfnParams(p[f"{prefix}.w_1"], p[f"{prefix}.b_1"], p[f"{prefix}.w_2"], p[f"{prefix}.b_2"])

    def _norm(self, x: Tensor, prefix: str) -> Tensor:
        p = self.params
        return T.layer_norm(x, p[f"{prefix}.gain"], p[f"{prefix}.bias"], self.config.layer_norm_epsilon)

    def _sublayer(self, x: Tensor, out: Tensor, prefix: str, training, rng) -> Tensor:
        return self._norm(x + T.dropout(out, self.config.dropout, rng, training), prefix)

    def embed(self, ids: np.ndarray, training=False, rng=None) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        length = ids.shape[-1]
        if length == 0:
            raise ContractError("empty input sequence")
        if length > len(self._pe):
            raise ContractError(f"sequence of length {length} exceeds max_length={self.config.max_length}")
        d = self.config.d_model
        x = T.embedding(self.params["embed.tokens"], ids) * math.sqrt(d) + self._pe[:length].astype(self.params.dtype)
        return T.dropout(x, self.config.dropout, rng, training)

    def encode(self, src: np.ndarray, mask: np.ndarray, training=False, rng=None) -> Tensor:
        x = self.embed(src, training, rng)
        key_mask = None if mask.all() else padding_mask(mask, self.params.dtype)
        for layer in range(self.config.layers):
            pre = f"enc.l{layer}"
            x = self._sublayer(x, multi_head_attention(x, x, x, self.attention_params(f"{pre}.self"), key_mask), f"{pre}.ln1", training, rng)
            x = self._sublayer(x, ffn(x, self.ffn_params(f"{pre}.ffn")), f"{pre}.ln2", training, rng)
        return x

    def decode(self, tgt_in: np.ndarray, memory: Tensor, src_mask, training=False, rng=None) -> Tensor:
        y = self.embed(tgt_in, training, rng)
        self_mask = causal_mask(y.shape[-2], self.params.dtype)
        cross_mask = None if src_mask is None or src_mask.all() else padding_mask(src_mask, self.params.dtype)
        for layer in range(self.config.layers):
            pre = f"dec.l{layer}"
            y = self._sublayer(y, multi_head_attention(y, y, y, self.attention_params(f"{pre}.self"), self_mask), f"{pre}.ln1", training, rng)
            y = self._sublayer(y, multi_head_attention(y, memory, memory, self.attention_params(f"{pre}.cross"), cross_mask), f"{pre}.ln2", training, rng)
            y = self._sublayer(y, ffn(y, self.ffn_params(f"{pre}.ffn")), f"{pre}.ln3", training, rng)
        logits = T.matmul(y, T.transpose(self.params["embed.tokens"], None))
        return T.log_softmax(logits, axis=-1)

    def forward(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        memory = self.encode(batch.src, batch.src_mask, training, rng)
        return self.decode(batch.tgt_in, memory, batch.src_mask, training, rng)

    def start(self, src_ids: Sequence[int]):
        src = np.asarray([list(src_ids) + [EOS]], dtype=np.int64)
        with no_grad():
            memory = self.encode(src, np.ones_like(src, dtype=bool))
        return memory, ()

    def step(self, context, states: list, tokens: np.ndarray):
        tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
        for token in tokens:
            check_token(int(token), self.vocab_size)
        prefixes = [tuple(s) + (int(t),) for s, t in zip(states, tokens)]
        with no_grad():
            log_probs = self.decode(np.asarray(prefixes, dtype=np.int64), context, None)
        return log_probs.data[:, -1], prefixes


def transformer_forward(src_ids: Sequence[int], tgt_prefix_ids: Sequence[int], model: Transformer) -> Tensor:
    """Per-position next-token distributions ``[len(tgt_prefix), vocab]`` for one sentence pair."""
    if not len(src_ids) or not len(tgt_prefix_ids):
        raise ContractError("source and target prefix must be non-empty")
    src = np.asarray([list(src_ids)], dtype=np.int64)
    memory = model.encode(src, np.ones_like(src, dtype=bool))
    log_probs = model.decode(np.asarray([list(tgt_prefix_ids)], dtype=np.int64), memory, None)
    return T.exp(log_probs)[0]
