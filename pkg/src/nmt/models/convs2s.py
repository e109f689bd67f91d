"""Fully convolutional encoder-decoder with gated linear units.

Every decoder layer attends over the top encoder layer (multi-step
attention). With ``faithful_scaling`` the residual sums, attention summaries
and conditional inputs are rescaled the way the reference ConvS2S toolkit
does it; ``paper_literal`` turns all of those factors off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import tensor as T
from ..errors import ConfigError, ContractError
from ..nn import ModelParameters, glu, linear, scaled_normal_init
from ..tensor import Tensor, no_grad
from .base import EOS, Batch, Seq2SeqModel, check_token

SQRT_HALF = math.sqrt(0.5)


def expand_layer_spec(groups: Sequence[tuple[int, int, int]]) -> list[tuple[int, int]]:
    """Expand ``(count, channels, kernel)`` groups into per-layer ``(channels, kernel)``."""
    return [(channels, kernel) for count, channels, kernel in groups for _ in range(count)]


def effective_context(layers: Sequence[tuple[int, int]]) -> int:
    """Number of input positions visible to one output of a stack of convolutions."""
    return 1 + sum(kernel - 1 for _, kernel in layers)


@dataclass
class ConvS2SConfig:
    encoder: list = field(default_factory=lambda: [(2, 32, 3)])  # groups of (count, channels, kernel)
    decoder: list = field(default_factory=lambda: [(2, 32, 3)])
    embed_dim: int = 32
    out_embed_dim: int | None = None
    dropout: float = 0.1
    max_length: int = 70
    faithful_scaling: bool = True
    paper_literal: bool = False

    def __post_init__(self):
        self.encoder = [tuple(g) for g in self.encoder]
        self.decoder = [tuple(g) for g in self.decoder]
        if self.out_embed_dim is None:
            self.out_embed_dim = self.embed_dim
        for _, kernel in self.encoder_layers:
            if kernel % 2 == 0:
                raise ConfigError(f"encoder kernels must be odd, got {kernel}")
        if not self.encoder_layers or not self.decoder_layers:
            raise ConfigError("convs2s needs at least one encoder and one decoder layer")

    @property
    def encoder_layers(self) -> list[tuple[int, int]]:
        return expand_layer_spec(self.encoder)

    @property
    def decoder_layers(self) -> list[tuple[int, int]]:
        return expand_layer_spec(self.decoder)

    @property
    def max_positions(self) -> int:
        # room for the appended end / start markers
        return self.max_length + 2

    @property
    def scaled(self) -> bool:
        return self.faithful_scaling and not self.paper_literal


@dataclass
class OutputProjection:
    weight: Tensor  # [out_embed, T], or the shared [T, f] table when ``tied``
    bias: Tensor  # [T]
    tied: bool = False

    @property
    def vocab_size(self) -> int:
        return self.bias.shape[0]


@dataclass
class ConvAttentionState:
    summary: Tensor  # v^i_k
    weights: Tensor  # a^i_kj
    conditional: Tensor  # c^i_k


def embed_with_positions(ids: np.ndarray, tokens: Tensor, positions: Tensor) -> Tensor:
    """Symbol embedding plus learned position embedding, ``z = w + p``."""
    ids = np.asarray(ids, dtype=np.int64)
    length = ids.shape[-1]
    if length > positions.shape[0]:
        raise ContractError(f"sequence of length {length} exceeds {positions.shape[0]} trained positions")
    return T.embedding(tokens, ids) + positions[:length]


def conv_block(
    d_prev: Tensor,
    weight: Tensor,
    bias: Tensor,
    causal: bool,
    residual_proj: tuple[Tensor, Tensor] | None = None,
    scale: float = 1.0,
) -> Tensor:
    """GLU convolution with a residual connection from the block input.

    ``residual_proj`` maps the input to the output width when the channel
    count changes between layer groups.
    """
    out_channels = weight.shape[0] // 2
    residual = d_prev
    if residual_proj is not None:
        residual = linear(d_prev, *residual_proj)
    if residual.shape[-1] != out_channels:
        raise ContractError(
            f"channel mismatch {d_prev.shape[-1]} -> {out_channels} without a residual projection"
        )
    y = glu(T.conv1d(d_prev, weight, bias, "causal" if causal else "same"))
    out = y + residual
    return out * scale if scale != 1.0 else out


def multistep_attention(
    d: Tensor,
    g: Tensor,
    enc_out: Tensor,
    enc_emb: Tensor,
    w_v: Tensor,
    b_v: Tensor,
    key_mask: np.ndarray | None = None,
    scaled: bool = False,
) -> ConvAttentionState:
    """Attention of one decoder layer over the top encoder layer.

    ``v = d W_v + b_v + g``; weights are the softmax over source positions of
    ``v . e_j``; the conditional input sums ``a_j (e_j + z_j)``.
    """
    m = enc_out.shape[-2]
    if m == 0:
        raise ContractError("attention over an empty source")
    if enc_emb.shape != enc_out.shape:
        raise ContractError(f"encoder outputs {enc_out.shape} and embeddings {enc_emb.shape} differ")
    summary = linear(d, w_v, b_v) + g
    if scaled:
        summary = summary * SQRT_HALF
    scores = T.matmul(summary, T.swapaxes(enc_out, -1, -2))
    if key_mask is not None and not key_mask.all():
        scores = T.masked_fill(scores, ~key_mask[..., None, :], -1e9)
    weights = T.softmax(scores, axis=-1)
    values = enc_out + enc_emb
    if scaled:
        values = values * SQRT_HALF
    conditional = T.matmul(weights, values)
    if scaled:
        lengths = m if key_mask is None else key_mask.sum(axis=-1)
        factor = np.sqrt(np.asarray(lengths, dtype=d.dtype)).reshape(np.shape(lengths) + (1, 1))
        conditional = conditional * factor
    return ConvAttentionState(summary, weights, conditional)


def convs2s_output(d_top: Tensor, proj: OutputProjection) -> Tensor:
    """Distribution over the vocabulary, ``softmax(W_o d + b_o)``."""
    return T.softmax(_logits(d_top, proj), axis=-1)


def _logits(x: Tensor, proj: OutputProjection) -> Tensor:
    weight = T.transpose(proj.weight, None) if proj.tied else proj.weight
    return T.matmul(x, weight) + proj.bias


class ConvS2S(Seq2SeqModel):
    family = "convs2s"

    def __init__(self, config: ConvS2SConfig, vocab_size: int, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        params = ModelParameters(dtype)
        f = config.embed_dim
        params.add("embed.tokens", rng.normal(0.0, 0.1, (vocab_size, f)))
        params.add("embed.enc_positions", rng.normal(0.0, 0.1, (config.max_positions, f)))
        params.add("embed.dec_positions", rng.normal(0.0, 0.1, (config.max_positions, f)))
        for side, layers in (("enc", config.encoder_layers), ("dec", config.decoder_layers)):
            channels = layers[0][0]
            self._add_linear(params, f"{side}.fc1", f, channels, rng)
            for i, (out_ch, kernel) in enumerate(layers):
                if out_ch != channels:
                    self._add_linear(params, f"{side}.conv{i}.residual", channels, out_ch, rng)
                fan_in = kernel * channels
                params.add(f"{side}.conv{i}.weight", rng.normal(0.0, math.sqrt(4 * (1 - config.dropout) / fan_in), (2 * out_ch, fan_in)))
                params.add(f"{side}.conv{i}.bias", np.zeros(2 * out_ch))
                if side == "dec":
                    self._add_linear(params, f"dec.attn{i}.in_proj", out_ch, f, rng)
                    self._add_linear(params, f"dec.attn{i}.out_proj", f, out_ch, rng)
                channels = out_ch
            out_dim = f if side == "enc" else config.out_embed_dim
            self._add_linear(params, f"{side}.fc2", channels, out_dim, rng)
        if config.out_embed_dim != f:
            params.add("out.weight", scaled_normal_init(rng, (config.out_embed_dim, vocab_size), config.out_embed_dim))
        params.add("out.bias", np.zeros(vocab_size))
        super().__init__(config, vocab_size, params)

    @staticmethod
    def _add_linear(params, name, n_in, n_out, rng):
        params.add(f"{name}.weight", scaled_normal_init(rng, (n_in, n_out), n_in))
        params.add(f"{name}.bias", np.zeros(n_out))

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return linear(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"])

    @property
    def output_projection(self) -> OutputProjection:
        p = self.params
        if "out.weight" in p:
            return OutputProjection(p["out.weight"], p["out.bias"], tied=False)
        return OutputProjection(p["embed.tokens"], p["out.bias"], tied=True)

    def _block(self, side: str, i: int, x: Tensor, causal: bool) -> Tensor:
        p = self.params
        proj = None
        if f"{side}.conv{i}.residual.weight" in p:
            proj = (p[f"{side}.conv{i}.residual.weight"], p[f"{side}.conv{i}.residual.bias"])
        scale = SQRT_HALF if self.config.scaled else 1.0
        return conv_block(x, p[f"{side}.conv{i}.weight"], p[f"{side}.conv{i}.bias"], causal, proj, scale)

    def encode(self, src: np.ndarray, mask: np.ndarray, training: bool = False, rng=None):
        """Returns ``(e^u, z)``: top encoder outputs and input embeddings."""
        cfg, p = self.config, self.params
        keep = mask.astype(p.dtype)[..., None]
        z = embed_with_positions(src, p["embed.tokens"], p["embed.enc_positions"])
        z = T.dropout(z, cfg.dropout, rng, training)
        x = self._linear(z, "enc.fc1")
        for i in range(len(cfg.encoder_layers)):
            x = T.dropout(x, cfg.dropout, rng, training)
            if not mask.all():
                x = x * keep
            x = self._block("enc", i, x, causal=False)
        e = self._linear(x, "enc.fc2")
        if not mask.all():
            e = e * keep
        return e, z

    def decode(self, tgt_in: np.ndarray, enc_out: Tensor, enc_emb: Tensor, src_mask, training=False, rng=None):
        cfg, p = self.config, self.params
        g = embed_with_positions(tgt_in, p["embed.tokens"], p["embed.dec_positions"])
        g = T.dropout(g, cfg.dropout, rng, training)
        x = self._linear(g, "dec.fc1")
        for i in range(len(cfg.decoder_layers)):
            x = T.dropout(x, cfg.dropout, rng, training)
            x = self._block("dec", i, x, causal=True)
            att = multistep_attention(
                x, g, enc_out, enc_emb,
                p[f"dec.attn{i}.in_proj.weight"], p[f"dec.attn{i}.in_proj.bias"],
                src_mask, cfg.scaled,
            )
            x = x + self._linear(att.conditional, f"dec.attn{i}.out_proj")
            if cfg.scaled:
                x = x * SQRT_HALF
        x = self._linear(x, "dec.fc2")
        x = T.dropout(x, cfg.dropout, rng, training)
        return T.log_softmax(_logits(x, self.output_projection), axis=-1)

    def forward(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        enc_out, enc_emb = self.encode(batch.src, batch.src_mask, training, rng)
        return self.decode(batch.tgt_in, enc_out, enc_emb, batch.src_mask, training, rng)

    def start(self, src_ids: Sequence[int]):
        src = np.asarray([list(src_ids) + [EOS]], dtype=np.int64)
        with no_grad():
            enc = self.encode(src, np.ones_like(src, dtype=bool))
        return enc, ()

    def step(self, context, states: list, tokens: np.ndarray):
        tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
        for token in tokens:
            check_token(int(token), self.vocab_size)
        prefixes = [tuple(s) + (int(t),) for s, t in zip(states, tokens)]
        return _prefix_step(self, context, prefixes), prefixes


def _prefix_step(model, context, prefixes: list[tuple]) -> np.ndarray:
    # re-run the decoder over each full prefix; all live prefixes share one length
    enc_out, enc_emb = context
    with no_grad():
        log_probs = model.decode(np.asarray(prefixes, dtype=np.int64), enc_out, enc_emb, None)
    return log_probs.data[:, -1]
