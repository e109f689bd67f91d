"""Bi-directional LSTM encoder with an attentional LSTM decoder.

The first encoder layer runs one LSTM forward and one backward, each with
half the model width, and concatenates their states. Higher layers are
uni-directional with residual connections. The decoder uses input feeding
and dot-product attention on the top encoder layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import tensor as T
from ..errors import ConfigError, ContractError
from ..nn import ModelParameters, add_lstm_params, lstm_cell, lstm_weights, uniform_init
from ..tensor import Tensor, no_grad
from .base import EOS, Batch, Seq2SeqModel, check_token


@dataclass
class RnnConfig:
    layers: int = 2
    hidden: int = 1024
    dropout: float = 0.15
    max_length: int = 70

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("rnn layers must be >= 1")
        if self.hidden % 2:
            raise ConfigError("rnn hidden size must be even (split across both directions)")


@dataclass
class RnnEncoderStates:
    """Top-layer encoder states plus the layer-1 directional components.

    ``states`` has shape ``[batch, m, hidden]``; ``forward`` and ``backward``
    are the two halves produced by the bi-directional first layer.
    """

    states: Tensor
    mask: np.ndarray
    forward: Tensor
    backward: Tensor
    final: list  # per layer (h, c) used to initialise the decoder

    @property
    def length(self) -> int:
        return self.states.shape[-2]


@dataclass
class AttentionStep:
    alignment: Tensor  # a_t, [..., m]
    context: Tensor  # c_t, [..., hidden]
    attentional: Tensor  # h~ = tanh(W_c [c_t; h_t])


def _masked_update(new: Tensor, old: Tensor, keep: np.ndarray | None) -> Tensor:
    if keep is None:
        return new
    return new * keep + old * (1.0 - keep)


class RnnSeq2Seq(Seq2SeqModel):
    family = "rnn"

    def __init__(self, config: RnnConfig, vocab_size: int, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        params = ModelParameters(dtype)
        H = config.hidden
        params.add("embed.src", uniform_init(rng, (vocab_size, H)))
        params.add("embed.tgt", uniform_init(rng, (vocab_size, H)))
        add_lstm_params(params, "enc.l0.fwd", H, H // 2, rng)
        add_lstm_params(params, "enc.l0.bwd", H, H // 2, rng)
        for layer in range(1, config.layers):
            add_lstm_params(params, f"enc.l{layer}", H, H, rng)
        add_lstm_params(params, "dec.l0", 2 * H, H, rng)
        for layer in range(1, config.layers):
            add_lstm_params(params, f"dec.l{layer}", H, H, rng)
        params.add("attn.w_c", uniform_init(rng, (2 * H, H)))
        params.add("out.w_s", uniform_init(rng, (H, vocab_size)))
        super().__init__(config, vocab_size, params)

    # -- encoder ----------------------------------------------------------
    def encode(self, src: np.ndarray, mask: np.ndarray, training: bool = False, rng=None) -> RnnEncoderStates:
        p, cfg = self.params, self.config
        batch, length = src.shape
        if length < 1:
            raise ContractError("cannot encode an empty source")
        half = cfg.hidden // 2
        keep = mask.astype(p.dtype)[:, :, None]
        full = bool(mask.all())
        emb = T.embedding(p["embed.src"], src)
        emb = T.dropout(emb, cfg.dropout, rng, training)

        def run(weights, inputs: list[Tensor], order, size):
            h = Tensor(np.zeros((batch, size), p.dtype))
            c = Tensor(np.zeros((batch, size), p.dtype))
            outputs: list[Tensor | None] = [None] * len(inputs)
            for t in order:
                h_new, c_new = lstm_cell(inputs[t], h, c, weights)
                k = None if full else keep[:, t]
                h, c = _masked_update(h_new, h, k), _masked_update(c_new, c, k)
                outputs[t] = h
            return outputs, (h, c)

        inputs = [emb[:, t] for t in range(length)]
        fwd, (hf, cf) = run(lstm_weights(p, "enc.l0.fwd"), inputs, range(length), half)
        bwd, (hb, cb) = run(lstm_weights(p, "enc.l0.bwd"), inputs, range(length - 1, -1, -1), half)
        forward, backward = T.stack(fwd, axis=1), T.stack(bwd, axis=1)
        layer_out = [T.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]
        final = [(T.concat([hf, hb], axis=-1), T.concat([cf, cb], axis=-1))]
        for layer in range(1, cfg.layers):
            inputs = [T.dropout(x, cfg.dropout, rng, training) for x in layer_out]
            outs, state = run(lstm_weights(p, f"enc.l{layer}"), inputs, range(length), cfg.hidden)
            layer_out = [o + x for o, x in zip(outs, layer_out)]
            final.append(state)
        return RnnEncoderStates(T.stack(layer_out, axis=1), mask, forward, backward, final)

    # -- attention and one decoder step ------------------------------------
    def attend(self, h_t: Tensor, enc: RnnEncoderStates) -> AttentionStep:
        """Dot-product alignment, context vector and attentional state."""
        states = enc.states
        scores = T.matmul(states, h_t.reshape(h_t.shape + (1,)))
        scores = scores.reshape(scores.shape[:-1])
        if not enc.mask.all():
            scores = T.masked_fill(scores, ~enc.mask, -1e9)
        align = T.softmax(scores, axis=-1)
        context = T.matmul(align.reshape(align.shape[:-1] + (1, align.shape[-1])), states)
        context = context.reshape(context.shape[:-2] + context.shape[-1:])
        attentional = T.tanh(T.matmul(T.concat([context, h_t], axis=-1), self.params["attn.w_c"]))
        return AttentionStep(align, context, attentional)

    def _decoder_cell(self, emb_t: Tensor, layers: list, feed: Tensor, enc, training, rng):
        cfg, p = self.config, self.params
        x = T.concat([emb_t, feed], axis=-1)
        new_layers = []
        for layer, (h, c) in enumerate(layers):
            h, c = lstm_cell(T.dropout(x, cfg.dropout, rng, training), h, c, lstm_weights(p, f"dec.l{layer}"))
            new_layers.append((h, c))
            x = h if layer == 0 else h + x
        step = self.attend(x, enc)
        return step, new_layers

    def forward(self, batch: Batch, training: bool = False, rng=None) -> Tensor:
        enc = self.encode(batch.src, batch.src_mask, training, rng)
        p = self.params
        emb = T.embedding(p["embed.tgt"], batch.tgt_in)
        layers = list(enc.final)
        feed = Tensor(np.zeros((batch.size, self.config.hidden), p.dtype))
        outputs = []
        for t in range(batch.tgt_in.shape[1]):
            step, layers = self._decoder_cell(emb[:, t], layers, feed, enc, training, rng)
            feed = step.attentional
            outputs.append(feed)
        logits = T.matmul(T.stack(outputs, axis=1), p["out.w_s"])
        return T.log_softmax(logits, axis=-1)

    # -- incremental decoding ------------------------------------------------
    def start(self, src_ids: Sequence[int]):
        src = np.asarray([list(src_ids) + [EOS]], dtype=np.int64)
        with no_grad():
            enc = self.encode(src, np.ones_like(src, dtype=bool))
        state = (
            tuple(h.data[0] for h, _ in enc.final),
            tuple(c.data[0] for _, c in enc.final),
            np.zeros(self.config.hidden, self.params.dtype),
        )
        return enc, state

    def step(self, context: RnnEncoderStates, states: list, tokens: np.ndarray):
        for token in np.asarray(tokens).reshape(-1):
            check_token(int(token), self.vocab_size)
        n_layers = self.config.layers
        with no_grad():
            layers = [
                (Tensor(np.stack([s[0][i] for s in states])), Tensor(np.stack([s[1][i] for s in states])))
                for i in range(n_layers)
            ]
            feed = Tensor(np.stack([s[2] for s in states]))
            emb = T.embedding(self.params["embed.tgt"], np.asarray(tokens, dtype=np.int64))
            step, layers = self._decoder_cell(emb, layers, feed, context, False, None)
            log_probs = T.log_softmax(T.matmul(step.attentional, self.params["out.w_s"]), axis=-1).data
        new_states = [
            (
                tuple(h.data[i] for h, _ in layers),
                tuple(c.data[i] for _, c in layers),
                step.attentional.data[i],
            )
            for i in range(len(states))
        ]
        return log_probs, new_states


# -- single-sentence operations ---------------------------------------------------


def rnn_encode(source_ids: Sequence[int], model: RnnSeq2Seq, training: bool = False, rng=None) -> RnnEncoderStates:
    """Encode one sentence (no end marker appended); states have shape ``[1, m, H]``."""
    if not len(source_ids):
        raise ContractError("rnn_encode needs at least one source token")
    if len(source_ids) > model.config.max_length:
        raise ContractError(f"source longer than max_length={model.config.max_length}")
    src = np.asarray([list(source_ids)], dtype=np.int64)
    return model.encode(src, np.ones_like(src, dtype=bool), training, rng)


def luong_attention(h_t: Tensor, enc: RnnEncoderStates, model: RnnSeq2Seq) -> AttentionStep:
    return model.attend(h_t, enc)


@dataclass
class RnnDecoderState:
    layers: list  # per layer (h, c) Tensors of shape [1, H]
    feed: Tensor  # previous attentional state


def initial_decoder_state(enc: RnnEncoderStates, model: RnnSeq2Seq) -> RnnDecoderState:
    return RnnDecoderState(list(enc.final), Tensor(np.zeros((1, model.config.hidden), model.params.dtype)))


def rnn_decode_step(y_prev_id: int, state: RnnDecoderState, enc: RnnEncoderStates, model: RnnSeq2Seq):
    """One decoder step: returns the next-token distribution and the new state."""
    check_token(int(y_prev_id), model.vocab_size)
    emb = T.embedding(model.params["embed.tgt"], np.asarray([y_prev_id]))
    step, layers = model._decoder_cell(emb, state.layers, state.feed, enc, False, None)
    dist = T.softmax(T.matmul(step.attentional, model.params["out.w_s"]), axis=-1)
    return dist, RnnDecoderState(layers, step.attentional)
