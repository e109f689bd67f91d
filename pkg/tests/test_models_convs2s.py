import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmt.config import build_config
from nmt.errors import ConfigError, ContractError
from nmt.models import ConvS2SConfig, build_model
from nmt.models.base import Batch
from nmt.models.convs2s import (
    OutputProjection, conv_block, convs2s_output, effective_context, embed_with_positions,
    expand_layer_spec, multistep_attention,
)
from nmt.nn import glu
from nmt.tensor import Tensor


def f64(x):
    return Tensor(np.asarray(x, dtype=np.float64), dtype=np.float64)


def tiny(**kw):
    cfg = dict(encoder=[(2, 8, 3)], decoder=[(2, 8, 3)], embed_dim=6, dropout=0.0)
    cfg.update(kw)
    return build_model("convs2s", ConvS2SConfig(**cfg), 10, seed=3, dtype="float64")


# -- embeddings ------------------------------------------------------------------------


def test_zero_position_table_is_identity(rng):
    tokens = f64(rng.normal(size=(6, 4)))
    z = embed_with_positions(np.array([2, 5]), tokens, f64(np.zeros((8, 4))))
    assert np.array_equal(z.data, tokens.data[[2, 5]])


def test_positions_differ_by_table_rows(rng):
    tokens, positions = f64(rng.normal(size=(6, 4))), f64(rng.normal(size=(8, 4)))
    z = embed_with_positions(np.array([3, 3]), tokens, positions).data
    assert np.allclose(z[1] - z[0], positions.data[1] - positions.data[0], atol=1e-12)


def test_embedding_table_lookup_oracle():
    tokens = f64([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]])
    positions = f64([[10.0, 20.0], [30.0, 40.0], [0.0, 0.0]])
    z = embed_with_positions(np.array([2, 1]), tokens, positions)
    assert z.data.tolist() == [[9.0, 20.5], [31.0, 42.0]]


def test_position_overflow_rejected(rng):
    with pytest.raises(ContractError):
        embed_with_positions(np.arange(5) % 3, f64(np.ones((3, 2))), f64(np.ones((4, 2))))


def test_model_position_limit_covers_markers():
    m = tiny(max_length=4)
    src = np.full((1, 6), 4)  # max_length tokens plus two markers
    m.encode(src, np.ones_like(src, bool))
    with pytest.raises(ContractError):
        m.encode(np.full((1, 7), 4), np.ones((1, 7), bool))


# -- glu -----------------------------------------------------------------------------------


def test_glu_zero_gate_halves(rng):
    a = rng.normal(size=(3, 4))
    assert np.allclose(glu(f64(np.concatenate([a, np.zeros_like(a)], -1))).data, 0.5 * a)


def test_glu_saturated_gate_passes_input(rng):
    a = rng.normal(size=5)
    assert np.allclose(glu(f64(np.concatenate([a, np.full(5, 50.0)]))).data, a, atol=1e-6)


def test_glu_ln3():
    assert np.allclose(glu(f64([1.0, 2.0, math.log(3.0), 0.0])).data, [0.75, 1.0], atol=1e-12)


# -- conv block ------------------------------------------------------------------------------


def test_zero_kernel_is_pure_residual(rng):
    d = f64(rng.normal(size=(5, 4)))
    out = conv_block(d, f64(np.zeros((8, 12))), f64(np.zeros(8)), causal=False)
    assert np.array_equal(out.data, d.data)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 7), st.integers(0, 2**31))
def test_causal_block_ignores_future(length, j, seed):
    j = j % length
    r = np.random.default_rng(seed)
    w, b = f64(r.normal(size=(6, 9))), f64(r.normal(size=6))
    x = r.normal(size=(length, 3))
    y = x.copy()
    y[j + 1 :] += r.normal(size=y[j + 1 :].shape)
    a = conv_block(f64(x), w, b, causal=True).data
    c = conv_block(f64(y), w, b, causal=True).data
    assert np.array_equal(a[: j + 1], c[: j + 1])


def test_block_hand_evaluation(rng):
    # k=3, s=2, length 3, symmetric zero padding
    x = rng.normal(size=(3, 2))
    w, b = rng.normal(size=(4, 6)), rng.normal(size=4)
    padded = np.vstack([np.zeros(2), x, np.zeros(2)])
    expected = []
    for j in range(3):
        window = padded[j : j + 3].reshape(-1)
        y = [sum(w[o, q] * window[q] for q in range(6)) + b[o] for o in range(4)]
        gated = [y[c] / (1 + math.exp(-y[c + 2])) for c in range(2)]
        expected.append([gated[c] + x[j, c] for c in range(2)])
    out = conv_block(f64(x), f64(w), f64(b), causal=False)
    assert np.allclose(out.data, expected, atol=1e-5)


def test_channel_change_needs_projection(rng):
    x = f64(rng.normal(size=(4, 3)))
    with pytest.raises(ContractError):
        conv_block(x, f64(np.zeros((10, 9))), f64(np.zeros(10)), causal=False)
    proj = (f64(rng.normal(size=(3, 5))), f64(np.zeros(5)))
    assert conv_block(x, f64(np.zeros((10, 9))), f64(np.zeros(10)), False, proj).shape == (4, 5)


# -- multi-step attention ----------------------------------------------------------------


def _attention(d, g, e, z, w_v, b_v):
    return multistep_attention(f64(d), f64(g), f64(e), f64(z), f64(w_v), f64(b_v))


def test_attention_single_source_position(rng):
    e, z = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    att = _attention(rng.normal(size=(2, 4)), rng.normal(size=(2, 3)), e, z, rng.normal(size=(4, 3)), np.zeros(3))
    assert np.allclose(att.weights.data, 1.0)
    assert np.allclose(att.conditional.data, e + z)


def test_attention_equal_outputs_uniform(rng):
    e = np.tile(rng.normal(size=3), (5, 1))
    att = _attention(rng.normal(size=(2, 4)), rng.normal(size=(2, 3)), e, rng.normal(size=(5, 3)),
                     rng.normal(size=(4, 3)), rng.normal(size=3))
    assert np.allclose(att.weights.data, 0.2)


def test_attention_brute_force(rng):
    d, g = rng.normal(size=4), rng.normal(size=3)
    e, z = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    w_v, b_v = rng.normal(size=(4, 3)), rng.normal(size=3)
    v = [sum(d[i] * w_v[i, c] for i in range(4)) + b_v[c] + g[c] for c in range(3)]
    scores = [sum(v[c] * e[j, c] for c in range(3)) for j in range(3)]
    exps = [math.exp(s) for s in scores]
    a = [x / sum(exps) for x in exps]
    cond = [sum(a[j] * (e[j, c] + z[j, c]) for j in range(3)) for c in range(3)]
    att = _attention(d[None], g[None], e, z, w_v, b_v)
    assert np.allclose(att.summary.data[0], v, atol=1e-6)
    assert np.allclose(att.weights.data[0], a, atol=1e-6)
    assert np.allclose(att.conditional.data[0], cond, atol=1e-6)


def test_attention_empty_source_rejected(rng):
    with pytest.raises(ContractError):
        _attention(np.ones((1, 2)), np.ones((1, 3)), np.ones((0, 3)), np.ones((0, 3)), np.ones((2, 3)), np.zeros(3))


def test_model_attention_is_simplex_per_layer():
    m = tiny()
    batch = Batch.from_pairs([[4, 5, 6], [7]], [[4, 4], [5, 6, 7]])
    e, z = m.encode(batch.src, batch.src_mask)
    g = embed_with_positions(batch.tgt_in, m.params["embed.tokens"], m.params["embed.dec_positions"])
    x = m._linear(g, "dec.fc1")
    for i in range(2):
        x = m._block("dec", i, x, causal=True)
        att = multistep_attention(x, g, e, z, m.params[f"dec.attn{i}.in_proj.weight"],
                                  m.params[f"dec.attn{i}.in_proj.bias"], batch.src_mask, True)
        assert np.allclose(att.weights.data.sum(-1), 1.0, atol=1e-6)
        assert np.all(att.weights.data[1, :, 2:] < 1e-12)  # padded source positions
        x = x + m._linear(att.conditional, f"dec.attn{i}.out_proj")


# -- output --------------------------------------------------------------------------------


def test_output_zero_projection_uniform(rng):
    proj = OutputProjection(f64(np.zeros((3, 7))), f64(np.zeros(7)))
    assert np.allclose(convs2s_output(f64(rng.normal(size=(2, 3))), proj).data, 1 / 7)


def test_output_hand_softmax():
    d = np.array([0.5, -1.0])
    w = np.array([[1.0, 0.0, -1.0, 2.0], [0.5, 1.0, 0.0, -0.5]])
    b = np.array([0.0, 0.1, 0.2, -0.3])
    logits = [sum(d[i] * w[i, t] for i in range(2)) + b[t] for t in range(4)]
    exps = [math.exp(v) for v in logits]
    out = convs2s_output(f64(d), OutputProjection(f64(w), f64(b)))
    assert np.allclose(out.data, [x / sum(exps) for x in exps], atol=1e-6)
    assert abs(out.data.sum() - 1) < 1e-6


# -- full model ------------------------------------------------------------------------------


@pytest.mark.parametrize("literal", [False, True])
def test_decoder_causality_under_teacher_forcing(literal):
    m = tiny(paper_literal=literal)
    src = [[4, 5, 6]]
    a = m.forward(Batch.from_pairs(src, [[4, 5, 6, 7]])).data[0]
    b = m.forward(Batch.from_pairs(src, [[4, 5, 9, 8]])).data[0]
    assert np.array_equal(a[:3], b[:3])
    assert not np.allclose(a[3], b[3])


def test_paper_literal_removes_scaling():
    assert tiny().config.scaled and not tiny(paper_literal=True).config.scaled
    assert not tiny(faithful_scaling=False).config.scaled


def test_incremental_step_matches_forward():
    m = tiny()
    context, state = m.start([4, 5])
    states, tokens = [state], [1, 6, 7]
    forward = m.forward(Batch.from_pairs([[4, 5]], [[6, 7]])).data[0]
    for t, tok in enumerate(tokens):
        logp, states = m.step(context, states, np.array([tok]))
        assert np.allclose(logp[0], forward[t], atol=1e-10)


def test_out_embed_dim_adds_projection():
    m = tiny(out_embed_dim=4)
    assert m.params["out.weight"].shape == (4, 10)
    assert "out.weight" not in tiny().params  # tied to the input table otherwise


def test_even_encoder_kernel_rejected():
    with pytest.raises(ConfigError):
        ConvS2SConfig(encoder=[(1, 8, 2)])


@pytest.mark.parametrize("preset,context", [("B_base", 9), ("B_1", 13), ("B_2", 27), ("B_3", 25)])
def test_effective_context_of_presets(preset, context):
    cfg = build_config({"preset": preset}).model_config()
    assert effective_context(cfg.encoder_layers) == context


def test_expand_layer_spec():
    assert expand_layer_spec([(2, 512, 3), (1, 2048, 1)]) == [(512, 3), (512, 3), (2048, 1)]


def test_b_base_parameter_count():
    cfg = build_config({"preset": "B_base"}).model_config()
    n = build_model("convs2s", cfg, 20000).num_parameters()
    assert abs(n - 10e6) <= 0.2 * 10e6
