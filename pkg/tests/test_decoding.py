import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_model
from nmt.decoding import (
    STATS, Hypothesis, PenaltyConfig, beam_search, greedy_decode, length_penalty, max_output_length, score,
    thread_count, translate_batch,
)
from nmt.errors import ConfigError
from nmt.models.base import EOS

ALLOWED_FROM = 2  # PAD and BOS are never generated


def brute_force(model, src, vocab, max_len):
    """Best sequence ending in EOS with at most ``max_len`` tokens, by exhaustive scoring."""
    best = None
    body = range(ALLOWED_FROM, vocab)
    for n in range(max_len):
        for seq in itertools.product([t for t in body if t != EOS], repeat=n):
            lp = model.score_sequence(src, list(seq))
            key = (-lp, tuple(seq) + (EOS,))
            if best is None or key < best:
                best = key
    return list(best[1][:-1]), -best[0]


# -- penalties ------------------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.0, 0.6, 2.0, 3.0])
def test_f1_unit_at_length_one(alpha):
    assert length_penalty(1, PenaltyConfig("f1", alpha)) == pytest.approx(1.0)


@pytest.mark.parametrize("length", [0, 1, 7, 40])
def test_f2_zero_alpha(length):
    assert length_penalty(length, PenaltyConfig("f2", 0.0)) == 1.0


def test_f1_example():
    assert length_penalty(5, PenaltyConfig("f1", 2.0)) == pytest.approx((10 / 6) ** 2)
    assert length_penalty(5, PenaltyConfig("f1", 2.0)) == pytest.approx(2.7778, abs=1e-4)


def test_none_penalty():
    assert length_penalty(12, PenaltyConfig("none", 2.0)) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["f1", "f2"]), st.floats(0.05, 3.0), st.integers(0, 200))
def test_penalty_strictly_increasing(kind, alpha, length):
    cfg = PenaltyConfig(kind, alpha)
    assert length_penalty(length + 1, cfg) > length_penalty(length, cfg) > 0


def test_score_examples():
    h = Hypothesis((4, 5, 6, 7, EOS), -6.0, finished=True)
    assert score(h, PenaltyConfig("none")) == -6.0
    assert score(h, PenaltyConfig("f1", 1.0)) == pytest.approx(-3.6)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["f1", "f2"]), st.floats(0.1, 3.0), st.integers(1, 50), st.floats(-50, -0.01))
def test_score_increases_with_length(kind, alpha, n, logprob):
    cfg = PenaltyConfig(kind, alpha)
    assert score(Hypothesis((4,) * (n + 1), logprob), cfg) > score(Hypothesis((4,) * n, logprob), cfg)


def test_penalty_config_validation():
    for bad in (dict(kind="f3"), dict(beam=0), dict(alpha=-1.0)):
        with pytest.raises(ConfigError):
            PenaltyConfig(**bad)


# -- beam search ------------------------------------------------------------------------------


def test_beam_one_is_greedy(family):
    model = tiny_model(family, vocab=9, seed=2)
    for src in ([4, 5, 6], [7], [8, 8, 4, 5]):
        hyp = beam_search(model, src, PenaltyConfig("none", 0.0, beam=1), max_output_len=8)
        assert hyp.output == greedy_decode(model, src, 8)


@pytest.mark.parametrize("vocab", [4, 5])
def test_exhaustive_beam_matches_enumeration(family, vocab):
    for seed in range(3):
        model = tiny_model(family, vocab=vocab, seed=seed)
        src = [3] if vocab == 4 else [3, 4]
        cfg = PenaltyConfig("none", 0.0, beam=vocab**4)
        hyp = beam_search(model, src, cfg, max_output_len=4)
        best, best_lp = brute_force(model, src, vocab, 4)
        assert hyp.output == best
        assert hyp.logprob == pytest.approx(best_lp, abs=1e-9)


def test_logprob_non_increasing_along_prefixes():
    model = tiny_model("rnn", vocab=9, seed=1)
    hyp = beam_search(model, [4, 5], PenaltyConfig("f1", 1.0, beam=4), max_output_len=6)
    seq = hyp.output
    context, state = model.start([4, 5])
    total, states, running = 0.0, [state], []
    for prev, nxt in zip([1] + seq, seq + [EOS]):
        lp, states = model.step(context, states, np.array([prev]))
        total += lp[0, nxt]
        running.append(total)
    assert all(a >= b for a, b in zip(running, running[1:]))
    assert running[-1] == pytest.approx(hyp.logprob, abs=1e-9)
    assert model.score_sequence([4, 5], seq) == pytest.approx(hyp.logprob, abs=1e-9)


def test_truncation_flag_when_nothing_finishes():
    model = tiny_model("transformer", vocab=6, seed=0)
    original = model.step

    def no_eos(context, states, tokens):
        lp, ns = original(context, states, tokens)
        lp = lp.copy()
        lp[:, EOS] = -np.inf
        return lp, ns

    model.step = no_eos  # the end marker becomes unreachable
    hyp = beam_search(model, [4], PenaltyConfig("f1", 1.0, beam=3), max_output_len=3)
    assert hyp.truncated and not hyp.finished and len(hyp.tokens) == 3


def test_nbest_ranked_and_distinct(family):
    model = tiny_model(family, vocab=8, seed=3)
    cfg = PenaltyConfig("f1", 1.0, beam=4)
    ranked = beam_search(model, [4, 5, 6], cfg, max_output_len=6, nbest=4)
    assert len(ranked) == 4 and len({h.tokens for h in ranked}) == 4
    done = [h for h in ranked if not h.truncated]
    assert done and ranked[: len(done)] == done  # finished entries come first
    values = [score(h, cfg) for h in done]
    assert values == sorted(values, reverse=True)
    assert ranked[0].tokens == beam_search(model, [4, 5, 6], cfg, max_output_len=6).tokens


def test_never_generates_pad_or_bos(family):
    model = tiny_model(family, vocab=7, seed=5)
    for h in beam_search(model, [4, 5], PenaltyConfig("f2", 0.5, beam=6), max_output_len=5, nbest=6):
        assert 0 not in h.tokens and 1 not in h.tokens


def test_ensemble_of_identical_models_equals_single():
    model = tiny_model("convs2s", vocab=8, seed=7)
    cfg = PenaltyConfig("f1", 1.0, beam=3)
    single = beam_search(model, [4, 6], cfg, 6)
    double = beam_search([model, model], [4, 6], cfg, 6)
    assert single.tokens == double.tokens
    assert single.logprob == pytest.approx(double.logprob, abs=1e-9)


def test_ensemble_averages_probabilities():
    a, b = tiny_model("rnn", vocab=7, seed=1), tiny_model("rnn", vocab=7, seed=2)
    hyp = beam_search([a, b], [4], PenaltyConfig("none", 0.0, beam=1), max_output_len=1)
    ca, sa = a.start([4])
    cb, sb = b.start([4])
    pa = np.exp(a.step(ca, [sa], np.array([1]))[0][0])
    pb = np.exp(b.step(cb, [sb], np.array([1]))[0][0])
    mix = (pa + pb) / 2
    mix[:2] = 0
    assert hyp.tokens[0] == int(np.argmax(mix))
    assert hyp.logprob == pytest.approx(np.log(mix.max()), abs=1e-9)


def test_ensemble_vocab_mismatch():
    with pytest.raises(ConfigError):
        beam_search([tiny_model("rnn", vocab=7), tiny_model("rnn", vocab=8)], [4], PenaltyConfig())


def test_deterministic_across_threads(family, monkeypatch):
    model = tiny_model(family, vocab=9, seed=4, dtype="float32")
    sources = [[4, 5], [6], [7, 8, 4], [5, 5, 5, 6]]
    cfg = PenaltyConfig("f1", 2.0, beam=3)
    one = translate_batch(model, sources, cfg, 6, threads=1)
    four = translate_batch(model, sources, cfg, 6, threads=4)
    assert [(h.tokens, h.logprob) for h in one] == [(h.tokens, h.logprob) for h in four]
    again = translate_batch(model, sources, cfg, 6, threads=1)
    assert [(h.tokens, h.logprob) for h in one] == [(h.tokens, h.logprob) for h in again]


def test_throughput_counter_advances():
    before = STATS.tokens
    beam_search(tiny_model("rnn", vocab=7), [4], PenaltyConfig(beam=2), 4)
    assert STATS.tokens > before and STATS.tokens_per_sec > 0


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("NMT_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.delenv("NMT_THREADS")
    assert thread_count() == 1
    monkeypatch.setenv("NMT_THREADS", "many")
    with pytest.raises(ConfigError):
        thread_count()


def test_max_output_length():
    assert max_output_length(10) == 25 and max_output_length(1000) == 200


def test_bad_max_output_len():
    with pytest.raises(ConfigError):
        beam_search(tiny_model("rnn", vocab=6), [4], PenaltyConfig(), max_output_len=0)
