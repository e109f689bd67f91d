"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in the terminal summary (see conftest.py).
"""

import contextlib
import itertools
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import DATA, copy_pairs, tiny_model, write_copy_run
from nmt import pipeline
from nmt import tensor as T
from nmt.checkpoint import save_checkpoint
from nmt.config import build_config
from nmt.corpus import (
    BpeEncoder, FilterPipeline, SubwordVocabulary, decode_bpe, detect_untranslated, language_filter, learn_bpe,
    load_english_vocab, non_empty, read_exclusion_list, read_lines, translated_filter,
)
from nmt.decoding import PenaltyConfig, beam_search, greedy_decode, length_penalty
from nmt.evaluation import corpus_bleu, ngram_counts
from nmt.gradcheck import FLOAT32_FLOOR, check_gradients, check_model_gradients
from nmt.models import build_model
from nmt.models.base import BOS, EOS, Batch
from nmt.models.transformer import transformer_forward
from nmt.tensor import Tensor, no_grad
from nmt.training import STOP, average_checkpoints, clip_gradients, global_norm, lr_force_anneal, lr_halving, lr_noam

RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number, title):
    started = time.process_time()
    detail = []
    try:
        yield detail
    except BaseException:
        line = f"criterion {number!s:>4} {title}: FAIL"
        raise
    else:
        line = f"criterion {number!s:>4} {title}: PASS"
    finally:
        line += f" ({time.process_time() - started:.1f}s cpu{'; ' + '; '.join(detail) if detail else ''})"
        RESULTS[number] = line
        print(line)


# -- 1. gradients --------------------------------------------------------------------------------


def _fd(op, *shapes, seed=0, positive=False, dtype=np.float64):
    r = np.random.default_rng(seed)
    params = [
        Tensor(r.uniform(0.5, 2.0, s) if positive else r.normal(size=s), requires_grad=True, dtype=dtype)
        for s in shapes
    ]
    weights = Tensor(r.normal(size=op(*params).shape), dtype=dtype)
    return check_gradients(lambda: (op(*params) * weights).sum(), params)


PRIMITIVES = {
    "add": (T.add, [(3, 4), (3, 4)], False),
    "sub": (T.sub, [(3, 4), (3, 4)], False),
    "mul": (T.mul, [(3, 4), (3, 4)], False),
    "div": (T.div, [(3, 4), (3, 4)], True),
    "log": (T.log, [(3, 4)], True),
    "exp": (T.exp, [(3, 4)], False),
    "tanh": (T.tanh, [(3, 4)], False),
    "sigmoid": (T.sigmoid, [(3, 4)], False),
    "relu": (T.relu, [(3, 4)], False),
    "softmax": (lambda a: T.softmax(a, -1), [(3, 4)], False),
    "log_softmax": (lambda a: T.log_softmax(a, -1), [(3, 4)], False),
    "matmul": (T.matmul, [(3, 5), (5, 2)], False),
    "sum": (lambda a: T.sum_(a, axis=0), [(3, 4)], False),
    "mean": (lambda a: T.mean(a, axis=-1), [(3, 4)], False),
    "transpose": (T.transpose, [(3, 4)], False),
    "reshape": (lambda a: T.reshape(a, (-1,)), [(3, 4)], False),
    "concat": (lambda a: T.concat([a, a * 2.0], axis=-1), [(3, 4)], False),
    "stack": (lambda a: T.stack([a, a], axis=0), [(3, 4)], False),
    "slice": (lambda a: a[..., 1:3], [(3, 4)], False),
    "masked_fill": (lambda a: T.masked_fill(a, np.eye(3, 4, dtype=bool), -3.0), [(3, 4)], False),
    "layer_norm": (lambda x, g, b: T.layer_norm(x, g, b), [(3, 5), (5,), (5,)], False),
    "conv1d_same": (lambda x, w, b: T.conv1d(x, w, b, "same"), [(6, 3), (6, 9), (6,)], False),
    "conv1d_causal": (lambda x, w, b: T.conv1d(x, w, b, "causal"), [(6, 3), (6, 9), (6,)], False),
}


def _embedding_error():
    r = np.random.default_rng(0)
    table = Tensor(r.normal(size=(6, 3)), requires_grad=True, dtype=np.float64)
    ids = np.array([[1, 4, 1], [0, 1, 5]])
    weights = Tensor(r.normal(size=(2, 3, 3)), dtype=np.float64)
    return check_gradients(lambda: (T.embedding(table, ids) * weights).sum(), [table])


def test_criterion_01_gradients():
    with criterion(1, "gradient correctness") as detail:
        started = time.process_time()
        worst64 = {name: max(_fd(op, *shapes, seed=s, positive=pos) for s in range(3))
                   for name, (op, shapes, pos) in PRIMITIVES.items()}
        worst64["embedding"] = _embedding_error()
        batch = Batch.from_pairs([[4, 5, 6], [7, 3]], [[5, 6, 7, 4], [3, 8]])
        worst32, worst64_models = {}, {}
        for family in ("rnn", "convs2s", "transformer"):
            model = tiny_model(family, vocab=9, seed=3, dtype="float32")
            errors = check_model_gradients(model, lambda m: m.loss(batch), floor=FLOAT32_FLOOR)
            worst32[family] = max(errors.values())
            # same model in 64 bits, sampled, reported only: separates rounding noise from wrong
            # derivatives (difference noise is near 3e-10 here, hence the 1e-6 floor)
            errors = check_model_gradients(model.astype(np.float64), lambda m: m.loss(batch), floor=1e-6,
                                           max_coords=8)
            worst64_models[family] = max(errors.values())
        seconds = time.process_time() - started
        detail.append(f"max 64-bit primitive {max(worst64.values()):.1e}")
        detail.append("32-bit models " + ", ".join(f"{k} {v:.1e}" for k, v in worst32.items()))
        detail.append("64-bit models " + ", ".join(f"{k} {v:.1e}" for k, v in worst64_models.items()))
        assert max(worst64.values()) < 1e-4, worst64
        assert seconds < 120
        assert max(worst32.values()) < 1e-3, worst32


# -- 2. copy task ---------------------------------------------------------------------------------


def _teacher_forced_accuracy(model, pairs):
    batch = Batch.from_pairs([s for s, _ in pairs], [t for _, t in pairs])
    with no_grad():
        predicted = model.forward(batch).data.argmax(-1)
    return float((predicted == batch.tgt_out)[batch.tgt_mask].mean())


def _greedy_bleu(model, pairs):
    hyps = [" ".join(map(str, greedy_decode(model, s, len(s) + 10))) for s, _ in pairs]
    refs = [" ".join(map(str, t)) for _, t in pairs]
    return corpus_bleu(hyps, refs, smooth=True).bleu


@pytest.mark.parametrize("family", ["rnn", "convs2s", "transformer"])
def test_criterion_02_copy_task(family):
    number = {"rnn": 2.1, "convs2s": 2.2, "transformer": 2.3}[family]
    with criterion(number, f"copy-task convergence [{family}_tiny]") as detail:
        src, tgt = copy_pairs(2000, seed=0)
        held_src, held_tgt = copy_pairs(200, seed=1)
        vocab = SubwordVocabulary.build(src + tgt)
        assert len(set(" ".join(src).split())) == 32
        train = [(vocab.encode(s), vocab.encode(t)) for s, t in zip(src, tgt)]
        held = [(vocab.encode(s), vocab.encode(t)) for s, t in zip(held_src, held_tgt)]
        cfg = build_config({"preset": f"{family}_tiny"})
        model = pipeline.make_model(cfg, len(vocab))
        trainer = pipeline.make_trainer(cfg, model)
        reached = {}

        def on_step(step, loss):
            if step % 250 == 0 or step == cfg.max_steps:
                acc = _teacher_forced_accuracy(model, held)
                if acc >= 0.99:
                    bleu = _greedy_bleu(model, held)
                    if bleu >= 95:
                        reached.update(step=step, acc=acc, bleu=bleu)
                        return True
            return None

        started = time.process_time()
        result = trainer.fit(train, cfg.batch_size, **pipeline.fit_kwargs(cfg), on_step=on_step)
        seconds = time.process_time() - started
        assert cfg.max_steps == 3000 and result.steps <= 3000
        detail.append(f"steps {result.steps}")
        if reached:
            detail.append(f"held-out accuracy {reached['acc']:.4f}, BLEU {reached['bleu']:.2f}")
        assert reached, f"not converged in {result.steps} steps"
        assert seconds < 600


# -- 3. beam oracle --------------------------------------------------------------------------------


def _brute_force(model, src, vocab, max_len):
    best = None
    body = [t for t in range(vocab) if t not in (0, BOS, EOS)]
    for n in range(max_len):
        for seq in itertools.product(body, repeat=n):
            key = (-model.score_sequence(src, list(seq)), seq)
            if best is None or key < best:
                best = key
    return list(best[1])


@pytest.mark.parametrize("family", ["rnn", "convs2s", "transformer"])
def test_criterion_03_beam_oracle(family):
    number = {"rnn": 3.1, "convs2s": 3.2, "transformer": 3.3}[family]
    with criterion(number, f"beam oracle [{family}]") as detail:
        r = np.random.default_rng(2024)
        matched = 0
        for trial in range(50):
            vocab = int(r.integers(4, 6))
            max_len = int(r.integers(1, 5))
            src = [int(t) for t in r.integers(3, vocab, size=int(r.integers(1, 4)))]
            model = tiny_model(family, vocab=vocab, seed=trial)
            hyp = beam_search(model, src, PenaltyConfig("none", 0.0, beam=5**4), max_output_len=max_len)
            matched += hyp.output == _brute_force(model, src, vocab, max_len)
        detail.append(f"{matched}/50 exact")
        assert matched == 50


# -- 4. length penalty -----------------------------------------------------------------------------


def test_criterion_04_length_penalty():
    with criterion(4, "length-penalty algebra"):
        for alpha in np.arange(0, 3.01, 0.5):
            assert length_penalty(1, PenaltyConfig("f1", float(alpha))) == pytest.approx(1.0, abs=1e-12)
        for length in range(0, 50):
            assert length_penalty(length, PenaltyConfig("f2", 0.0)) == 1.0
        assert abs(length_penalty(5, PenaltyConfig("f1", 2.0)) - (10 / 6) ** 2) < 1e-9


# -- 5. causality ----------------------------------------------------------------------------------


def test_criterion_05_causality():
    with criterion(5, "causality invariants"):
        r = np.random.default_rng(5)
        for trial in range(100):
            length = int(r.integers(2, 9))
            i = int(r.integers(0, length - 1))
            src = [int(t) for t in r.integers(3, 12, size=int(r.integers(1, 6)))]
            tgt = [int(t) for t in r.integers(3, 12, size=length)]
            changed = tgt[: i + 1] + [int(t) for t in r.integers(3, 12, size=length - i - 1)]
            tf = tiny_model("transformer", vocab=12, seed=trial, dtype="float32")
            a, b = transformer_forward(src, tgt, tf).data, transformer_forward(src, changed, tf).data
            assert np.array_equal(a[: i + 1], b[: i + 1])
            conv = tiny_model("convs2s", vocab=12, seed=trial, dtype="float32")
            a = conv.forward(Batch.from_pairs([src], [tgt])).data[0]
            b = conv.forward(Batch.from_pairs([src], [changed])).data[0]
            assert np.array_equal(a[: i + 1], b[: i + 1])


# -- 6. averaging ----------------------------------------------------------------------------------


def test_criterion_06_averaging(tmp_path):
    with criterion(6, "checkpoint averaging"):
        r = np.random.default_rng(6)
        values = [r.normal(size=(40, 30)).astype(np.float32) for _ in range(5)]
        paths = []
        for k, v in enumerate(values):
            paths.append(tmp_path / f"c{k}.nmtf")
            save_checkpoint(paths[-1], {"w": v})
        pair = average_checkpoints(paths[:2])["w"]
        assert pair.tobytes() == ((values[0].astype(np.float64) + values[1]) / 2).astype(np.float32).tobytes()
        ref = np.array([math.fsum(float(v.flat[i]) for v in values) / 5 for i in range(values[0].size)])
        ulp = np.spacing(np.abs(ref).astype(np.float32))
        base = average_checkpoints(paths)["w"].reshape(-1)
        for perm in itertools.islice(itertools.permutations(range(5)), 0, 120, 7):
            got = average_checkpoints([paths[p] for p in perm])["w"].reshape(-1)
            assert np.all(np.abs(got - ref) <= ulp)
            assert np.all(np.abs(got.astype(np.float64) - base) <= ulp)


# -- 7. schedules ----------------------------------------------------------------------------------


def test_criterion_07_schedules():
    with criterion(7, "learning-rate schedules"):
        assert lr_halving(11) == 0.5 and lr_halving(13) == 0.125
        lrs = [lr_force_anneal(e, 0.5, 50, 0.2) for e in range(40, 70)]
        live = [x for x in lrs if x is not STOP]
        assert STOP in lrs and all(x >= 1e-5 for x in live)
        first_stop = lrs.index(STOP)
        assert all(x is STOP for x in lrs[first_stop:])
        assert 0.5 * 0.2 ** (first_stop + 40 - 50 + 1) < 1e-5
        rate = lr_noam(4000, 256, 4000)
        # the quoted 9.882e-4 carries four digits; the 1e-6 relative bound applies to the closed form
        assert abs(rate - 256**-0.5 * 4000**-0.5) <= 1e-6 * rate
        assert round(rate, 7) == 9.882e-4


# -- 8. clipping -----------------------------------------------------------------------------------


def test_criterion_08_clipping():
    with criterion(8, "gradient clipping"):
        r = np.random.default_rng(8)
        for _ in range(100):
            grads = [r.normal(scale=r.uniform(0.01, 5.0), size=tuple(r.integers(1, 6, size=r.integers(1, 3))))
                     for _ in range(int(r.integers(1, 5)))]
            before = global_norm(grads)
            after = global_norm(clip_gradients(grads, 5.0))
            assert abs(after - min(before, 5.0)) <= 1e-6


# -- 9. parameter counts ---------------------------------------------------------------------------


def test_criterion_09_parameter_counts():
    with criterion(9, "parameter-count sanity") as detail:
        targets = {"C_base": 9e6, "C_1": 54e6, "C_2": 197e6, "B_base": 10e6}
        failures = []
        for preset, target in targets.items():
            cfg = build_config({"preset": preset})
            n = build_model(cfg.family, cfg.model_config(), 20000).num_parameters()
            ok = abs(n - target) <= 0.2 * target
            detail.append(f"{preset} {n / 1e6:.1f}M vs {target / 1e6:.0f}M {'ok' if ok else 'out of range'}")
            if not ok:
                failures.append(preset)
        assert not failures, failures


# -- 10. BPE ---------------------------------------------------------------------------------------


def test_criterion_10_bpe(tmp_path):
    with criterion(10, "BPE"):
        lines = read_lines(DATA / "bpe_corpus.txt")
        assert len(lines) == 1000
        learn_bpe(lines, 500).save(tmp_path / "a")
        learn_bpe(list(lines), 500).save(tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
        encoder = BpeEncoder(learn_bpe(lines, 500))
        assert all(decode_bpe(encoder(line)) == " ".join(line.split()) for line in lines)
        assert learn_bpe(["low low lower"], 1).merges[0] == ("l", "o")


# -- 11. BLEU --------------------------------------------------------------------------------------


def _oracle_bleu(hyps, refs):
    """Counts n-grams with plain tuples, independently of the package's counter."""
    from nmt.evaluation import bleu_tokenize

    matches, totals, hyp_len, ref_len = [0] * 4, [0] * 4, 0, 0
    for h, r in zip(hyps, refs):
        h, r = bleu_tokenize(h), bleu_tokenize(r)
        hyp_len, ref_len = hyp_len + len(h), ref_len + len(r)
        for n in range(1, 5):
            hg = [tuple(h[i : i + n]) for i in range(len(h) - n + 1)]
            rg = [tuple(r[i : i + n]) for i in range(len(r) - n + 1)]
            totals[n - 1] += len(hg)
            matches[n - 1] += sum(min(hg.count(g), rg.count(g)) for g in set(hg))
    if min(matches) == 0:
        return 0.0
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    return 100 * bp * math.exp(sum(math.log(m / t) for m, t in zip(matches, totals)) / 4)


def test_criterion_11_bleu():
    with criterion(11, "BLEU") as detail:
        refs = read_lines(DATA / "bleu_ref.txt")
        hyps = read_lines(DATA / "bleu_hyp.txt")
        assert corpus_bleu(refs, refs).bleu == 100.0
        assert corpus_bleu(["the the the the"], ["the cat"]).bleu == 0
        assert ngram_counts(["the"] * 4, 1)[("the",)] == 4
        got, oracle = corpus_bleu(hyps, refs).bleu, _oracle_bleu(hyps, refs)
        detail.append(f"fixture {got:.4f} vs oracle {oracle:.4f}")
        assert abs(got - oracle) <= 0.01


# -- 12. cleaning ----------------------------------------------------------------------------------


def test_criterion_12_cleaning():
    with criterion(12, "cleaning"):
        english = load_english_vocab()
        assert detect_untranslated(["house", "nhà"], english)  # exactly half
        assert not detect_untranslated(["house", "nhà", "cửa"], english)
        sources, targets = read_lines(DATA / "clean.en"), read_lines(DATA / "clean.vi")
        planted = {int(line.split("\t")[0]) for line in read_lines(DATA / "clean_planted.txt")}
        assert len(sources) == 500 and len(planted) == 50
        filters = FilterPipeline(
            [non_empty, translated_filter(english), language_filter(0.3)],
            read_exclusion_list(DATA / "clean_exclude.txt"),
        )
        kept, src, tgt = filters.run(sources, targets)
        assert set(range(500)) - set(kept) == planted
        assert src == [sources[i] for i in kept] and tgt == [targets[i] for i in kept]


# -- 13. end-to-end determinism --------------------------------------------------------------------


def test_criterion_13_determinism(tmp_path):
    with criterion(13, "end-to-end determinism") as detail:
        env = dict(os.environ, NMT_THREADS="1")
        finals = []
        for name in ("first", "second"):
            cfg = write_copy_run(tmp_path / name, n=300, max_steps=60, save_every=30, seed=7)
            proc = subprocess.run([sys.executable, "-m", "nmt.cli", "train", "--config", str(cfg)],
                                  env=env, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            finals.append((tmp_path / name / "run" / "ckpt" / "step-60.nmtf").read_bytes())
        detail.append(f"{len(finals[0])} bytes")
        assert finals[0] == finals[1]
