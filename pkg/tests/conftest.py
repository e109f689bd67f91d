import sys
from pathlib import Path

import numpy as np
import pytest

from nmt.models import ConvS2SConfig, RnnConfig, TransformerConfig, build_model

DATA = Path(__file__).parent / "data"

TINY = {
    "rnn": lambda: RnnConfig(layers=2, hidden=8, dropout=0.0),
    "convs2s": lambda: ConvS2SConfig(encoder=[(2, 16, 3)], decoder=[(2, 16, 3)], embed_dim=16, dropout=0.0),
    "transformer": lambda: TransformerConfig(layers=1, d_model=16, heads=2, d_ff=32, dropout=0.0),
}


def tiny_model(family, vocab=9, seed=0, dtype="float64", **overrides):
    cfg = TINY[family]()
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return build_model(family, cfg, vocab, seed=seed, dtype=dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=sorted(TINY))
def family(request):
    return request.param


@pytest.fixture
def data_dir():
    return DATA


COPY_SYMBOLS = "abcdefghijklmnopqrstuvwxyz012345"  # 32 single-character words


def copy_pairs(n=2000, seed=0, lengths=(3, 12)):
    """Synthetic copy corpus: each source sentence is its own target."""
    rnd = np.random.default_rng(seed)
    lines = []
    for _ in range(n):
        k = int(rnd.integers(lengths[0], lengths[1] + 1))
        lines.append(" ".join(COPY_SYMBOLS[i] for i in rnd.integers(0, len(COPY_SYMBOLS), k)))
    return lines, list(lines)


def write_copy_run(root, n=200, seed=0, **keys):
    """A data dir with ``train.src``/``train.tgt`` and a config file; returns the config path."""
    data = root / "data"
    data.mkdir(parents=True, exist_ok=True)
    src, tgt = copy_pairs(n, seed)
    (data / "train.src").write_text("\n".join(src) + "\n", encoding="utf-8")
    (data / "train.tgt").write_text("\n".join(tgt) + "\n", encoding="utf-8")
    values = dict(preset="transformer_tiny", data_dir=data, run_dir=root / "run", src_lang="src",
                  tgt_lang="tgt", bpe_merges=0, max_steps=20, save_every=10, batch_size=128)
    values.update(keys)
    path = root / "exp.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()), encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(module.RESULTS.items()):
            terminalreporter.write_line(line)
