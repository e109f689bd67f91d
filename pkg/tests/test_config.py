import pytest

from nmt.config import (
    PRESETS,
    ExperimentConfig,
    build_config,
    parse_config,
    parse_layer_groups,
    parse_overrides,
    read_config_file,
)
from nmt.errors import ConfigError


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_combined_preset_file(tmp_path):
    cfg = parse_config(write(tmp_path, "preset = combined\n"))
    got = (
        cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.dropout, cfg.batch_size,
        cfg.beam_size, cfg.length_penalty, cfg.ensemble_n, cfg.ensemble_interval,
    )
    assert got == (8, 1024, 16, 4096, 0.15, 2048, 5, 1.5, 8, 0.03)
    assert cfg.family == "transformer"


def test_combined_preset_spelled_out(tmp_path):
    text = """
    family = transformer
    layers = 8
    d_model = 1024
    heads = 16
    d_ff = 4096
    dropout = 0.15
    batch_size = 2048
    length_penalty = 1.5
    beam_size = 5
    ensemble_n = 8
    ensemble_interval = 3%
    """
    spelled = parse_config(write(tmp_path, "\n".join(l.strip() for l in text.splitlines())))
    preset = parse_config(write(tmp_path, "preset = combined\n", "p.cfg"))
    for key in ("layers", "d_model", "heads", "d_ff", "dropout", "batch_size", "length_penalty",
                "beam_size", "ensemble_n", "ensemble_interval"):
        assert getattr(spelled, key) == pytest.approx(getattr(preset, key)), key


def test_minimal_c_base(tmp_path):
    cfg = parse_config(write(tmp_path, "preset: C_base\n"))
    assert (cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.dropout) == (2, 256, 4, 1024, 0.1)
    assert cfg.warmup_steps == 4000 and cfg.batch_size == 4096
    mc = cfg.model_config()
    assert (mc.layers, mc.d_model, mc.heads, mc.d_ff) == (2, 256, 4, 1024)


@pytest.mark.parametrize("name,row", [
    ("C_1", (6, 512, 16, 2048, 0.15)),
    ("C_2", (8, 1024, 16, 4096, 0.15)),
])
def test_transformer_rows(name, row):
    cfg = build_config({"preset": name})
    assert (cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.dropout) == row
    assert cfg.warmup_steps == 16000


def test_convs2s_rows():
    b1 = build_config({"preset": "B_1"})
    assert parse_layer_groups(b1.encoder) == [(4, 512, 3), (2, 1024, 3), (1, 2048, 1)]
    assert b1.embed_dim == 384 and b1.lr == 0.5 and b1.dropout == 0.15
    b2 = build_config({"preset": "B_2"})
    assert (b2.embed_dim, b2.out_embed_dim) == (768, 512)
    assert build_config({"preset": "B_base_text"}).lr == 0.25
    assert build_config({"preset": "B_base_table"}).lr == 0.5


def test_every_preset_builds():
    for name in PRESETS:
        assert build_config({"preset": name}).preset == name


def test_typo_key_suggests(tmp_path):
    with pytest.raises(ConfigError, match="beam_size"):
        parse_config(write(tmp_path, "family = rnn\nbeem_size = 5\n"))


def test_unknown_preset_suggests():
    with pytest.raises(ConfigError, match="C_base"):
        build_config({"preset": "C_bas"})


def test_type_mismatch():
    with pytest.raises(ConfigError, match="beam_size"):
        build_config({"family": "rnn", "beam_size": "five"})


def test_missing_family():
    with pytest.raises(ConfigError, match="family"):
        build_config({"beam_size": "5"})


def test_bad_choice():
    with pytest.raises(ConfigError, match="optimizer"):
        build_config({"family": "rnn", "optimizer": "rmsprop"})


def test_heads_must_divide_d_model():
    with pytest.raises(ConfigError):
        build_config({"family": "transformer", "d_model": "30", "heads": "4"})


def test_overrides_win(tmp_path):
    path = write(tmp_path, "preset = C_base\nbeam_size = 7\n")
    cfg = parse_config(path, parse_overrides(["beam_size=3", "dropout = 0.2"]))
    assert cfg.beam_size == 3 and cfg.dropout == 0.2


def test_bad_override():
    with pytest.raises(ConfigError):
        parse_overrides(["beam_size"])


def test_comments_and_colons(tmp_path):
    raw = read_config_file(write(tmp_path, "# header\nfamily: rnn  # inline\nseed = 9 ; note\n"))
    assert raw == {"family": "rnn", "seed": "9"}


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        read_config_file(tmp_path / "absent.cfg")


def test_bools():
    assert build_config({"family": "rnn", "filter_language": "no"}).filter_language is False
    with pytest.raises(ConfigError):
        build_config({"family": "rnn", "filter_language": "maybe"})


def test_dump_round_trip(tmp_path):
    cfg = build_config({"preset": "combined"}, {"seed": "17"})
    path = tmp_path / "resolved-config"
    cfg.save(path)
    again = parse_config(path)
    assert again == cfg
    assert again.dumps() == cfg.dumps()


def test_defaults_are_valid():
    ExperimentConfig()


def test_layer_groups_errors():
    with pytest.raises(ConfigError):
        parse_layer_groups("4x512")
    with pytest.raises(ConfigError):
        parse_layer_groups("")
