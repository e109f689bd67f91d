"""Command line: ``nmt preprocess|train|translate|average-checkpoints|score|tune-alpha``.

Exit status is 0 on success, 1 when input or configuration fails validation
and 2 on runtime failures. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .checkpoint import save_checkpoint
from .config import ExperimentConfig, parse_config, parse_overrides
from .decoding import STATS, limited_threads
from .errors import (
    CheckpointFormatError, ConfigError, ContractError, EmptyCorpusError, IncompatibleCheckpointError,
    InsufficientHistoryError,
)
from .evaluation import corpus_bleu
from .corpus import read_lines
from .training import CheckpointDirectory, EnsembleSpec, average_checkpoints, select_ensemble_checkpoints

logger = logging.getLogger("nmt")

VALIDATION_ERRORS = (
    ConfigError, ContractError, EmptyCorpusError, IncompatibleCheckpointError, InsufficientHistoryError,
    CheckpointFormatError, ValueError,
)


class RunLockedError(RuntimeError):
    pass


@contextlib.contextmanager
def run_lock(root: Path):
    """One process per run directory."""
    root.mkdir(parents=True, exist_ok=True)
    lock = root / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunLockedError(f"run directory {root} is locked by {lock}; remove it if no run is active") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config, parse_overrides(getattr(args, "override", None)))
    return cfg


def _write_resolved(cfg: ExperimentConfig) -> None:
    run = pipeline.layout(cfg)
    run.root.mkdir(parents=True, exist_ok=True)
    cfg.save(run.resolved_config)


# -- commands ---------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    cfg = _load_config(args)
    with run_lock(Path(cfg.run_dir)):
        _write_resolved(cfg)
        info = pipeline.preprocess(cfg)
    print(f"pairs={info['pairs']} merges={info['merges']} vocab={info['vocab']}")
    for path, (lines, tokens) in info["stats"].items():
        print(f"{path}\t{lines}\t{tokens}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    run = pipeline.layout(cfg)
    with run_lock(run.root):
        _write_resolved(cfg)
        if not run.vocab.exists() or not run.codes.exists():
            pipeline.preprocess(cfg)
        _, vocab = pipeline.load_translation_assets(cfg)
        train = pipeline.load_encoded_split(cfg, cfg.train_split, vocab)
        validate = None
        if cfg.valid_split and run.bpe_file(cfg.valid_split, cfg.src_lang).exists():
            validate = pipeline.validation_hook(cfg, pipeline.load_encoded_split(cfg, cfg.valid_split, vocab), vocab)
        model = pipeline.make_model(cfg, len(vocab))
        ckpt = CheckpointDirectory(run.ckpt, keep=cfg.keep_checkpoints)
        trainer = pipeline.make_trainer(cfg, model, ckpt, run.train_log)
        with limited_threads():
            result = trainer.fit(train, cfg.batch_size, validate=validate, **pipeline.fit_kwargs(cfg))
    print(f"steps={result.steps} epochs={result.epochs:.4f} loss={result.final_loss:.6f} "
          f"stopped_by_schedule={str(result.stopped_by_schedule).lower()}")
    return 0


def _resolve_checkpoints(cfg: ExperimentConfig, explicit: list[str] | None, average: bool) -> list[str]:
    if explicit:
        return explicit
    ckpt = CheckpointDirectory(pipeline.layout(cfg).ckpt, keep=0)
    if average:
        steps = select_ensemble_checkpoints(ckpt.steps(), cfg.ensemble_spec(), ckpt.steps_per_epoch())
        return [str(ckpt.path_for(s)) for s in steps]
    step = ckpt.best_by_bleu() or ckpt.latest()
    if step is None:
        raise InsufficientHistoryError(f"no checkpoints under {ckpt.root}")
    return [str(ckpt.path_for(step))]


def _load_model(cfg: ExperimentConfig, vocab_size: int, paths: list[str]):
    model = pipeline.make_model(cfg, vocab_size)
    if len(paths) == 1:
        model.load(paths[0])
    else:
        model.params.load_arrays(average_checkpoints(paths))
    return model


def cmd_translate(args) -> int:
    overrides = parse_overrides(args.override)
    cfg = parse_config(args.config, overrides)
    encoder, vocab = pipeline.load_translation_assets(cfg)
    model = _load_model(cfg, len(vocab), _resolve_checkpoints(cfg, args.checkpoint, args.average))
    penalty = cfg.penalty_config(args.beam, args.alpha)
    lines = read_lines(args.input) if args.input != "-" else [l.rstrip("\n") for l in sys.stdin]
    with limited_threads():
        results = pipeline.translate_lines(model, lines, encoder, vocab, penalty, cfg, nbest=args.nbest)
    out = sys.stdout
    for ranked in results:
        if args.nbest > 1:
            for rank, (value, sentence) in enumerate(ranked, 1):
                out.write(f"{rank}\t{value:.6f}\t{sentence}\n")
        else:
            out.write(ranked[0][1] + "\n")
    print(f"decoded {STATS.tokens} tokens at {STATS.tokens_per_sec:.1f} tokens/sec", file=sys.stderr)
    return 0


def cmd_average(args) -> int:
    if args.inputs:
        paths = args.inputs
    else:
        ckpt = CheckpointDirectory(args.dir, keep=0)
        steps = select_ensemble_checkpoints(ckpt.steps(), EnsembleSpec(args.n, args.interval), ckpt.steps_per_epoch())
        paths = [str(ckpt.path_for(s)) for s in steps]
    averaged = average_checkpoints(paths)
    output = args.output or str(Path(args.dir or ".") / "averaged.nmtf")
    save_checkpoint(output, averaged)
    print(f"averaged {len(paths)} checkpoints into {output}")
    for p in paths:
        print(f"  {p}")
    return 0


def cmd_score(args) -> int:
    report = corpus_bleu(read_lines(args.hyp), read_lines(args.ref), smooth=args.smooth)
    print(report.format())
    return 0


def cmd_tune_alpha(args) -> int:
    cfg = _load_config(args)
    if not cfg.valid_split:
        raise ConfigError("valid_split: tune-alpha needs a validation split")
    encoder, vocab = pipeline.load_translation_assets(cfg)
    model = _load_model(cfg, len(vocab), _resolve_checkpoints(cfg, args.checkpoint, False))
    src, ref = pipeline.read_raw_split(cfg, cfg.valid_split)
    kinds = ("f1", "f2")
    print("alpha\t" + "\t".join(f"bleu_{k}" for k in kinds))
    with limited_threads():
        for alpha in pipeline.alpha_grid(args.range):
            row = []
            for kind in kinds:
                penalty = type(cfg.penalty_config())(kind, alpha, args.beam or cfg.beam_size)
                hyps = [r[0][1] for r in pipeline.translate_lines(model, src, encoder, vocab, penalty, cfg)]
                row.append(corpus_bleu(hyps, ref).bleu)
            print(f"{alpha:g}\t" + "\t".join(f"{b:.2f}" for b in row), flush=True)
    return 0


# -- entry point -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmt", description="Desk-scale neural machine translation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean the corpus, learn BPE and build the vocabulary")
    p.add_argument("--config", required=True)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model, saving checkpoints under run_dir/ckpt")
    p.add_argument("--config", required=True)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="beam-search translate one sentence per line")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True, help="source file, or - for stdin")
    p.add_argument("--beam", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--nbest", type=int, default=1)
    p.add_argument("--checkpoint", action="append", help="checkpoint file(s); several are averaged")
    p.add_argument("--average", action="store_true", help="average the ensemble checkpoints of the run")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("average-checkpoints", help="average evenly spaced checkpoints")
    p.add_argument("--dir", help="checkpoint directory with metadata.tsv")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--interval", type=float, default=0.03, help="spacing as a fraction of an epoch")
    p.add_argument("--inputs", nargs="+", help="explicit checkpoint files instead of --dir selection")
    p.add_argument("--output")
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("score", help="case-insensitive corpus BLEU")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--smooth", action="store_true", help="add-one smoothing for orders above 1")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("tune-alpha", help="sweep the length-penalty exponent on the validation split")
    p.add_argument("--config", required=True)
    p.add_argument("--range", default="0.1:3.0:0.1", help="start:stop:step")
    p.add_argument("--beam", type=int)
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_tune_alpha)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    if args.command == "average-checkpoints" and not (args.dir or args.inputs):
        parser.error("average-checkpoints needs --dir or --inputs")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"nmt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (RunLockedError, OSError, FloatingPointError, RuntimeError) as exc:
        print(f"nmt {args.command}: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
