"""Command-line entry point.

Exit codes: 0 success, 1 internal error, 2 input/validation error,
3 translation provider failure after retries.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import metrics, pipeline, synth
from .augment import AugmentStrategy
from .config import AugmentSettings, Paths, PipelineConfig, SplitSettings, dump_config, load_config
from .corpus import class_balance, length_stats, load_dataset, save_dataset
from .errors import ConfigError, InputError, ProviderError
from .tokenizer import Normalizer, load_vocab, save_vocab, vocab_overlap
from .train import TrainConfig

log = logging.getLogger("checkworthy")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_PROVIDER = 0, 1, 2, 3


def _config(args) -> PipelineConfig:
    if not args.config:
        raise ConfigError("this command needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_stats(args):
    ds = load_dataset(args.dataset)
    for key, val in length_stats(ds).items():
        print(f"{key}\t{val:.2f}" if isinstance(val, float) else f"{key}\t{val}")
    if ds.is_labeled:
        print(class_balance(ds).describe())
    return EXIT_OK


def cmd_analyze_vocab(args):
    ds = load_dataset(args.dataset)
    vocab = load_vocab(args.vocab, args.scheme)
    norm = Normalizer(
        lowercase=not args.keep_case,
        strip_urls=not args.keep_urls,
        strip_mentions=not args.keep_mentions,
        split_punct=not args.no_split_punct,
        strip_diacritics=args.strip_diacritics,
    )
    print(f"vocabulary_size\t{len(vocab)}")
    print(vocab_overlap(ds, vocab, norm, max_missing=args.top).describe())
    return EXIT_OK


def cmd_augment(args):
    cfg = _config(args)
    path = args.dataset or pipeline.require(cfg.paths.dataset, "dataset")
    ds = load_dataset(path)
    augmented, report = pipeline.augment_dataset(cfg, ds)
    output = Path(args.output) if args.output else pipeline.out_path(cfg, "augmented.tsv")
    save_dataset(augmented, output)
    print(report.describe())
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    _, _, _, history, _ = pipeline.cmd_train(cfg, figures=not args.no_figures)
    print(history.to_tsv(), end="")
    return EXIT_OK


def cmd_predict(args):
    cfg = _config(args)
    scored = pipeline.cmd_predict(cfg, args.dataset, args.output)
    log.info("scored %d tweets", len(scored))
    return EXIT_OK


def cmd_rank(args):
    run_id = args.run_id
    if run_id is None:
        run_id = _config(args).run_id if args.config else "run"
    if not run_id or any(c.isspace() for c in run_id):
        raise ConfigError("run id must be non-empty without whitespace")
    pipeline.cmd_rank(args.scored, args.output, run_id)
    return EXIT_OK


def cmd_evaluate(args):
    norm = metrics.NORM_MIN_CUTOFF if args.min_cutoff_norm else metrics.NORM_TOTAL
    report = pipeline.cmd_evaluate(args.run, args.qrels, args.output, args.figure,
                                   cutoff=args.cutoff, normalization=norm, layout=args.layout)
    print(report.render(args.layout), end="")
    if report.unjudged:
        print(f"# unjudged\t{report.unjudged}", file=sys.stderr)
    return EXIT_OK


def cmd_pipeline(args):
    cfg = _config(args)
    report, _, _ = pipeline.cmd_pipeline(cfg, figures=not args.no_figures)
    print(report.render(), end="")
    return EXIT_OK


def cmd_make_synthetic(args):
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.balance:
        total, _, pos = args.balance.partition(":")
        ds = synth.make_balance_fixture(int(total), int(pos), seed=args.seed or 0)
        save_dataset(ds, out / "dataset.tsv")
        return EXIT_OK
    ds = synth.make_corpus(args.tweets, args.topics, args.positive_fraction, seed=args.seed or 0)
    save_dataset(ds, out / "dataset.tsv")
    save_vocab(synth.make_vocab(), out / "vocab.txt")
    synth.write_mock_table(out / "translations.tsv", source="en", pivot="xx")
    cfg = default_synthetic_config(out)
    (out / "pipeline.ini").write_text(dump_config(cfg, relative_to=out), encoding="utf-8")
    print(f"wrote {len(ds)} tweets, vocabulary and config to {out}")
    return EXIT_OK


def default_synthetic_config(root: Path, seed: int = 0) -> PipelineConfig:
    """Settings for the bundled synthetic corpus."""
    cfg = PipelineConfig(
        run_id="synthetic",
        paths=Paths(dataset=root / "dataset.tsv", vocab=root / "vocab.txt",
                    translations=root / "translations.tsv", cache=root / "out" / "translation_cache.tsv",
                    output_dir=root / "out"),
        train=TrainConfig(epochs=8, batch_size=32, learning_rate=1e-3),
        augment=AugmentSettings(enabled=True, strategy=AugmentStrategy("back_translate", "en", "xx")),
        split=SplitSettings(fractions=(("train", 0.6), ("val", 0.2), ("test", 0.2))),
    )
    return cfg.with_seed(seed)


def _u64(raw):
    val = int(raw)
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {raw}")
    return val


def _global_flags(parser, suppress=False):
    # subcommand copies use SUPPRESS so they do not overwrite flags given before the command
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="pipeline config file (INI)", **kw)
    parser.add_argument("--seed", type=_u64, help="override the config seed (u64)", **kw)
    parser.add_argument("--quiet", action="store_true", help="only print results and errors", **kw)
    return parser


def build_parser():
    common = _global_flags(argparse.ArgumentParser(add_help=False), suppress=True)
    ap = _global_flags(argparse.ArgumentParser(prog="checkworthy",
                                               description="Check-worthiness ranking toolkit"))
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[common], help="class balance and length statistics")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("analyze-vocab", parents=[common], help="corpus/vocabulary token overlap")
    p.add_argument("dataset")
    p.add_argument("--vocab", required=True)
    p.add_argument("--scheme", choices=("wordpiece", "bpe"), default="wordpiece")
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--keep-urls", action="store_true")
    p.add_argument("--keep-mentions", action="store_true")
    p.add_argument("--no-split-punct", action="store_true")
    p.add_argument("--strip-diacritics", action="store_true")
    p.add_argument("--top", type=int, default=20, help="missing tokens to list")
    p.set_defaults(func=cmd_analyze_vocab)

    p = sub.add_parser("augment", parents=[common], help="back-translation upsampling")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--output")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="fine-tune the classifier")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score a dataset")
    p.add_argument("dataset")
    p.add_argument("--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rank", parents=[common], help="scored file -> run file")
    p.add_argument("scored")
    p.add_argument("--output", required=True)
    p.add_argument("--run-id")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("evaluate", parents=[common], help="run file + qrels -> metric report")
    p.add_argument("run")
    p.add_argument("qrels")
    p.add_argument("--output")
    p.add_argument("--figure", help="write a precision@k plot here")
    p.add_argument("--cutoff", type=int, help="truncate rankings before computing AP")
    p.add_argument("--min-cutoff-norm", action="store_true",
                   help="normalize AP by min(R, cutoff) instead of R")
    p.add_argument("--layout", choices=sorted(metrics.LAYOUTS),
                   help="column subset and order (default: every column, AP first)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common], help="augment, train, predict, rank, evaluate")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("make-synthetic", parents=[common], help="write the synthetic corpus bundle")
    p.add_argument("output_dir")
    p.add_argument("--tweets", type=int, default=200)
    p.add_argument("--topics", type=int, default=4)
    p.add_argument("--positive-fraction", type=float, default=0.3)
    p.add_argument("--balance", metavar="TOTAL:POSITIVE",
                   help="write only a label-count fixture of this size")
    p.set_defaults(func=cmd_make_synthetic)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProviderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (InputError, FileNotFoundError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is a bug
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
