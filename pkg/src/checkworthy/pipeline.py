"""Glue between modules: each CLI command is one function here."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from . import metrics, model as M, plotting, rank
from .augment import CachedTranslator, HttpProvider, MockProvider, guard_splits, upsample_positive
from .config import PipelineConfig
from .corpus import Dataset, concat, load_dataset, save_dataset, split
from .errors import ConfigError, ContractError
from .tokenizer import BPE, TextEncoder, load_merges, load_vocab
from .train import encode_for_model, fine_tune

log = logging.getLogger(__name__)


def require(path, what):
    if path is None:
        raise ConfigError(f"config does not set paths.{what}")
    if not Path(path).exists():
        raise ConfigError(f"{what} file {path} does not exist")
    return Path(path)


def build_encoder(cfg: PipelineConfig) -> TextEncoder:
    vocab = load_vocab(require(cfg.paths.vocab, "vocab"), cfg.tokenizer.scheme)
    merges = None
    if cfg.tokenizer.scheme == BPE and cfg.paths.merges is not None:
        merges = load_merges(require(cfg.paths.merges, "merges"), byte_level=cfg.tokenizer.byte_level)
    return TextEncoder(vocab, merges, lowercase=cfg.tokenizer.lowercase,
                       max_word_chars=cfg.tokenizer.max_word_chars)


def build_provider(cfg: PipelineConfig):
    a = cfg.augment
    if a.provider == "mock":
        provider = MockProvider.from_file(require(cfg.paths.translations, "translations"))
    elif a.provider == "http":
        if not a.endpoint:
            raise ConfigError("http provider needs augment.endpoint")
        provider = HttpProvider(a.endpoint, a.credential_env, a.language_map)
    else:
        raise ConfigError(f"unknown translation provider {a.provider!r}")
    return CachedTranslator(provider, cfg.paths.cache, retries=a.retries)


def out_path(cfg: PipelineConfig, name: str) -> Path:
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def augment_dataset(cfg: PipelineConfig, dataset: Dataset):
    return upsample_positive(dataset, cfg.augment.strategy, build_provider(cfg),
                             max_workers=cfg.augment.max_workers)


@dataclass
class Prepared:
    splits: dict
    train: Dataset
    augment_report: object = None


def prepare_splits(cfg: PipelineConfig, dataset: Dataset) -> Prepared:
    """Split, optionally augment, and run the leakage guard.

    Without ``allow_leakage`` only training positives are translated. With
    it, training and validation positives are translated and appended to
    training, which leaks validation labels.
    """
    parts = dict(split(dataset, cfg.split_spec))
    s = cfg.split
    for name in (s.train_split, s.val_split) + ((s.eval_split,) if s.eval_split else ()):
        if name not in parts:
            raise ConfigError(f"split {name!r} is not among the configured fractions")
    train = parts[s.train_split]
    report = None
    if cfg.augment.enabled:
        source = train
        if cfg.augment.allow_leakage:
            source = concat([train, parts[s.val_split]], name=train.name)
        augmented, report = augment_dataset(cfg, source)
        added = augmented.tweets[len(source):]
        train = Dataset(list(train.tweets) + list(added), name=train.name)
        parts[s.train_split] = train
        result = guard_splits(parts, s.train_split, cfg.augment.allow_leakage)
        report.warnings.extend(result.warnings)
    return Prepared(parts, train, report)


def cmd_train(cfg: PipelineConfig, figures: bool = True):
    dataset = load_dataset(require(cfg.paths.dataset, "dataset"))
    if not dataset.is_labeled:
        raise ContractError("training data must be labeled")
    prep = prepare_splits(cfg, dataset)
    if prep.augment_report is not None:
        save_dataset(prep.train, out_path(cfg, "train_augmented.tsv"))
        out_path(cfg, "augment_report.txt").write_text(prep.augment_report.describe() + "\n",
                                                      encoding="utf-8")
    encoder = build_encoder(cfg)
    mcfg = cfg.encoder.build(encoder.vocab_size)
    weights = M.init_weights(mcfg, cfg.init_seed)
    trained, history = fine_tune(weights, prep.train, prep.splits[cfg.split.val_split],
                                 encoder, cfg.train, mcfg)
    ckpt = cfg.paths.checkpoint or out_path(cfg, "checkpoint.bin")
    M.save_checkpoint(ckpt, trained, mcfg)
    history.save(out_path(cfg, "history.tsv"))
    if figures:
        plotting.plot_history(history, out_path(cfg, "history.png"))
    return prep, trained, mcfg, history, encoder


def predict(dataset: Dataset, weights, mcfg, encoder) -> list:
    seqs = [encode_for_model(encoder, t.text, mcfg.max_seq_len) for t in dataset]
    if not seqs:
        return []
    logits = M.predict_logits(seqs, weights, mcfg, encoder.vocab.pad_id)
    return [rank.scored_tweet(t.topic_id, t.tweet_id, lg) for t, lg in zip(dataset, logits)]


def cmd_predict(cfg: PipelineConfig, dataset_path, output=None):
    mcfg, weights = M.load_checkpoint(require(cfg.paths.checkpoint or out_path(cfg, "checkpoint.bin"),
                                              "checkpoint"))
    encoder = build_encoder(cfg)
    if encoder.vocab_size != mcfg.vocab_size:
        raise ConfigError("checkpoint vocabulary size does not match the tokenizer")
    scored = predict(load_dataset(dataset_path), weights, mcfg, encoder)
    output = Path(output) if output else out_path(cfg, "scored.tsv")
    rank.save_scored(scored, output)
    return scored


def cmd_rank(scored_path, output, run_id):
    run = rank.rank_topics(rank.load_scored(scored_path), run_id)
    rank.save_run(run, output)
    return run


def cmd_evaluate(run_path, qrels_path, output=None, figure=None, cutoff=None,
                 normalization=metrics.NORM_TOTAL, layout=None):
    run = rank.load_run(run_path)
    qrels = metrics.load_qrels(qrels_path)
    report = metrics.evaluate_run(run, qrels, cutoff=cutoff, normalization=normalization)
    if output:
        report.save(output, layout)
    if figure:
        plotting.plot_precision_curve(report, figure)
    return report


def cmd_pipeline(cfg: PipelineConfig, figures: bool = True):
    """augment -> train -> predict -> rank -> evaluate on the eval split."""
    if not cfg.split.eval_split:
        raise ConfigError("pipeline needs split.eval_split")
    prep, weights, mcfg, history, encoder = cmd_train(cfg, figures)
    eval_set = prep.splits[cfg.split.eval_split]
    scored = predict(eval_set, weights, mcfg, encoder)
    rank.save_scored(scored, out_path(cfg, "scored.tsv"))
    run = rank.rank_topics(scored, cfg.run_id)
    rank.save_run(run, out_path(cfg, "run.tsv"))
    qrels = metrics.qrels_from_dataset(eval_set)
    metrics.save_qrels(qrels, out_path(cfg, "qrels.tsv"))
    report = metrics.evaluate_run(run, qrels)
    report.save(out_path(cfg, "report.tsv"))
    if figures:
        plotting.plot_precision_curve(report, out_path(cfg, "report.png"))
        plotting.plot_score_distribution(scored, qrels, out_path(cfg, "scores.png"))
    return report, run, qrels
