"""One test per acceptance criterion; the terminal summary prints a PASS/FAIL line for each."""
import dataclasses
import itertools
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from checkworthy import metrics as MX, model as M
from checkworthy.augment import AugmentStrategy, MockProvider, guard_splits, upsample_positive
from checkworthy.cli import main
from checkworthy.config import load_config
from checkworthy.corpus import AUGMENTED, Dataset, Tweet, class_balance
from checkworthy.errors import LeakageError
from checkworthy.pipeline import cmd_pipeline
from checkworthy.rank import RankedRun, ScoredTweet, rank_topics, scored_tweet, softmax2
from checkworthy.synth import make_balance_fixture, make_separable_corpus, make_vocab
from checkworthy.tokenizer import MergeTable, Vocabulary, WORDPIECE, bpe_word, wordpiece_word
from checkworthy.train import TrainConfig, fine_tune, training_accuracy
from checkworthy.tokenizer import TextEncoder

import report_fixtures as RF
from oracles import bf_topic, gradcheck_instance, gradient_check
from test_tokenizer import brute_force_bpe, random_merge_table

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "pipeline.ini"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


@pytest.mark.criterion(1, "metric oracle equivalence", budget=5)
def test_criterion_1_metric_oracle(record_property):
    rng = random.Random(20200901)
    with Timer() as t:
        rankings, qrels = {}, {}
        for topic in range(200):
            n = rng.randint(0, 50)
            ids = [f"{topic}-{i}" for i in range(n)]
            judged = {i: rng.randint(0, 1) for i in ids}
            # some relevant items never retrieved, some retrieved items unjudged
            for extra in range(rng.randint(0, 3)):
                judged[f"{topic}-missing{extra}"] = 1
            if ids and rng.random() < 0.2:
                del judged[ids[-1]]
            if not judged:
                judged[f"{topic}-only"] = 0
            rankings[f"T{topic}"] = ids
            qrels[f"T{topic}"] = judged
        run = RankedRun("r", {tp: tuple(ScoredTweet(tp, i, 0, 0, 0) for i in ids)
                              for tp, ids in rankings.items()})
        report = MX.evaluate_run(run, qrels)
        worst = 0.0
        for tp, ids in rankings.items():
            want = bf_topic(ids, qrels[tp], MX.K_VALUES)
            for col, val in report.per_topic[tp].items():
                worst = max(worst, abs(val - want[col]))
    record_property("detail", f"max |diff| {worst:.1e} over 200 topics")
    assert worst <= 1e-12
    assert t.elapsed < 5


@pytest.mark.criterion(2, "report-format fidelity", budget=None)
def test_criterion_2_report_rows(record_property):
    en = MX.MetricReport(RF.english_topics()).render().splitlines()
    cells = dict(zip(en[0].split("\t")[1:], en[-1].split("\t")[1:]))
    assert en[-1].startswith("ALL\t")
    english = tuple(cells[c] for c in RF.ENGLISH_COLUMNS)
    ar = MX.MetricReport(RF.arabic_topics()).render("precision").splitlines()
    assert ar[0].split("\t")[1:] == ["P@5", "P@10", "P@15", "P@20", "P@25", "P@30", "AP"]
    arabic = tuple(ar[-1].split("\t")[1:])
    record_property("detail", f"{' / '.join(english)} | {' '.join(arabic)}")
    assert english == RF.ENGLISH_ROW
    assert arabic == RF.ARABIC_ROW
    assert all(len(c.split(".")[1]) == 4 for c in english + arabic)


@pytest.mark.criterion(3, "ranking identity", budget=1)
def test_criterion_3_ranking_identity(record_property):
    rng = np.random.default_rng(3)
    pairs = rng.uniform(-50, 50, size=(10_000, 2))
    with Timer() as t:
        worst_score = worst_sum = 0.0
        for neg, pos in pairs:
            p_neg, p_pos = softmax2((neg, pos))
            worst_sum = max(worst_sum, abs(p_neg + p_pos - 1.0))
            worst_score = max(worst_score, abs((p_pos - p_neg) - math.tanh((pos - neg) / 2)))
        items = [scored_tweet(f"T{i % 5}", f"id{i:05d}", p) for i, p in enumerate(pairs[:2000])]
        base = rank_topics(items, "r")
        order = list(range(len(items)))
        random.Random(3).shuffle(order)
        permuted = rank_topics([items[i] for i in order], "r")
        shifted = rank_topics([scored_tweet(f"T{i % 5}", f"id{i:05d}", p + 7.25)
                               for i, p in enumerate(pairs[:2000])], "r")
        same_perm = all(base.ranking(tp) == permuted.ranking(tp) for tp in base.topics)
        same_shift = all(base.ranking(tp) == shifted.ranking(tp) for tp in base.topics)
    record_property("detail", f"max score err {worst_score:.1e}, max sum err {worst_sum:.1e}")
    assert worst_score <= 1e-9
    assert worst_sum <= 1e-12
    assert same_perm and same_shift
    assert t.elapsed < 1


@pytest.mark.criterion(4, "gradient check", budget=30)
def test_criterion_4_gradient_check(record_property):
    with Timer() as t:
        worst = {}
        for head in M.HEAD_VARIANTS:
            # every entry without dropout, a sample of entries under fixed dropout masks
            for mode, seed, sample in ((M.EVAL, None, None), (M.TRAIN, 11, 24)):
                inst = gradcheck_instance(head, seed=0, seq=8, batch=1, padded=False)
                errors = gradient_check(*inst, mode=mode, seed=seed, step=1e-4, max_entries=sample)
                assert set(errors) == set(M.param_shapes(inst[1]))
                name = max(errors, key=errors.get)
                worst[(head, mode)] = (name, errors[name])
    top = max(worst.values(), key=lambda x: x[1])
    record_property("detail", f"worst group {top[0]} rel err {top[1]:.1e}")
    assert all(err < 1e-4 for _, err in worst.values()), worst
    assert t.elapsed < 30


@pytest.mark.criterion(5, "overfit smoke test", budget=60)
def test_criterion_5_overfit(record_property):
    data = make_separable_corpus(32, seed=0)
    assert len({t.text for t in data}) == 32
    encoder = TextEncoder(make_vocab())
    reached = {}
    with Timer() as t:
        for head in M.HEAD_VARIANTS:
            mcfg = M.EncoderConfig(vocab_size=encoder.vocab_size, num_layers=2, hidden_dim=32,
                                   num_heads=2, head_variant=head)
            hits = []

            def check(rec, params, mcfg=mcfg, hits=hits):
                if not hits and training_accuracy(params, data, encoder, mcfg) == 1.0:
                    hits.append(rec.epoch)

            cfg = TrainConfig(epochs=50, batch_size=32, learning_rate=1e-3, seed=0)
            fine_tune(M.init_weights(mcfg, 0), data, data, encoder, cfg, mcfg, callback=check)
            reached[head] = hits[0] if hits else None
    record_property("detail", "first epoch at 100%: " + ", ".join(f"{h} {e}" for h, e in reached.items()))
    assert all(e is not None and e <= 50 for e in reached.values())
    assert t.elapsed < 60


@pytest.mark.criterion(6, "augmentation counting and leakage guard", budget=None)
def test_criterion_6_augmentation(record_property):
    ds = make_balance_fixture(1500, 458)
    provider = MockProvider.identity(("ar", "en"), ("en", "ar"))
    bt, _ = upsample_positive(ds, AugmentStrategy("back_translate", "ar", "en"), provider)
    both, _ = upsample_positive(ds, AugmentStrategy("both", "ar", "en"), provider)
    b0, b1, b2 = class_balance(ds), class_balance(bt), class_balance(both)
    record_property("detail", f"{b0.total}/{b0.positive} ({b0.positive_fraction:.0%}) -> "
                              f"{b1.total}/{b1.positive} ({b1.positive_fraction:.0%}); "
                              f"both {b2.total}/{b2.positive}")
    assert (b1.total, b1.positive) == (1958, 916)
    assert f"{b1.positive_fraction:.0%}" == "47%" and f"{b0.positive_fraction:.0%}" == "31%"
    assert (b2.total, b2.positive) == (2416, 1374)

    train = Dataset(list(ds.tweets[:1000]))
    val = Dataset(list(ds.tweets[1000:]))
    pos_val = next(t for t in val if t.label == 1)
    leaked = Tweet(pos_val.topic_id, pos_val.tweet_id + "-bt", pos_val.text, 1, AUGMENTED,
                   pos_val.tweet_id, "ar")
    train_aug, _ = upsample_positive(train, AugmentStrategy("back_translate", "ar", "en"), provider)
    assert guard_splits({"train": train_aug, "val": val}).ok
    with pytest.raises(LeakageError):
        guard_splits({"train": train_aug, "val": Dataset(list(val.tweets) + [leaked])})
    with pytest.raises(LeakageError):
        guard_splits({"train": Dataset(list(train_aug.tweets) + [leaked]), "val": val})
    with pytest.warns(UserWarning):
        res = guard_splits({"train": Dataset(list(train_aug.tweets) + [leaked]), "val": val},
                           allow_leakage=True)
    assert res.offending == [leaked.tweet_id]


@pytest.mark.criterion(7, "tokenizer properties", budget=10)
def test_criterion_7_tokenizers(record_property):
    rng = random.Random(7)
    alphabet = "abcdef"
    with Timer() as t:
        pieces = set()
        while len(pieces) < 200:
            s = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 4)))
            pieces.add(s if rng.random() < 0.5 else "##" + s)
        vocab = Vocabulary(WORDPIECE, ["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + sorted(pieces))
        assert len(vocab) == 204
        segmented = 0
        for _ in range(10_000):
            word = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
            out = wordpiece_word(word, vocab)
            # soundness
            assert all(p in vocab for p in out)
            if out == ["[UNK]"]:
                continue
            segmented += 1
            # reconstruction
            assert "".join(p[2:] if i else p for i, p in enumerate(out)) == word
            # greedy: each piece is the longest vocabulary match at its position
            pos = 0
            for i, p in enumerate(out):
                prefix = "##" if i else ""
                longest = max(j for j in range(pos + 1, len(word) + 1) if prefix + word[pos:j] in vocab)
                assert p == prefix + word[pos:longest]
                pos = longest
        strings = 0
        for seed in range(5):
            merges = random_merge_table(random.Random(seed), "abc", 10)
            ranks = MergeTable(merges).ranks
            for n in range(1, 7):
                for w in itertools.product("abc", repeat=n):
                    assert bpe_word(list(w), ranks) == brute_force_bpe(w, merges)
                    strings += 1
    record_property("detail", f"{segmented} segmented words; {strings} BPE strings over 5 merge tables")
    assert t.elapsed < 10


def _pipeline_cfg(out_dir, seed):
    cfg = load_config(CONFIG).with_seed(seed)
    paths = dataclasses.replace(cfg.paths, output_dir=out_dir, cache=out_dir / "cache.tsv")
    return dataclasses.replace(cfg, paths=paths)


@pytest.mark.criterion(8, "end-to-end determinism and beating a random ranker", budget=600)
def test_criterion_8_end_to_end(tmp_path, record_property):
    with Timer() as t:
        outputs = []
        for attempt in ("a", "b"):
            out = tmp_path / attempt
            cmd_pipeline(_pipeline_cfg(out, 42), figures=False)
            outputs.append({n: (out / n).read_bytes() for n in ("checkpoint.bin", "run.tsv", "report.tsv")})
        assert outputs[0] == outputs[1]

        wins = 0
        for seed in range(100):
            out = tmp_path / f"s{seed}"
            report, _, qrels = cmd_pipeline(_pipeline_cfg(out, seed), figures=False)
            baseline = MX.evaluate_run(MX.random_run(qrels, seed), qrels)
            wins += report.map > baseline.map
    record_property("detail", f"byte-identical reruns; model beat random in {wins}/100 seeds")
    assert wins >= 95
    assert t.elapsed < 600


@pytest.mark.criterion(9, "class-balance reproduction", budget=None)
def test_criterion_9_class_balance(tmp_path, capsys, record_property):
    main(["make-synthetic", str(tmp_path / "ar"), "--balance", "1500:458"])
    main(["make-synthetic", str(tmp_path / "en"), "--balance", "672:228"])
    capsys.readouterr()
    assert main(["stats", str(tmp_path / "ar" / "dataset.tsv")]) == 0
    ar = capsys.readouterr().out
    assert main(["stats", str(tmp_path / "en" / "dataset.tsv")]) == 0
    en = capsys.readouterr().out
    ar_line = next(l for l in ar.splitlines() if l.startswith("positive_fraction"))
    en_line = next(l for l in en.splitlines() if l.startswith("positive_fraction"))
    record_property("detail", f"{ar_line.split(chr(9))[1]} | {en_line.split(chr(9))[1]}")
    assert ar_line == "positive_fraction\t0.3053 (31%)"
    assert en_line.endswith("(34%)")
