"""Ranked-list evaluation: P@k, AP/mAP, reciprocal rank, R-precision.

Relevance is binary. Ids missing from the judgments count as
non-relevant and are tallied as "unjudged".
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError, ValidationError
from .rank import RankedRun, ScoredTweet
from .rng import StableRandom, derive_seed

K_VALUES = (1, 3, 5, 10, 15, 20, 25, 30)
PRECISION_COLUMNS = tuple(f"P@{k}" for k in K_VALUES)
# report layouts: AP first with the rank metrics, or precision cutoffs first with AP last
COLUMNS = ("AP", "RR", "R-P") + PRECISION_COLUMNS
LAYOUTS = {
    "full": COLUMNS,
    "precision": PRECISION_COLUMNS[2:] + ("AP",),
}

# AP normalizations
NORM_TOTAL = "total"
NORM_MIN_CUTOFF = "min_cutoff"


def _relevance(ranking, judged):
    return np.array([1 if judged.get(i, 0) > 0 else 0 for i in ranking], dtype=np.int64)


def _n_relevant(judged):
    return sum(1 for v in judged.values() if v > 0)


def precision_at_k(ranking, judged: dict, k: int) -> float:
    """Relevant items among the first k, divided by k (even if the list is shorter)."""
    if k < 1:
        raise ContractError("k must be >= 1")
    return float(_relevance(ranking[:k], judged).sum()) / k


def average_precision(ranking, judged: dict, cutoff=None, normalization=NORM_TOTAL) -> float:
    if cutoff is not None:
        ranking = ranking[:cutoff]
    R = _n_relevant(judged)
    if normalization == NORM_MIN_CUTOFF and cutoff is not None:
        R = min(R, cutoff)
    if R == 0:
        return 0.0
    rel = _relevance(ranking, judged)
    hits = np.cumsum(rel)
    ranks = np.arange(1, len(rel) + 1)
    return float(np.sum((hits / ranks)[rel == 1]) / R)


def reciprocal_rank(ranking, judged: dict) -> float:
    rel = _relevance(ranking, judged)
    nz = np.flatnonzero(rel)
    return 1.0 / (nz[0] + 1) if nz.size else 0.0


def r_precision(ranking, judged: dict) -> float:
    R = _n_relevant(judged)
    return precision_at_k(ranking, judged, R) if R else 0.0


def topic_metrics(ranking, judged, ks=K_VALUES, cutoff=None, normalization=NORM_TOTAL) -> dict:
    vals = {
        "AP": average_precision(ranking, judged, cutoff, normalization),
        "RR": reciprocal_rank(ranking, judged),
        "R-P": r_precision(ranking, judged),
    }
    for k in ks:
        vals[f"P@{k}"] = precision_at_k(ranking, judged, k)
    return vals


@dataclass
class MetricReport:
    per_topic: dict            # topic_id -> {column: value}
    columns: tuple = COLUMNS
    unjudged: int = 0
    aggregate: dict = field(init=False)

    def __post_init__(self):
        self.aggregate = {
            c: float(np.mean([v[c] for v in self.per_topic.values()])) if self.per_topic else 0.0
            for c in self.columns
        }

    @property
    def map(self):
        return self.aggregate["AP"]

    def _columns(self, layout):
        if layout is None:
            return self.columns
        if layout not in LAYOUTS:
            raise ContractError(f"unknown report layout {layout!r}")
        missing = [c for c in LAYOUTS[layout] if c not in self.columns]
        if missing:
            raise ContractError(f"layout {layout!r} needs columns {missing}")
        return LAYOUTS[layout]

    def rows(self, layout=None):
        cols = self._columns(layout)
        for topic, vals in self.per_topic.items():
            yield topic, [vals[c] for c in cols]
        yield "ALL", [self.aggregate[c] for c in cols]

    def render(self, layout=None) -> str:
        """Tab-separated table, one row per topic plus an ``ALL`` row of means."""
        lines = ["topic_id\t" + "\t".join(self._columns(layout))]
        for topic, vals in self.rows(layout):
            lines.append(topic + "\t" + "\t".join(f"{v:.4f}" for v in vals))
        return "\n".join(lines) + "\n"

    def save(self, path, layout=None):
        Path(path).write_text(self.render(layout), encoding="utf-8", newline="\n")


def evaluate_run(run, qrels: dict, ks=K_VALUES, cutoff=None, normalization=NORM_TOTAL) -> MetricReport:
    """Per-topic metrics for every topic in ``run``; aggregates are plain means."""
    per_topic = {}
    unjudged = 0
    columns = ("AP", "RR", "R-P") + tuple(f"P@{k}" for k in ks)
    for topic in run.topics:
        if topic not in qrels:
            raise ValidationError(f"topic {topic!r} has no relevance judgments")
        ranking = run.ranking(topic)
        judged = qrels[topic]
        unjudged += sum(1 for i in ranking if i not in judged)
        per_topic[topic] = topic_metrics(ranking, judged, ks, cutoff, normalization)
    return MetricReport(per_topic, columns, unjudged)


def qrels_from_dataset(dataset) -> dict:
    out = {}
    for t in dataset:
        if t.label is None:
            raise ContractError("qrels need a labeled dataset")
        out.setdefault(t.topic_id, {})[t.tweet_id] = t.label
    return out


def dump_qrels(qrels: dict) -> str:
    return "".join(f"{topic}\t{tid}\t{rel}\n" for topic, j in qrels.items() for tid, rel in j.items())


def save_qrels(qrels: dict, path):
    Path(path).write_text(dump_qrels(qrels), encoding="utf-8", newline="\n")


def load_qrels(path) -> dict:
    qrels = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\r").split("\t")
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: expected topic_id, tweet_id, relevance in {{0,1}}")
        topic, tid, rel = parts
        judged = qrels.setdefault(topic, {})
        if tid in judged:
            raise ValidationError(f"{path}:{lineno}: duplicate judgment for {tid!r} in topic {topic!r}")
        judged[tid] = int(rel)
    return qrels


def random_run(qrels: dict, seed: int, run_id: str = "random"):
    """Baseline: each topic's judged ids in a seeded random order."""
    topics = {}
    for n, (topic, judged) in enumerate(qrels.items()):
        order = StableRandom(derive_seed(seed, n)).shuffle(sorted(judged))
        k = len(order)
        topics[topic] = tuple(
            ScoredTweet(topic, tid, float("nan"), float("nan"), 1.0 - 2.0 * i / max(k, 1))
            for i, tid in enumerate(order)
        )
    return RankedRun(run_id, topics)
