"""Softmax probability-difference scores and per-topic rankings."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class ScoredTweet:
    topic_id: str
    tweet_id: str
    p_negative: float
    p_positive: float
    score: float


@dataclass(frozen=True)
class RankedRun:
    run_id: str
    topics: dict  # topic_id -> tuple of ScoredTweet, best first

    def ranking(self, topic_id):
        return [s.tweet_id for s in self.topics[topic_id]]

    def __len__(self):
        return sum(len(v) for v in self.topics.values())


def softmax2(logits):
    """Stable two-class softmax -> ``(p_negative, p_positive)``."""
    l_neg, l_pos = float(logits[0]), float(logits[1])
    m = max(l_neg, l_pos)
    e_neg = math.exp(l_neg - m)
    e_pos = math.exp(l_pos - m)
    z = e_neg + e_pos
    return e_neg / z, e_pos / z


def score(p_negative, p_positive):
    return p_positive - p_negative


def score_logits(logits):
    """Probability difference; equals tanh of half the logit gap."""
    return score(*softmax2(logits))


def scored_tweet(topic_id, tweet_id, logits) -> ScoredTweet:
    p_neg, p_pos = softmax2(logits)
    return ScoredTweet(topic_id, tweet_id, p_neg, p_pos, score(p_neg, p_pos))


def rank_topics(scored, run_id: str) -> RankedRun:
    """Group by topic (first-seen order) and sort by score desc, tweet_id asc."""
    groups = {}
    seen = set()
    for s in scored:
        key = (s.topic_id, s.tweet_id)
        if key in seen:
            raise ValidationError(f"duplicate scored tweet {s.tweet_id!r} in topic {s.topic_id!r}")
        seen.add(key)
        groups.setdefault(s.topic_id, []).append(s)
    return RankedRun(
        run_id,
        {t: tuple(sorted(g, key=lambda s: (-s.score, s.tweet_id))) for t, g in groups.items()},
    )


# --- files -----------------------------------------------------------------------

SCORED_HEADER = "topic_id\ttweet_id\tp_negative\tp_positive\tscore"


def dump_scored(scored) -> str:
    # repr keeps full precision so ranking from the file matches ranking in memory
    lines = [SCORED_HEADER]
    lines += [f"{s.topic_id}\t{s.tweet_id}\t{s.p_negative!r}\t{s.p_positive!r}\t{s.score!r}"
              for s in scored]
    return "\n".join(lines) + "\n"


def save_scored(scored, path):
    Path(path).write_text(dump_scored(scored), encoding="utf-8", newline="\n")


def load_scored(path) -> list:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if lines and lines[0] == SCORED_HEADER:
        lines = lines[1:]
    out = []
    for lineno, line in enumerate(lines, start=2):
        parts = line.split("\t")
        if len(parts) != 5:
            raise ParseError(f"{path}:{lineno}: expected 5 fields")
        try:
            p_neg, p_pos, sc = (float(x) for x in parts[2:])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        out.append(ScoredTweet(parts[0], parts[1], p_neg, p_pos, sc))
    return out


def dump_run(run: RankedRun) -> str:
    lines = []
    for topic, items in run.topics.items():
        lines += [f"{topic}\t{s.tweet_id}\t{s.score:.6f}\t{run.run_id}" for s in items]
    return "".join(line + "\n" for line in lines)


def save_run(run: RankedRun, path):
    Path(path).write_text(dump_run(run), encoding="utf-8", newline="\n")


def load_run(path) -> RankedRun:
    """Read a run file; line order is taken as rank order within each topic."""
    topics = {}
    run_id = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"{path}:{lineno}: expected topic_id, tweet_id, score, run_id")
        topic, tid, sc, rid = parts
        if run_id is None:
            run_id = rid
        elif rid != run_id:
            raise ParseError(f"{path}:{lineno}: mixed run ids {run_id!r} and {rid!r}")
        try:
            val = float(sc)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad score {sc!r}") from exc
        topics.setdefault(topic, []).append(ScoredTweet(topic, tid, math.nan, math.nan, val))
    return RankedRun(run_id or "", {t: tuple(v) for t, v in topics.items()})
