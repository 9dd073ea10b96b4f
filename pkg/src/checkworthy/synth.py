"""Seeded synthetic corpora, so every pipeline stage runs offline.

The topical word lists only exist to give the classifier a learnable but
noisy signal; they make no claim to resemble real tweets.
"""
from __future__ import annotations

import string

from .corpus import Dataset, Tweet
from .rng import StableRandom
from .tokenizer import DEFAULT_SPECIALS, WORDPIECE, Vocabulary

CLAIM_WORDS = [
    "cure", "deaths", "confirmed", "vaccine", "percent", "hospital", "spread",
    "cases", "lockdown", "outbreak", "tested", "million", "officials", "report",
]
CHATTER_WORDS = [
    "lol", "love", "morning", "coffee", "happy", "friends", "weekend", "music",
    "funny", "sleep", "game", "pizza", "bored", "movie",
]
FILLER_WORDS = [
    "the", "a", "is", "in", "of", "and", "to", "today", "people", "now",
    "this", "we", "they", "just", "so", "that", "it", "for",
]
TOPIC_WORDS = ["#covid19", "#protests", "#elections", "#economy", "#climate", "#health"]

# back-translation through the mock pivot turns some claim words into synonyms
PARAPHRASES = {
    "deaths": "fatalities", "cure": "remedy", "confirmed": "verified",
    "cases": "infections", "spread": "transmission", "report": "statement",
}


def _pick(rng, seq):
    return seq[rng.below(len(seq))]


def make_tweet_text(rng: StableRandom, positive: bool, topic_word: str, noise: float = 0.15):
    strong, weak = (CLAIM_WORDS, CHATTER_WORDS) if positive else (CHATTER_WORDS, CLAIM_WORDS)
    words = [topic_word]
    words += [_pick(rng, strong) for _ in range(2 + rng.below(2))]
    words += [_pick(rng, FILLER_WORDS) for _ in range(3 + rng.below(6))]
    if rng.below(1000) < int(noise * 1000):
        words.append(_pick(rng, weak))
    return " ".join(rng.shuffle(words))


def make_corpus(n_tweets: int = 200, n_topics: int = 4, positive_fraction: float = 0.3,
                seed: int = 0, name: str = "synthetic") -> Dataset:
    rng = StableRandom(seed)
    n_pos = round(positive_fraction * n_tweets)
    labels = rng.shuffle([1] * n_pos + [0] * (n_tweets - n_pos))
    tweets = []
    for i, label in enumerate(labels):
        topic = i % n_topics
        tweets.append(Tweet(
            topic_id=f"T{topic + 1}",
            tweet_id=f"t{i:05d}",
            text=make_tweet_text(rng, bool(label), TOPIC_WORDS[topic % len(TOPIC_WORDS)]),
            label=label,
        ))
    return Dataset(tweets, name=name)


def make_balance_fixture(total: int, positive: int, seed: int = 0, topic: str = "T1",
                         name: str = "fixture") -> Dataset:
    """``total`` tweets, exactly ``positive`` of them labeled check-worthy."""
    labels = StableRandom(seed).shuffle([1] * positive + [0] * (total - positive))
    return Dataset(
        [Tweet(topic, f"{i:06d}", f"tweet number {i}", lab) for i, lab in enumerate(labels)],
        name=name,
    )


def make_separable_corpus(n: int = 32, seed: int = 0) -> Dataset:
    """Half the tweets carry the marker ``alpha`` (positive), half ``beta``."""
    rng = StableRandom(seed)
    tweets, seen = [], set()
    i = 0
    while len(tweets) < n:
        label = len(tweets) % 2
        marker = "alpha" if label else "beta"
        words = [marker] + [_pick(rng, FILLER_WORDS) for _ in range(4)]
        text = " ".join(rng.shuffle(words))
        if text in seen:
            continue
        seen.add(text)
        tweets.append(Tweet("T1", f"s{i:03d}", text, label))
        i += 1
    return Dataset(tweets, name="separable")


def corpus_words():
    words = set(CLAIM_WORDS) | set(CHATTER_WORDS) | set(FILLER_WORDS) | set(TOPIC_WORDS)
    words |= set(PARAPHRASES.values()) | {"alpha", "beta"}
    return words


def pivot_word(word: str) -> str:
    """Deterministic pseudo-translation into the mock pivot language."""
    return "x" + word[::-1]


def make_vocab() -> Vocabulary:
    """WordPiece vocabulary covering the synthetic corpora.

    Also carries single characters and their continuation forms so
    unseen words segment instead of collapsing to the unknown token.
    """
    specials = DEFAULT_SPECIALS[WORDPIECE]
    tokens = [specials["pad"], specials["unk"], specials["bos"], specials["eos"]]
    words = corpus_words()
    words |= {pivot_word(w) for w in words}
    tokens += sorted(words)
    chars = string.ascii_lowercase + string.digits + "#"
    tokens += [c for c in chars if c not in words]
    tokens += ["##" + c for c in chars]
    return Vocabulary(WORDPIECE, tokens)


def mock_translation_rows(source: str = "en", pivot: str = "xx"):
    """Rows ``(src_lang, tgt_lang, word, translation)`` for the mock provider."""
    rows = []
    for w in sorted(corpus_words()):
        rows.append((source, pivot, w, pivot_word(w)))
    for w in sorted(corpus_words()):
        rows.append((pivot, source, pivot_word(w), PARAPHRASES.get(w, w)))
    return rows


def write_mock_table(path, source: str = "en", pivot: str = "xx"):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in mock_translation_rows(source, pivot):
            fh.write("\t".join(row) + "\n")
