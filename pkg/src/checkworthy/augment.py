"""Positive-class upsampling by back-translation through a pluggable translator."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import urllib.request
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol

from .corpus import AUGMENTED, ORIGINAL, ClassBalance, Dataset, Tweet, class_balance
from .errors import ConfigError, ContractError, LeakageError, ProviderError

log = logging.getLogger(__name__)


class TranslationProvider(Protocol):
    def supports(self, source: str, target: str) -> bool: ...

    def translate(self, text: str, source: str, target: str) -> str: ...


class MockProvider:
    """Word-by-word substitution tables, one per language pair.

    Table file rows are ``src_lang<TAB>tgt_lang<TAB>word<TAB>translation``.
    If a pair has no table of its own but its reverse does, the reverse
    table is inverted. Unknown words pass through unchanged.
    """

    def __init__(self, tables: Optional[dict] = None):
        self.tables = {pair: dict(t) for pair, t in (tables or {}).items()}
        self.calls = 0

    @classmethod
    def from_file(cls, path):
        tables = {}
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ConfigError(f"{path}:{lineno}: expected 4 tab-separated fields")
            src, tgt, word, trans = parts
            tables.setdefault((src, tgt), {})[word] = trans
        return cls(tables)

    @classmethod
    def identity(cls, *pairs):
        return cls({pair: {} for pair in pairs})

    def _table(self, source, target):
        if (source, target) in self.tables:
            return self.tables[(source, target)]
        if (target, source) in self.tables:
            return {v: k for k, v in self.tables[(target, source)].items()}
        return None

    def supports(self, source, target):
        return self._table(source, target) is not None

    def translate(self, text, source, target):
        table = self._table(source, target)
        if table is None:
            raise ProviderError(f"mock provider has no table for {source}->{target}")
        self.calls += 1
        return " ".join(table.get(w, w) for w in text.split())


class HttpProvider:
    """JSON-over-HTTP translation client.

    POSTs ``{"text", "source", "target"}`` to ``endpoint`` and reads
    ``{"text"}`` back. The bearer credential comes from the environment
    variable named by ``credential_env``; ``language_map`` rewrites
    language codes to whatever the service expects.
    """

    def __init__(self, endpoint: str, credential_env: Optional[str] = None,
                 language_map: Optional[dict] = None, pairs=None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.credential_env = credential_env
        self.language_map = dict(language_map or {})
        self.pairs = None if pairs is None else {tuple(p) for p in pairs}
        self.timeout = timeout

    def supports(self, source, target):
        return self.pairs is None or (source, target) in self.pairs

    def request_body(self, text, source, target):
        return {
            "text": text,
            "source": self.language_map.get(source, source),
            "target": self.language_map.get(target, target),
        }

    def translate(self, text, source, target):
        headers = {"Content-Type": "application/json"}
        if self.credential_env:
            token = os.environ.get(self.credential_env)
            if token is None:
                raise ProviderError(f"credential variable {self.credential_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        body = json.dumps(self.request_body(text, source, target)).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            raise ProviderError("translation response lacks a 'text' string")
        return payload["text"]


def cache_key(text, source, target):
    return hashlib.sha256(f"{source}\x1f{target}\x1f{text}".encode("utf-8")).hexdigest()


class CachedTranslator:
    """Memoizes a provider, optionally persisting to an append-only file.

    Cache file rows: ``key<TAB>source<TAB>target<TAB>json-encoded translation``.
    """

    def __init__(self, provider, path=None, retries: int = 2):
        self.provider = provider
        self.path = Path(path) if path else None
        self.retries = retries
        self.provider_calls = 0
        self.cache_hits = 0
        self._memo = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line:
                    continue
                key, _src, _tgt, blob = line.split("\t", 3)
                self._memo[key] = json.loads(blob)

    def supports(self, source, target):
        return self.provider.supports(source, target)

    def translate(self, text, source, target):
        key = cache_key(text, source, target)
        with self._lock:
            if key in self._memo:
                self.cache_hits += 1
                return self._memo[key]
        err = None
        for _ in range(self.retries + 1):
            with self._lock:
                self.provider_calls += 1
            try:
                out = self.provider.translate(text, source, target)
                break
            except Exception as exc:  # provider errors are opaque; retry any
                err = exc
        else:
            raise ProviderError(f"translation {source}->{target} failed: {err}") from err
        with self._lock:
            if key not in self._memo:
                self._memo[key] = out
                if self.path:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                        fh.write(f"{key}\t{source}\t{target}\t{json.dumps(out, ensure_ascii=False)}\n")
        return out


class Strategy(str, Enum):
    BACK_TRANSLATE = "back_translate"
    PIVOT_ONLY = "pivot_only"
    BOTH = "both"


@dataclass(frozen=True)
class AugmentStrategy:
    kind: Strategy = Strategy.BACK_TRANSLATE
    source: str = "ar"
    pivot: str = "en"

    def __post_init__(self):
        object.__setattr__(self, "kind", Strategy(self.kind))
        if self.pivot == self.source:
            raise ConfigError("pivot language must differ from the source language")


SUFFIX_BACK = "-bt"
SUFFIX_PIVOT = "-pv"


@dataclass
class AugmentReport:
    originals_translated: int
    tweets_added: int
    before: ClassBalance
    after: ClassBalance
    provider_calls: int
    cache_hits: int
    skipped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def describe(self):
        lines = [
            f"originals_translated\t{self.originals_translated}",
            f"tweets_added\t{self.tweets_added}",
            f"before\t{self.before.total} tweets, {self.before.positive} positive "
            f"({self.before.positive_fraction:.4f})",
            f"after\t{self.after.total} tweets, {self.after.positive} positive "
            f"({self.after.positive_fraction:.4f})",
            f"provider_calls\t{self.provider_calls}",
            f"cache_hits\t{self.cache_hits}",
            f"skipped\t{len(self.skipped)}",
        ]
        lines += [f"skipped_id\t{tid}" for tid in self.skipped]
        lines += [f"warning\t{w}" for w in self.warnings]
        return "\n".join(lines)


def back_translate(text: str, provider, source: str, pivot: str) -> str:
    """source -> pivot -> source."""
    return provider.translate(provider.translate(text, source, pivot), pivot, source)


def _ensure_cached(provider):
    return provider if isinstance(provider, CachedTranslator) else CachedTranslator(provider)


def upsample_positive(dataset: Dataset, strategy: AugmentStrategy, provider,
                      max_workers: int = 1):
    """Append translated copies of every positive tweet.

    Returns ``(augmented_dataset, report)``. A tweet whose translation fails
    after retries is skipped and listed in ``report.skipped``; if every
    attempted translation fails a :class:`ProviderError` is raised.
    """
    if any(t.label is None for t in dataset):
        raise ContractError("upsampling needs a fully labeled dataset")
    translator = _ensure_cached(provider)
    calls0, hits0 = translator.provider_calls, translator.cache_hits
    src, piv = strategy.source, strategy.pivot
    for pair in ((src, piv), (piv, src)):
        if strategy.kind == Strategy.PIVOT_ONLY and pair == (piv, src):
            continue
        if not translator.supports(*pair):
            raise ProviderError(f"provider does not support {pair[0]}->{pair[1]}")
    positives = [t for t in dataset if t.label == 1 and t.origin == ORIGINAL]

    def work(tweet):
        try:
            pivot_text = translator.translate(tweet.text, src, piv)
            back = None
            if strategy.kind != Strategy.PIVOT_ONLY:
                back = translator.translate(pivot_text, piv, src)
            return pivot_text, back
        except ProviderError as exc:
            log.warning("skipping %s: %s", tweet.tweet_id, exc)
            return None

    if max_workers > 1 and len(positives) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(work, positives))
    else:
        results = [work(t) for t in positives]

    added, skipped = [], []
    for tweet, res in zip(positives, results):
        if res is None:
            skipped.append(tweet.tweet_id)
            continue
        pivot_text, back = res
        if strategy.kind in (Strategy.BACK_TRANSLATE, Strategy.BOTH):
            added.append(_derived(tweet, back, SUFFIX_BACK, src))
        if strategy.kind in (Strategy.PIVOT_ONLY, Strategy.BOTH):
            added.append(_derived(tweet, pivot_text, SUFFIX_PIVOT, piv))
    if positives and len(skipped) == len(positives):
        raise ProviderError("every translation failed; augmentation aborted")

    out = Dataset(list(dataset.tweets) + added, name=f"{dataset.name}+aug" if dataset.name else "augmented")
    report = AugmentReport(
        originals_translated=len(positives) - len(skipped),
        tweets_added=len(added),
        before=class_balance(dataset),
        after=class_balance(out),
        provider_calls=translator.provider_calls - calls0,
        cache_hits=translator.cache_hits - hits0,
        skipped=skipped,
    )
    return out, report


def _derived(tweet: Tweet, text: str, suffix: str, lang: str) -> Tweet:
    if not text.strip():
        text = tweet.text
    # dataset TSV forbids tabs and newlines inside text
    text = " ".join(text.split())
    return Tweet(
        topic_id=tweet.topic_id,
        tweet_id=tweet.tweet_id + suffix,
        text=text,
        label=1,
        origin=AUGMENTED,
        source_id=tweet.tweet_id,
        lang=lang,
    )


@dataclass
class GuardResult:
    ok: bool
    offending: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def guard_splits(splits: dict, augment_target: str = "train", allow_leakage: bool = False) -> GuardResult:
    """Reject augmented tweets that could leak evaluation labels into training.

    Flagged: augmented tweets outside ``augment_target``, and augmented
    tweets (anywhere) whose source tweet sits in a non-target split.
    """
    if augment_target not in splits:
        raise ContractError(f"unknown split {augment_target!r}")
    home = {}
    for name, ds in splits.items():
        for t in ds:
            if t.origin == ORIGINAL:
                home[t.tweet_id] = name
    offending = []
    for name, ds in splits.items():
        for t in ds:
            if t.origin != AUGMENTED:
                continue
            if name != augment_target or home.get(t.source_id, augment_target) != augment_target:
                offending.append(t.tweet_id)
    if not offending:
        return GuardResult(True)
    if not allow_leakage:
        raise LeakageError(offending)
    msg = (f"LABEL LEAKAGE ALLOWED: {len(offending)} augmented tweets derive from or sit in "
           f"non-training splits; validation and hold-out scores are optimistic")
    warnings.warn(msg, stacklevel=2)
    log.warning(msg)
    return GuardResult(True, offending, [msg])
