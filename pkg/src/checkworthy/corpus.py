"""Loading, validating, splitting and summarizing labeled tweet datasets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .errors import ContractError, ParseError, SchemaError, ValidationError
from .rng import StableRandom

ORIGINAL = "original"
AUGMENTED = "augmented"


@dataclass(frozen=True)
class Tweet:
    topic_id: str
    tweet_id: str
    text: str
    label: Optional[int] = None
    origin: str = ORIGINAL
    # set on augmented tweets only
    source_id: Optional[str] = None
    lang: Optional[str] = None


@dataclass(frozen=True)
class Dataset:
    tweets: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tweets", tuple(self.tweets))

    def __len__(self):
        return len(self.tweets)

    def __iter__(self):
        return iter(self.tweets)

    @property
    def is_labeled(self):
        return len(self.tweets) > 0 and self.tweets[0].label is not None

    @property
    def ids(self):
        return [t.tweet_id for t in self.tweets]


@dataclass(frozen=True)
class Schema:
    """Column names used to read a dataset TSV.

    ``label`` may be absent from the file (unlabeled evaluation data).
    ``origin``, ``source_id`` and ``lang`` are only written for augmented
    datasets and are optional on read.
    """

    topic_id: str = "topic_id"
    tweet_id: str = "tweet_id"
    text: str = "tweet_text"
    label: str = "check_worthiness"
    origin: str = "origin"
    source_id: str = "source_id"
    lang: str = "lang"


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple((str(n), float(f)) for n, f in self.fractions))
        if not self.fractions:
            raise ContractError("split spec needs at least one fraction")
        names = [n for n, _ in self.fractions]
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate split names: {names}")
        for name, frac in self.fractions:
            if not (0.0 < frac <= 1.0):
                raise ContractError(f"split fraction for {name!r} must be in (0, 1], got {frac}")
        total = sum(f for _, f in self.fractions)
        if abs(total - 1.0) > 1e-9:
            raise ContractError(f"split fractions sum to {total}, expected 1.0")


@dataclass(frozen=True)
class ClassBalance:
    total: int
    positive: int
    positive_fraction: float = field(init=False)

    def __post_init__(self):
        if not 0 <= self.positive <= self.total:
            raise ValueError("positive count out of range")
        object.__setattr__(
            self, "positive_fraction", self.positive / self.total if self.total else 0.0
        )

    @property
    def negative(self):
        return self.total - self.positive

    def describe(self):
        return (
            f"total\t{self.total}\n"
            f"positive\t{self.positive}\n"
            f"negative\t{self.negative}\n"
            f"positive_fraction\t{self.positive_fraction:.4f} ({self.positive_fraction:.0%})"
        )


def _parse_label(raw, row):
    if raw == "":
        return None
    if raw in ("0", "1"):
        return int(raw)
    raise ParseError(f"row {row}: label must be 0 or 1, got {raw!r}")


def load_dataset(path, schema: Schema = Schema(), name: str | None = None) -> Dataset:
    """Read a UTF-8 TSV with a header row into a :class:`Dataset`.

    Row numbers in error messages are 1-based file lines (header is line 1).
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SchemaError(f"{path}: empty file, expected a header row")
    header = lines[0].rstrip("\r").split("\t")
    col = {c: i for i, c in enumerate(header)}
    for required in (schema.topic_id, schema.tweet_id, schema.text):
        if required not in col:
            raise SchemaError(f"{path}: missing column {required!r}")

    def opt(key):
        return col.get(key)

    i_label, i_origin, i_src, i_lang = (
        opt(schema.label), opt(schema.origin), opt(schema.source_id), opt(schema.lang)
    )
    tweets = []
    seen = {}
    dupes = []
    empty_rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ParseError(
                f"row {lineno}: expected {len(header)} tab-separated fields, got {len(cells)}"
            )
        text = cells[col[schema.text]]
        if not text.strip():
            empty_rows.append(lineno)
            continue
        tid = cells[col[schema.tweet_id]]
        if tid in seen:
            dupes.append(tid)
        seen[tid] = lineno
        label = _parse_label(cells[i_label].strip(), lineno) if i_label is not None else None
        origin = cells[i_origin] if i_origin is not None and cells[i_origin] else ORIGINAL
        if origin not in (ORIGINAL, AUGMENTED):
            raise ParseError(f"row {lineno}: unknown origin {origin!r}")
        tweets.append(
            Tweet(
                topic_id=cells[col[schema.topic_id]],
                tweet_id=tid,
                text=text,
                label=label,
                origin=origin,
                source_id=(cells[i_src] or None) if i_src is not None else None,
                lang=(cells[i_lang] or None) if i_lang is not None else None,
            )
        )
    if empty_rows:
        raise ValidationError(f"{path}: empty text on rows {empty_rows}")
    if dupes:
        raise ValidationError(f"{path}: duplicate tweet_id values: {sorted(set(dupes))}")
    labeled = [t.label is not None for t in tweets]
    if any(labeled) and not all(labeled):
        missing = [i + 2 for i, ok in enumerate(labeled) if not ok]
        raise ValidationError(f"{path}: partially labeled file, missing labels on rows {missing[:20]}")
    return Dataset(tweets, name=name if name is not None else path.stem)


def _check_field(value, what, tid):
    if "\t" in value or "\n" in value or "\r" in value:
        raise ValidationError(f"{what} of tweet {tid!r} contains a tab or newline")


def dump_dataset(dataset: Dataset, schema: Schema = Schema()) -> str:
    labeled = dataset.is_labeled
    extended = any(t.origin != ORIGINAL or t.lang for t in dataset)
    cols = [schema.topic_id, schema.tweet_id, schema.text]
    if labeled:
        cols.append(schema.label)
    if extended:
        cols += [schema.origin, schema.source_id, schema.lang]
    out = ["\t".join(cols)]
    for t in dataset:
        _check_field(t.text, "text", t.tweet_id)
        _check_field(t.tweet_id, "tweet_id", t.tweet_id)
        _check_field(t.topic_id, "topic_id", t.tweet_id)
        row = [t.topic_id, t.tweet_id, t.text]
        if labeled:
            row.append(str(t.label))
        if extended:
            row += [t.origin, t.source_id or "", t.lang or ""]
        out.append("\t".join(row))
    return "\n".join(out) + "\n"


def save_dataset(dataset: Dataset, path, schema: Schema = Schema()):
    Path(path).write_text(dump_dataset(dataset, schema), encoding="utf-8", newline="\n")


def class_balance(dataset: Dataset) -> ClassBalance:
    if any(t.label is None for t in dataset):
        raise ContractError("class balance requires a fully labeled dataset")
    return ClassBalance(total=len(dataset), positive=sum(t.label for t in dataset))


def split_sizes(total: int, fractions: Sequence[float]) -> list[int]:
    """round(f * total) for every split but the last, which takes the remainder."""
    sizes = [math.floor(f * total + 0.5) for f in fractions[:-1]]
    # over-allocation can only come from rounding up; take it back from the back
    i = len(sizes) - 1
    while sum(sizes) > total and i >= 0:
        excess = sum(sizes) - total
        take = min(excess, sizes[i])
        sizes[i] -= take
        i -= 1
    sizes.append(total - sum(sizes))
    return sizes


def _largest_remainder(targets, total):
    base = [math.floor(t) for t in targets]
    left = total - sum(base)
    order = sorted(range(len(targets)), key=lambda i: (-(targets[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def split(dataset: Dataset, spec: SplitSpec) -> list[tuple[str, Dataset]]:
    """Partition ``dataset`` per ``spec``.

    Membership is decided by a seeded shuffle; inside each split the input
    order is kept.
    """
    n = len(dataset)
    names = [name for name, _ in spec.fractions]
    sizes = split_sizes(n, [f for _, f in spec.fractions])
    rng = StableRandom(spec.seed)
    assignment = [[] for _ in names]

    if spec.stratified:
        if any(t.label is None for t in dataset):
            raise ContractError("stratified split requires a fully labeled dataset")
        pos = [i for i, t in enumerate(dataset) if t.label == 1]
        neg = [i for i, t in enumerate(dataset) if t.label == 0]
        g = len(pos) / n if n else 0.0
        pos_counts = _largest_remainder([g * s for s in sizes], len(pos))
        pos = rng.shuffle(pos)
        neg = rng.shuffle(neg)
        pi = ni = 0
        for k, size in enumerate(sizes):
            p = pos_counts[k]
            assignment[k] = pos[pi:pi + p] + neg[ni:ni + size - p]
            pi += p
            ni += size - p
    else:
        order = rng.shuffle(range(n))
        start = 0
        for k, size in enumerate(sizes):
            assignment[k] = order[start:start + size]
            start += size

    base = dataset.name or "dataset"
    return [
        (name, Dataset([dataset.tweets[i] for i in sorted(idx)], name=f"{base}.{name}"))
        for name, idx in zip(names, assignment)
    ]


def length_stats(dataset: Dataset) -> dict:
    if not len(dataset):
        return {"tweets": 0}
    chars = [len(t.text) for t in dataset]
    words = [len(t.text.split()) for t in dataset]
    return {
        "tweets": len(dataset),
        "topics": len({t.topic_id for t in dataset}),
        "chars_mean": sum(chars) / len(chars),
        "chars_max": max(chars),
        "words_mean": sum(words) / len(words),
        "words_min": min(words),
        "words_max": max(words),
    }


def concat(datasets: Sequence[Dataset], name: str = "") -> Dataset:
    tweets = [t for d in datasets for t in d]
    ids = [t.tweet_id for t in tweets]
    if len(set(ids)) != len(ids):
        seen, dupes = set(), set()
        for i in ids:
            (dupes if i in seen else seen).add(i)
        raise ValidationError(f"duplicate tweet_id values after concatenation: {sorted(dupes)}")
    return Dataset(tweets, name=name)
