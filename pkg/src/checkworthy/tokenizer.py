"""Subword tokenizers (WordPiece, BPE) and corpus/vocabulary overlap analysis."""
from __future__ import annotations

import unicodedata
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

from .errors import ContractError, InputError

WORDPIECE = "wordpiece"
BPE = "bpe"

DEFAULT_SPECIALS = {
    WORDPIECE: {"unk": "[UNK]", "bos": "[CLS]", "eos": "[SEP]", "pad": "[PAD]"},
    BPE: {"unk": "<unk>", "bos": "<s>", "eos": "</s>", "pad": "<pad>"},
}

# space marker used by byte-level BPE vocabularies (GPT-2 / RoBERTa)
SPACE_MARK = "Ġ"


class VocabError(InputError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    scheme: str
    tokens: tuple
    continuation_prefix: str = "##"
    specials: dict = field(default=None)

    def __post_init__(self):
        if self.scheme not in (WORDPIECE, BPE):
            raise VocabError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.specials is None:
            object.__setattr__(self, "specials", dict(DEFAULT_SPECIALS[self.scheme]))
        index = {}
        for i, tok in enumerate(self.tokens):
            if tok in index:
                raise VocabError(f"duplicate token {tok!r} at line {i + 1} (first at line {index[tok] + 1})")
            index[tok] = i
        object.__setattr__(self, "_index", index)
        for role, tok in self.specials.items():
            if tok not in index:
                raise VocabError(f"vocabulary lacks the {role} special token {tok!r}")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token):
        return self._index[token]

    def get(self, token, default=None):
        return self._index.get(token, default)

    @property
    def unk_id(self):
        return self._index[self.specials["unk"]]

    @property
    def bos_id(self):
        return self._index[self.specials["bos"]]

    @property
    def eos_id(self):
        return self._index[self.specials["eos"]]

    @property
    def pad_id(self):
        return self._index[self.specials["pad"]]


@dataclass(frozen=True)
class TokenSequence:
    tokens: list
    ids: list
    source_text: str


def load_vocab(path, scheme: str = WORDPIECE, specials: Optional[dict] = None,
               continuation_prefix: str = "##") -> Vocabulary:
    """One token per line, line order defines ids."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    tokens = [ln.rstrip("\r") for ln in lines]
    return Vocabulary(scheme, tokens, continuation_prefix, specials)


def save_vocab(vocab: Vocabulary, path):
    Path(path).write_text("\n".join(vocab.tokens) + "\n", encoding="utf-8")


@lru_cache(maxsize=None)
def bytes_to_unicode():
    """Reversible byte -> printable character table used by byte-level BPE."""
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) \
        + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return {b: chr(c) for b, c in zip(bs, cs)}


@dataclass(frozen=True)
class MergeTable:
    merges: tuple
    byte_level: bool = False

    def __post_init__(self):
        merges = tuple((str(a), str(b)) for a, b in self.merges)
        object.__setattr__(self, "merges", merges)
        ranks = {}
        produced = set()
        for rank, (a, b) in enumerate(merges):
            if (a, b) in ranks:
                raise VocabError(f"duplicate merge ({a!r}, {b!r}) at rank {rank}")
            for sym in (a, b):
                if len(sym) != 1 and sym not in produced:
                    raise VocabError(
                        f"merge {rank} uses {sym!r}, which is neither a base symbol "
                        "nor produced by an earlier merge"
                    )
            ranks[(a, b)] = rank
            produced.add(a + b)
        object.__setattr__(self, "ranks", ranks)

    def __len__(self):
        return len(self.merges)


def load_merges(path, byte_level: bool = False) -> MergeTable:
    merges = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        line = line.rstrip("\r")
        if not line or line.startswith("#version"):
            continue
        parts = line.split(" ")
        if len(parts) != 2:
            raise VocabError(f"line {lineno}: expected two space-separated symbols")
        merges.append((parts[0], parts[1]))
    return MergeTable(merges, byte_level=byte_level)


def wordpiece_word(word: str, vocab: Vocabulary, max_word_chars: int = 100) -> list:
    """Greedy longest-match-first segmentation of a single word."""
    unk = vocab.specials["unk"]
    if len(word) > max_word_chars:
        return [unk]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while start < end:
            sub = word[start:end]
            if start > 0:
                sub = vocab.continuation_prefix + sub
            if sub in vocab:
                piece = sub
                break
            end -= 1
        if piece is None:
            return [unk]
        pieces.append(piece)
        start = end
    return pieces


def wordpiece_tokenize(text: str, vocab: Vocabulary, max_word_chars: int = 100) -> TokenSequence:
    if vocab.scheme != WORDPIECE:
        raise ContractError("wordpiece_tokenize needs a wordpiece vocabulary")
    tokens = []
    for word in text.split():
        tokens.extend(wordpiece_word(word, vocab, max_word_chars))
    return TokenSequence(tokens, [vocab.id(t) for t in tokens], text)


def bpe_word(symbols: list, ranks: dict) -> list:
    """Repeatedly merge the lowest-ranked adjacent pair (all its occurrences, left to right)."""
    symbols = list(symbols)
    while len(symbols) > 1:
        best = None
        best_rank = None
        for pair in zip(symbols, symbols[1:]):
            r = ranks.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best, best_rank = pair, r
        if best is None:
            break
        a, b = best
        merged = []
        i = 0
        while i < len(symbols):
            if i < len(symbols) - 1 and symbols[i] == a and symbols[i + 1] == b:
                merged.append(a + b)
                i += 2
            else:
                merged.append(symbols[i])
                i += 1
        symbols = merged
    return symbols


def _bpe_pretokenize(text: str, byte_level: bool) -> list:
    words = text.split()
    if not byte_level:
        return [list(w) for w in words]
    table = bytes_to_unicode()
    out = []
    for i, w in enumerate(words):
        prefix = " " if i > 0 else ""
        out.append([table[b] for b in (prefix + w).encode("utf-8")])
    return out


def bpe_tokenize(text: str, vocab: Vocabulary, merges: MergeTable) -> TokenSequence:
    """Character-level BPE by default; byte-level when ``merges.byte_level``.

    A merged symbol missing from the vocabulary falls back to its base
    symbols; a base symbol missing from the vocabulary maps to the unknown
    token.
    """
    if vocab.scheme != BPE:
        raise ContractError("bpe_tokenize needs a bpe vocabulary")
    unk = vocab.specials["unk"]
    tokens = []
    for symbols in _bpe_pretokenize(text, merges.byte_level):
        for sym in bpe_word(symbols, merges.ranks):
            if sym in vocab:
                tokens.append(sym)
            else:
                tokens.extend(c if c in vocab else unk for c in sym)
    return TokenSequence(tokens, [vocab.id(t) for t in tokens], text)


class TextEncoder:
    """Binds a vocabulary (and merges, for BPE) into one ``encode`` call."""

    def __init__(self, vocab: Vocabulary, merges: Optional[MergeTable] = None,
                 lowercase: bool = False, max_word_chars: int = 100):
        if vocab.scheme == BPE and merges is None:
            merges = MergeTable(())
        self.vocab = vocab
        self.merges = merges
        self.lowercase = lowercase
        self.max_word_chars = max_word_chars

    def encode(self, text: str) -> TokenSequence:
        src = text.lower() if self.lowercase else text
        if self.vocab.scheme == WORDPIECE:
            seq = wordpiece_tokenize(src, self.vocab, self.max_word_chars)
        else:
            seq = bpe_tokenize(src, self.vocab, self.merges)
        return TokenSequence(seq.tokens, seq.ids, text)

    @property
    def vocab_size(self):
        return len(self.vocab)


# --- overlap analysis -------------------------------------------------------

_URL = re.compile(r"https?://\S+|www\.\S+", re.IGNORECASE)
_MENTION = re.compile(r"@\w+")


@dataclass(frozen=True)
class Normalizer:
    """Cleaning applied before counting corpus tokens against a vocabulary."""

    lowercase: bool = True
    strip_urls: bool = True
    strip_mentions: bool = True
    split_punct: bool = True
    strip_diacritics: bool = False

    def tokens(self, text: str) -> list:
        if self.strip_urls:
            text = _URL.sub(" ", text)
        if self.strip_mentions:
            text = _MENTION.sub(" ", text)
        if self.lowercase:
            text = text.lower()
        if self.strip_diacritics:
            text = "".join(c for c in text if unicodedata.category(c) != "Mn")
        out = []
        for word in text.split():
            if self.split_punct:
                out.extend(_split_punct(word))
            else:
                out.append(word)
        return out


def _split_punct(word):
    # punctuation and symbols (emoji included) become standalone tokens,
    # combining marks stay attached to their base letter
    parts, cur = [], []
    for ch in word:
        if unicodedata.category(ch)[0] in "PS":
            if cur:
                parts.append("".join(cur))
                cur = []
            parts.append(ch)
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return parts


@dataclass(frozen=True)
class OverlapReport:
    corpus_unique_tokens: int
    overlapping: int
    fraction: float
    sample_missing: list

    def describe(self):
        lines = [
            f"corpus_unique_tokens\t{self.corpus_unique_tokens}",
            f"overlapping\t{self.overlapping}",
            f"fraction\t{self.fraction:.4f} ({self.fraction:.0%})",
            "missing_token\tfrequency",
        ]
        lines += [f"{tok}\t{n}" for tok, n in self.sample_missing]
        return "\n".join(lines)


def in_vocab(token: str, vocab: Vocabulary) -> bool:
    """Whole-token membership; byte-level BPE vocabularies store words with a space marker."""
    if token in vocab:
        return True
    return vocab.scheme == BPE and (SPACE_MARK + token) in vocab


def vocab_overlap(corpus, vocab: Vocabulary, normalizer: Normalizer = Normalizer(),
                  max_missing: int = 20) -> OverlapReport:
    counts = Counter()
    for tweet in corpus:
        text = tweet.text if hasattr(tweet, "text") else tweet
        counts.update(normalizer.tokens(text))
    hits = sum(1 for tok in counts if in_vocab(tok, vocab))
    unique = len(counts)
    missing = sorted(
        ((tok, n) for tok, n in counts.items() if not in_vocab(tok, vocab)),
        key=lambda kv: (-kv[1], kv[0]),
    )
    return OverlapReport(unique, hits, hits / unique if unique else 0.0, missing[:max_missing])
