import itertools
import random

import pytest

from checkworthy.corpus import Dataset, Tweet
from checkworthy.tokenizer import (
    BPE, WORDPIECE, MergeTable, Normalizer, TextEncoder, VocabError, Vocabulary, bpe_tokenize,
    bpe_word, bytes_to_unicode, load_merges, load_vocab, vocab_overlap, wordpiece_tokenize,
    wordpiece_word,
)

WP_SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
BPE_SPECIALS = ["<pad>", "<unk>", "<s>", "</s>"]


def wp_vocab(*tokens):
    return Vocabulary(WORDPIECE, WP_SPECIALS + list(tokens))


def brute_force_bpe(symbols, merges):
    """One merge application per step: the lowest-ranked adjacent pair, leftmost occurrence."""
    rank = {pair: r for r, pair in enumerate(merges)}
    symbols = list(symbols)
    while True:
        candidates = [
            (rank[(symbols[i], symbols[i + 1])], i)
            for i in range(len(symbols) - 1)
            if (symbols[i], symbols[i + 1]) in rank
        ]
        if not candidates:
            return symbols
        _, i = min(candidates)
        symbols[i:i + 2] = [symbols[i] + symbols[i + 1]]


def random_merge_table(rng, alphabet, n):
    """Valid merge table: every operand is a base symbol or an earlier merge product."""
    symbols = list(alphabet)
    merges = []
    while len(merges) < n:
        a, b = rng.choice(symbols), rng.choice(symbols)
        if (a, b) in merges or len(a + b) > 6:
            continue
        merges.append((a, b))
        if a + b not in symbols:
            symbols.append(a + b)
    return merges


class TestVocab:
    def test_load_five_lines(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("\n".join(WP_SPECIALS + ["hello"]) + "\n")
        v = load_vocab(p)
        assert len(v) == 5
        assert [v.id(t) for t in v.tokens] == [0, 1, 2, 3, 4]

    def test_duplicate(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("\n".join(WP_SPECIALS + ["hello", "x", "hello"]) + "\n")
        with pytest.raises(VocabError, match="line 7"):
            load_vocab(p)

    def test_missing_special(self):
        with pytest.raises(VocabError, match=r"\[UNK\]"):
            Vocabulary(WORDPIECE, ["[PAD]", "[CLS]", "[SEP]", "a"])

    def test_64k(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("\n".join(WP_SPECIALS + [f"w{i}" for i in range(64000 - 4)]) + "\n")
        assert len(load_vocab(p)) == 64000


class TestWordPiece:
    def test_unaffable(self):
        v = wp_vocab("un", "##aff", "##able", "a", "##a")
        assert wordpiece_tokenize("unaffable", v).tokens == ["un", "##aff", "##able"]

    def test_whole_word(self):
        v = wp_vocab("hello", "he", "##llo")
        seq = wordpiece_tokenize("hello", v)
        assert seq.tokens == ["hello"]
        assert seq.ids == [v.id("hello")]

    def test_unknown(self):
        assert wordpiece_tokenize("qzx", wp_vocab("a")).tokens == ["[UNK]"]

    def test_too_long(self):
        v = wp_vocab("a", "##a")
        assert wordpiece_word("a" * 101, v) == ["[UNK]"]
        assert wordpiece_word("a" * 100, v) == ["a"] + ["##a"] * 99

    def test_partial_match_is_unk(self):
        # "ab" segments as "a" then nothing matches "b"
        assert wordpiece_word("ab", wp_vocab("a")) == ["[UNK]"]

    def test_wrong_scheme(self):
        v = Vocabulary(BPE, BPE_SPECIALS + ["a"])
        with pytest.raises(Exception):
            wordpiece_tokenize("a", v)

    def test_invariants_random(self):
        rng = random.Random(0)
        alphabet = "abcde"
        pieces = set()
        while len(pieces) < 200:
            s = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 4)))
            pieces.add(s if rng.random() < 0.5 else "##" + s)
        v = wp_vocab(*sorted(pieces))
        for _ in range(2000):
            word = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 10)))
            out = wordpiece_word(word, v)
            assert all(p == "[UNK]" or p in v for p in out)
            if out != ["[UNK]"]:
                assert "".join(p[2:] if i else p for i, p in enumerate(out)) == word
                longest = max(i for i in range(1, len(word) + 1) if word[:i] in v)
                assert out[0] == word[:longest]


class TestBPE:
    def test_aaab(self):
        merges = [("a", "a"), ("aa", "b")]
        assert brute_force_bpe(list("aaab"), merges) == ["aa", "a", "b"]
        assert bpe_word(list("aaab"), MergeTable(merges).ranks) == ["aa", "a", "b"]

    def test_tokenize_aaab(self):
        v = Vocabulary(BPE, BPE_SPECIALS + ["a", "b", "aa", "aab"])
        seq = bpe_tokenize("aaab", v, MergeTable([("a", "a"), ("aa", "b")]))
        assert seq.tokens == ["aa", "a", "b"]

    def test_single_symbol(self):
        v = Vocabulary(BPE, BPE_SPECIALS + ["a", "b"])
        assert bpe_tokenize("a", v, MergeTable([("a", "b")])).tokens == ["a"]

    def test_empty_merges(self):
        v = Vocabulary(BPE, BPE_SPECIALS + list("abc"))
        assert bpe_tokenize("abc ca", v, MergeTable(())).tokens == list("abcca")

    def test_fallback_to_chars_and_unk(self):
        v = Vocabulary(BPE, BPE_SPECIALS + ["a", "b"])
        # merged "ab" is not in the vocabulary, "z" is not either
        assert bpe_tokenize("abz", v, MergeTable([("a", "b")])).tokens == ["a", "b", "<unk>"]

    def test_invalid_table(self):
        with pytest.raises(VocabError, match="neither"):
            MergeTable([("ab", "c")])
        with pytest.raises(VocabError, match="duplicate"):
            MergeTable([("a", "b"), ("a", "b")])

    def test_load_merges(self, tmp_path):
        p = tmp_path / "merges.txt"
        p.write_text("#version: 0.2\na b\nab c\n")
        assert load_merges(p).merges == (("a", "b"), ("ab", "c"))

    def test_byte_level(self):
        table = bytes_to_unicode()
        assert len(set(table.values())) == 256
        space = table[ord(" ")]
        assert space == "Ġ"
        v = Vocabulary(BPE, BPE_SPECIALS + ["h", "i", space, "hi", "Ġhi"])
        merges = MergeTable([("h", "i"), (space, "hi")], byte_level=True)
        assert bpe_tokenize("hi hi", v, merges).tokens == ["hi", "Ġhi"]

    @pytest.mark.parametrize("seed", range(5))
    def test_exhaustive_against_simulator(self, seed):
        rng = random.Random(seed)
        merges = random_merge_table(rng, "abc", 8)
        ranks = MergeTable(merges).ranks
        for n in range(1, 7):
            for word in itertools.product("abc", repeat=n):
                assert bpe_word(list(word), ranks) == brute_force_bpe(word, merges), (merges, word)


class TestOverlap:
    def corpus(self, *texts):
        return Dataset([Tweet("T", str(i), t, 0) for i, t in enumerate(texts)])

    def test_half(self):
        rep = vocab_overlap(self.corpus("a b c d"), wp_vocab("a", "c"))
        assert (rep.corpus_unique_tokens, rep.overlapping, rep.fraction) == (4, 2, 0.5)

    def test_full(self):
        assert vocab_overlap(self.corpus("a b", "b a"), wp_vocab("a", "b")).fraction == 1.0

    def test_arabic_scale_overlap(self):
        words = [f"w{i}" for i in range(15000)]
        rep = vocab_overlap(self.corpus(" ".join(words)), wp_vocab(*words[:8500]))
        assert rep.corpus_unique_tokens == 15000
        assert rep.overlapping == 8500
        assert round(rep.fraction, 4) == 0.5667
        assert f"{rep.fraction:.0%}" == "57%"  # 8500/15000 rounds to 57%, not 56%

    def test_missing_sorted_by_frequency(self):
        rep = vocab_overlap(self.corpus("x y y z z z a"), wp_vocab("a"))
        assert rep.sample_missing == [("z", 3), ("y", 2), ("x", 1)]

    def test_normalizer_defaults(self):
        toks = Normalizer().tokens("Check https://t.co/x @someone COVID-19!! now")
        assert toks == ["check", "covid", "-", "19", "!", "!", "now"]

    def test_diacritics_flag(self):
        word = "كَتَبَ"
        assert Normalizer().tokens(word) == [word]
        assert Normalizer(strip_diacritics=True).tokens(word) == ["كتب"]

    def test_bpe_space_marker(self):
        v = Vocabulary(BPE, BPE_SPECIALS + ["Ġhello"])
        assert vocab_overlap(self.corpus("hello"), v).overlapping == 1

    def test_monotone_in_vocab(self):
        rng = random.Random(1)
        words = [f"t{rng.randint(0, 50)}" for _ in range(200)]
        corpus = self.corpus(" ".join(words))
        pool = [f"t{i}" for i in range(60)]
        prev = -1
        for n in range(0, 61, 5):
            cur = vocab_overlap(corpus, wp_vocab(*pool[:n])).overlapping
            assert cur >= prev
            prev = cur


def test_text_encoder_lowercase():
    enc = TextEncoder(wp_vocab("hello"), lowercase=True)
    assert enc.encode("HELLO").tokens == ["hello"]
    assert enc.encode("HELLO").source_text == "HELLO"
