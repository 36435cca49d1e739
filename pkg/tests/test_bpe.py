import random

import pytest
from hypothesis import given, strategies as st

from ovlm.bpe import (END, UNK_CHAR, BpeModel, SegmentStats, desegment, learn_bpe, segment,
                      segment_stream)
from ovlm.errors import OvlmError

from oracles import naive_learn_bpe, naive_segment


def model(merges, alphabet="abcdefghijklmnopqrstuvwxyz"):
    return BpeModel(list(merges), frozenset(alphabet))


def test_tie_break_lexicographic():
    assert learn_bpe(["low", "low", "lower"], 1).merges == [("l", "o")]


def test_end_marker_pair_after_characters():
    assert learn_bpe(["aa", "aa"], 2).merges == [("a", "a"), ("aa", END)]


def test_zero_merges():
    m = learn_bpe(["hello", "world"], 0)
    assert m.merges == []
    assert segment("hello", m) == ["h", "e", "l", "l", "o", END]


def test_early_stop_without_repeated_pairs():
    assert learn_bpe(["abc"], 10).merges == []


def test_bad_inputs():
    with pytest.raises(OvlmError):
        learn_bpe(["a"], -1)
    with pytest.raises(OvlmError):
        learn_bpe([], 3)


def test_segment_examples():
    assert segment("low", model([("l", "o")])) == ["lo", "w", END]
    assert segment("x", model([])) == ["x", END]
    learned = learn_bpe(["se", "se", "set", "set", "r"], 2)
    assert learned.merges[:2] == [("s", "e"), ("se", "t")]
    assert segment("setter", learned) == ["set", "t", "e", "r", END]


def test_segment_stream_examples():
    assert segment_stream(["a", "b"], model([])) == ["a", END, "b", END]
    assert segment_stream([], model([])) == []
    assert segment_stream(["low", "low"], model([("l", "o"), ("lo", "w")])) == ["low", END, "low", END]


def test_desegment_examples():
    assert desegment(["set", "ter</t>"]) == ["setter"]
    assert desegment(["a", END]) == ["a"]
    assert desegment(["Attribute", "Con", "text</t>"]) == ["AttributeContext"]


def test_desegment_incomplete():
    with pytest.raises(OvlmError) as e:
        desegment(["a", "b"])
    assert e.value.code == "incomplete-token"


def test_end_marker_merges_into_unit():
    m = learn_bpe(["public"] * 5, 10)
    assert segment("public", m) == ["public</t>"]


def test_unknown_characters():
    m = learn_bpe(["abc", "abd"], 3)
    stats = SegmentStats()
    assert UNK_CHAR not in segment("cab", m, stats)
    units = segment("aλb", m, stats)
    assert units.count(UNK_CHAR) == 1 and stats.unk_chars == 1


def test_file_format(tmp_path):
    m = learn_bpe(["a b", "a b", "x\\y", "x\\y", "tab\tx", "tab\tx"], 20)
    m.save(tmp_path / "m.bpe")
    text = (tmp_path / "m.bpe").read_text(encoding="utf-8")
    first, *rest = text.splitlines()
    assert first.startswith(f"#bpe v1 merges={m.num_merges}")
    assert all(len(line.split(" ")) == 2 for line in rest)
    again = BpeModel.load(tmp_path / "m.bpe")
    assert again.merges == m.merges and again.initial_symbols == m.initial_symbols


@pytest.mark.parametrize("text", ["", "garbage", "#bpe v1 merges=2\na b\n", "#bpe v1 merges=1\na b c\n"])
def test_corrupt_files(text):
    with pytest.raises(OvlmError) as e:
        BpeModel.loads(text)
    assert e.value.code == "corrupt"


def test_merge_operands_are_known_symbols():
    m = learn_bpe("the quick brown fox jumps over the lazy dog the end".split() * 3, 40)
    known = set(m.initial_symbols)
    for left, right in m.merges:
        assert left in known and right in known
        known.add(left + right)
    assert len(m.subword_vocabulary()) <= len(m.initial_symbols) + m.num_merges


# --- properties ---------------------------------------------------------------

small_words = st.lists(st.text(alphabet="abcde", min_size=1, max_size=6), min_size=1, max_size=40)


@given(small_words, st.integers(0, 30))
def test_learner_matches_naive_oracle(corpus, n):
    assert learn_bpe(corpus, n).merges == naive_learn_bpe(corpus, n)


def tokens_over(corpus, data, max_size):
    chars = sorted(set("".join(corpus)))
    return data.draw(st.lists(st.text(alphabet=chars, min_size=1, max_size=8), max_size=max_size))


@given(small_words, st.integers(0, 20), st.data())
def test_segment_matches_sequential_oracle(corpus, n, data):
    m = learn_bpe(corpus, n)
    for t in tokens_over(corpus, data, 10):
        assert segment(t, m) == naive_segment(t, m.merges)


@given(small_words, st.integers(0, 20), st.data())
def test_roundtrip_and_vocab_bound(corpus, n, data):
    m = learn_bpe(corpus, n)
    tokens = tokens_over(corpus, data, 20)
    units = segment_stream(tokens, m)
    assert desegment(units) == tokens
    assert UNK_CHAR not in units
    assert all(u and (END not in u or u.endswith(END)) for u in units)
    assert len(set(units)) <= len(m.initial_symbols) + m.num_merges


@given(small_words, st.integers(0, 15))
def test_corpus_length_monotone_in_merges(corpus, n):
    shorter = learn_bpe(corpus, n + 1)
    longer = learn_bpe(corpus, n)
    assert len(segment_stream(corpus, shorter)) <= len(segment_stream(corpus, longer))


def test_random_corpora_against_oracle():
    rng = random.Random(7)
    for _ in range(10):
        alphabet = "".join(rng.sample("abcdefghijklmnop_XYZ01", rng.randint(3, 12)))
        words = ["".join(rng.choices(alphabet, k=rng.randint(1, 9))) for _ in range(rng.randint(20, 300))]
        n = rng.randint(0, 60)
        assert learn_bpe(words, n).merges == naive_learn_bpe(words, n)
