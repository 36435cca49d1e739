import pytest
from hypothesis import given, strategies as st

from ovlm.errors import OvlmError
from ovlm.lexer import JAVA, Category, lex
from ovlm.vocab import (CommentHandling, PrepConfig, StringHandling, Vocabulary, apply_prep,
                        apply_prep_tokens, build_vocabulary, desplit, frequency_buckets, split_convention,
                        vocab_report)

from oracles import count_report


def prep(src, **kw):
    return apply_prep(lex(src, JAVA), PrepConfig(**kw))


# --- splitting --------------------------------------------------------------


@pytest.mark.parametrize("token,kw,expected", [
    ("Value", {"case_markers": True}, ["<Upper>", "value"]),
    ("VALUE", {"case_markers": True}, ["<UPPER>", "value"]),
    ("1024", {"digit_split": True}, ["1", "0", "2", "4"]),
    ("snake_case", {}, ["snake", "<_>", "case"]),
    ("HTTPServer", {}, ["HTTP", "Server"]),
    ("getX", {"case_markers": True}, ["get", "<Upper>", "x"]),
    ("parseInt2", {"digit_split": True}, ["parse", "Int", "2"]),
])
def test_split_examples(token, kw, expected):
    assert split_convention(token, **kw) == expected


@pytest.mark.parametrize("subtokens,expected", [
    (["<Upper>", "value"], "Value"),
    (["snake", "<_>", "case"], "snake_case"),
    (["<UPPER>", "value"], "VALUE"),
])
def test_desplit_examples(subtokens, expected):
    assert desplit(subtokens) == expected


@pytest.mark.parametrize("bad", [["<Upper>"], ["<UPPER>", "<_>"], ["<Upper>", "Value"]])
def test_desplit_malformed(bad):
    with pytest.raises(OvlmError) as e:
        desplit(bad)
    assert e.value.code == "malformed-split"


@given(st.from_regex(r"[A-Za-z0-9_]+", fullmatch=True), st.booleans(), st.booleans())
def test_split_desplit_roundtrip(token, case_markers, digit_split):
    parts = split_convention(token, case_markers=case_markers, digit_split=digit_split)
    assert all(parts)
    assert desplit(parts) == token


def test_case_markers_need_convention_split():
    with pytest.raises(OvlmError) as e:
        PrepConfig(case_markers=True)
    assert e.value.code == "bad-config"


# --- preparation ------------------------------------------------------------


def test_non_english_placeholder():
    assert prep("café", non_english_filter=True, keep_whitespace=False) == ["<non-en>"]


def test_long_string_truncated_to_empty_literal():
    lit = '"' + "x" * 18 + '"'
    assert len(lit) == 20
    assert prep(lit, string_handling=StringHandling.KEEP_TRUNCATED_15) == ['""']


def test_short_string_kept_whole_when_truncating():
    lit = '"short string"'
    assert prep(lit, string_handling=StringHandling.KEEP_TRUNCATED_15) == [lit]


def test_identity_default():
    src = 'int fooBar = 12; // trailing note\n"a b"'
    words = prep(src)
    assert "".join(words) == src
    assert "value" in prep("value")


def test_whitespace_dropped_and_kept():
    assert prep("a  b", keep_whitespace=False) == ["a", "b"]
    assert prep("a  b") == ["a", "  ", "b"]


def test_comment_handling():
    src = "x; // hi there"
    assert prep(src, keep_whitespace=False, comment_handling=CommentHandling.REMOVE) == ["x", ";"]
    assert prep(src, keep_whitespace=False, comment_handling=CommentHandling.PLACEHOLDER)[-1] == "<comment>"
    assert prep(src, keep_whitespace=False) == ["x", ";", "//", "hi", "there"]


def test_string_placeholder():
    assert prep('f("x")', string_handling=StringHandling.PLACEHOLDER) == ["f", "(", "<string>", ")"]


def test_convention_split_in_stream():
    words = prep("int myVar_name;", keep_whitespace=False, convention_split=True, case_markers=True)
    assert words == ["int", "my", "<Upper>", "var", "<_>", "name", ";"]


def test_lm_default_config():
    cfg = PrepConfig.lm_default()
    assert cfg.non_english_filter and not cfg.keep_whitespace
    assert cfg.comment_handling is CommentHandling.REMOVE
    assert PrepConfig.from_dict(cfg.to_dict()) == cfg


# --- vocabulary and report ----------------------------------------------------


def test_build_vocabulary():
    v = build_vocabulary([["a", "b", "a"]])
    assert dict(v.entries) == {"a": 2, "b": 1} and v.total_tokens == 3
    assert len(build_vocabulary([])) == 0 and build_vocabulary([]).total_tokens == 0
    v2 = build_vocabulary([["x"], ["x", "y"]])
    assert dict(v2.entries) == {"x": 2, "y": 1} and v2.total_tokens == 3


def test_report_examples():
    v = build_vocabulary([["a"] * 5 + ["b"]])
    assert vocab_report(v, ["a", "c"], []).oov_rates["full"] == 50.0
    assert vocab_report(v, ["a", "b"], [1]).oov_rates["1"] == 50.0
    r = vocab_report(build_vocabulary([["a"] * 5]), ["a"], [])
    assert r.oov_rates["full"] == 0.0
    assert r.freq_buckets == {"1000+": 0.0, "101-999": 0.0, "11-100": 0.0, "2-10": 100.0, "1": 0.0}


def test_report_empty_test():
    with pytest.raises(OvlmError) as e:
        vocab_report(build_vocabulary([["a"]]), [], [])
    assert e.value.code == "empty-test"


def test_truncation_ties_lexicographic():
    v = build_vocabulary([["b", "a", "c", "c"]])
    assert v.truncated(2) == {"c", "a"}


def test_vocab_file_roundtrip(tmp_path):
    v = build_vocabulary([["a", "tab\there", "a", "new\nline"]])
    v.dump(tmp_path / "x.vocab")
    lines = (tmp_path / "x.vocab").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "a\t2"
    assert Vocabulary.load(tmp_path / "x.vocab").entries == v.entries


words = st.lists(st.sampled_from([f"w{i}" for i in range(40)]), min_size=1, max_size=300)


@given(words, words, st.lists(st.integers(1, 50), max_size=5))
def test_report_matches_counting_oracle(train, test, cutoffs):
    report = vocab_report(build_vocabulary([train]), test, cutoffs)
    want = count_report(train, test, cutoffs)
    assert report.vocab_size == want["vocab_size"]
    assert report.corpus_size == want["corpus_size"]
    assert report.oov_rates["full"] == pytest.approx(want["oov_full"], abs=1e-9)
    for c in cutoffs:
        assert report.oov_rates[str(c)] == pytest.approx(want[f"oov_{c}"], abs=1e-9)
    for k, v in report.freq_buckets.items():
        assert v == pytest.approx(want[f"freq_{k}"], abs=1e-9)
    assert sum(report.freq_buckets.values()) == pytest.approx(100.0, abs=0.1)
    ordered = [report.oov_rates["full"]] + [report.oov_rates[str(c)] for c in sorted(set(cutoffs), reverse=True)]
    assert all(a <= b + 1e-12 for a, b in zip(ordered, ordered[1:]))


def test_frequency_buckets_boundaries():
    v = Vocabulary()
    for word, n in [("a", 1000), ("b", 999), ("c", 101), ("d", 100), ("e", 11), ("f", 10), ("g", 2), ("h", 1)]:
        v.entries[word] = n
    fb = frequency_buckets(v)
    assert fb == {"1000+": 12.5, "101-999": 25.0, "11-100": 25.0, "2-10": 25.0, "1": 12.5}


def test_categories_preserved_by_prep():
    toks = apply_prep_tokens(lex("int fooBar;", JAVA), PrepConfig(keep_whitespace=False, convention_split=True))
    assert [(t.text, t.category) for t in toks] == [
        ("int", Category.KEYWORD), ("foo", Category.IDENTIFIER), ("Bar", Category.IDENTIFIER),
        (";", Category.PUNCTUATION)]
