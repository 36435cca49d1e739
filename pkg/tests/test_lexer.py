import pytest
from hypothesis import given, strategies as st

from ovlm.errors import OvlmError
from ovlm.lexer import (C, JAVA, PYTHON, Category, Language, format_tokens, lex, parse_tokens,
                        unescape, escape)

WS = Category.WHITESPACE


def pairs(stream):
    return [(t.text, t.category) for t in stream]


def test_java_method_header():
    src = "public AttributeContext(Method setter, Object value) {"
    assert pairs(lex(src, JAVA)) == [
        ("public", Category.KEYWORD), (" ", WS), ("AttributeContext", Category.IDENTIFIER),
        ("(", Category.PUNCTUATION), ("Method", Category.IDENTIFIER), (" ", WS),
        ("setter", Category.IDENTIFIER), (",", Category.PUNCTUATION), (" ", WS),
        ("Object", Category.IDENTIFIER), (" ", WS), ("value", Category.IDENTIFIER),
        (")", Category.PUNCTUATION), (" ", WS), ("{", Category.PUNCTUATION),
    ]


def test_python_comment_line():
    assert pairs(lex("x = 42 # note", PYTHON)) == [
        ("x", Category.IDENTIFIER), (" ", WS), ("=", Category.OPERATOR), (" ", WS),
        ("42", Category.NUMBER), (" ", WS), ("# note", Category.COMMENT),
    ]


def test_empty_input():
    assert len(lex("", JAVA)) == 0


def test_positions():
    toks = list(lex("int a;\n  b = 1;", JAVA))
    b = next(t for t in toks if t.text == "b")
    assert (b.line, b.col) == (2, 2)


@pytest.mark.parametrize("src,cat", [
    ('"abc \\" def"', Category.STRING),
    ("'x'", Category.STRING),
    ("/* a\n b */", Category.COMMENT),
    ("// line", Category.COMMENT),
    ("0x1F", Category.NUMBER),
    ("3.14e-2", Category.NUMBER),
])
def test_single_token_literals(src, cat):
    assert pairs(lex(src, JAVA)) == [(src, cat)]


def test_unterminated_string_swallows_rest():
    assert pairs(lex('a = "never closed\n', JAVA))[-1] == ('"never closed\n', Category.STRING)


def test_unterminated_block_comment():
    assert pairs(lex("x /* open", C))[-1] == ("/* open", Category.COMMENT)


def test_block_comments_do_not_nest():
    toks = pairs(lex("/* a /* b */ c */", JAVA))
    assert toks[0] == ("/* a /* b */", Category.COMMENT)


def test_primitive_types_are_keywords():
    assert lex("int", JAVA).tokens[0].category is Category.KEYWORD
    assert lex("double", C).tokens[0].category is Category.KEYWORD


def test_invalid_utf8():
    with pytest.raises(OvlmError) as e:
        lex(b"a \xff b", JAVA)
    assert e.value.code == "encoding"


def test_maximal_whitespace_runs():
    toks = pairs(lex("a \t\n  b", JAVA))
    assert toks == [("a", Category.IDENTIFIER), (" \t\n  ", WS), ("b", Category.IDENTIFIER)]


def test_toks_roundtrip():
    stream = lex('s = "a\\tb"\n\t# c\\d\n', PYTHON)
    text = format_tokens(stream)
    assert all(line.count("\t") == 1 for line in text.splitlines())
    assert pairs(parse_tokens(text.splitlines())) == pairs(stream)


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=200))
def test_escape_roundtrip(s):
    assert unescape(escape(s)) == s
    assert unescape(escape(s, space=True)) == s
    assert "\n" not in escape(s) and "\t" not in escape(s)


source_chars = st.sampled_from(list("abcXYZ_09 \t\n\"'/*#+-=<>!&|(){}[];,.:\\@$") + ["é", "λ"])


@given(st.lists(source_chars, max_size=120).map("".join), st.sampled_from([JAVA, C, PYTHON]))
def test_lossless_and_whitespace_category(src, profile):
    stream = lex(src, profile)
    assert stream.text() == src
    for t in stream:
        assert t.text
        assert (t.category is WS) == (t.text.strip(" \t\n\r") == "")


@given(st.lists(source_chars, max_size=80).map("".join))
def test_deterministic(src):
    assert pairs(lex(src, JAVA)) == pairs(lex(src, JAVA))


@pytest.mark.parametrize("profile", [JAVA, C, PYTHON])
def test_keywords_never_identifiers(profile):
    assert profile.keyword_set
    for kw in profile.keyword_set:
        toks = list(lex(kw, profile))
        assert len(toks) == 1 and toks[0].category is Category.KEYWORD


def test_language_enum_values():
    assert {l.value for l in Language} == {"JavaLike", "CLike", "PythonLike"}
