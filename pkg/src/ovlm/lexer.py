"""Lossless lexers for Java-like, C-like and Python-like source.

The grammars are deliberately small: they only need to tell identifiers,
keywords, literals, comments, operators, punctuation and whitespace apart.
Every character of the input ends up in exactly one token, so joining the
token texts gives back the source.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import OvlmError


class Category(enum.Enum):
    IDENTIFIER = "Identifier"
    KEYWORD = "Keyword"
    NUMBER = "NumberLiteral"
    STRING = "StringLiteral"
    COMMENT = "Comment"
    OPERATOR = "Operator"
    PUNCTUATION = "Punctuation"
    WHITESPACE = "Whitespace"
    OTHER = "Other"


class Language(enum.Enum):
    JAVA = "JavaLike"
    C = "CLike"
    PYTHON = "PythonLike"


@dataclass(frozen=True)
class Token:
    text: str
    category: Category
    line: int = 1
    col: int = 0


@dataclass
class TokenStream:
    tokens: list[Token]
    language: Language
    source_path: str = ""

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return "".join(t.text for t in self.tokens)


@dataclass(frozen=True)
class LanguageProfile:
    language: Language
    keyword_set: frozenset[str]
    # (open, close); close=None means the comment runs to end of line
    comment_delimiters: tuple[tuple[str, str | None], ...]
    string_delimiters: tuple[str, ...]
    operators: tuple[str, ...]
    punctuation: frozenset[str]
    identifier_pattern: str = r"[^\W\d]\w*"
    _regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_regex", _compile(self))


WHITESPACE_CHARS = " \t\n\r\f\v"

_NUMBER = (
    r"0[xX][0-9a-fA-F_]*[lLuU]*"
    r"|(?:\d[\d_]*(?:\.(?![.])[\d_]*)?|\.\d[\d_]*)(?:[eE][+-]?\d+)?[lLfFdDuUjJ]*"
)


def _compile(profile: LanguageProfile) -> re.Pattern:
    parts = [f"(?P<ws>[{re.escape(WHITESPACE_CHARS)}]+)"]

    comments = []
    for open_, close in profile.comment_delimiters:
        o = re.escape(open_)
        if close is None:
            comments.append(f"{o}[^\\n]*")
        else:
            c = re.escape(close)
            comments.append(f"{o}(?:[\\s\\S]*?{c}|[\\s\\S]*\\Z)")
    if comments:
        parts.append(f"(?P<comment>{'|'.join(comments)})")

    strings = []
    for d in sorted(profile.string_delimiters, key=len, reverse=True):
        e = re.escape(d)
        body = f"[^\\\\{e}]" if len(d) == 1 else f"(?!{e})[^\\\\]"
        strings.append(f"{e}(?:\\\\[\\s\\S]?|{body})*(?:{e}|\\Z)")
    if strings:
        parts.append(f"(?P<string>{'|'.join(strings)})")

    parts.append(f"(?P<number>{_NUMBER})")
    parts.append(f"(?P<ident>{profile.identifier_pattern})")
    ops = sorted(set(profile.operators) | set(profile.punctuation), key=len, reverse=True)
    parts.append(f"(?P<op>{'|'.join(re.escape(o) for o in ops)})")
    parts.append(r"(?P<other>[\s\S])")
    return re.compile("|".join(parts))


JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized this
    throw throws transient try void volatile while var true false null""".split()
)

C_KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool _Complex _Imaginary bool size_t int8_t int16_t int32_t int64_t
    uint8_t uint16_t uint32_t uint64_t NULL true false""".split()
)

PYTHON_KEYWORDS = frozenset(
    """False None True and as assert async await break class continue def del
    elif else except finally for from global if import in is lambda nonlocal
    not or pass raise return try while with yield
    int float str bool bytes complex""".split()
)

# Primitive type names are lexed as keywords so that identifier-only metrics
# exclude them.
PRIMITIVE_TYPES = {
    Language.JAVA: frozenset("boolean byte char short int long float double void".split()),
    Language.C: frozenset("char short int long float double void signed unsigned _Bool bool size_t".split()),
    Language.PYTHON: frozenset("int float str bool bytes complex".split()),
}

_C_OPERATORS = (
    ">>=", "<<=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "+", "-", "*", "/", "%", "=", "<", ">", "!", "~", "&", "|", "^", "?", ":",
)

JAVA = LanguageProfile(
    language=Language.JAVA,
    keyword_set=JAVA_KEYWORDS,
    comment_delimiters=(("//", None), ("/*", "*/")),
    string_delimiters=('"', "'"),
    operators=_C_OPERATORS + (">>>=", ">>>", "::", "@"),
    punctuation=frozenset("(){}[];,."),
    identifier_pattern=r"(?:[^\W\d]|\$)[\w$]*",
)

C = LanguageProfile(
    language=Language.C,
    keyword_set=C_KEYWORDS,
    comment_delimiters=(("//", None), ("/*", "*/")),
    string_delimiters=('"', "'"),
    operators=_C_OPERATORS + ("#", "##"),
    punctuation=frozenset("(){}[];,."),
)

PYTHON = LanguageProfile(
    language=Language.PYTHON,
    keyword_set=PYTHON_KEYWORDS,
    comment_delimiters=(("#", None),),
    string_delimiters=('"""', "'''", '"', "'"),
    operators=(
        "**=", "//=", ">>=", "<<=", "->", ":=", "**", "//", "<<", ">>", "<=", ">=",
        "==", "!=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=",
        "+", "-", "*", "/", "%", "=", "<", ">", "~", "&", "|", "^", "@",
    ),
    punctuation=frozenset("(){}[];,.:"),
)

PROFILES = {Language.JAVA: JAVA, Language.C: C, Language.PYTHON: PYTHON}

_EXTENSIONS = {
    ".java": Language.JAVA,
    ".c": Language.C,
    ".h": Language.C,
    ".py": Language.PYTHON,
}

_LANGUAGE_ALIASES = {
    "java": Language.JAVA, "javalike": Language.JAVA,
    "c": Language.C, "clike": Language.C,
    "python": Language.PYTHON, "py": Language.PYTHON, "pythonlike": Language.PYTHON,
}


def parse_language(name: str) -> Language:
    try:
        return _LANGUAGE_ALIASES[name.strip().lower()]
    except KeyError:
        raise OvlmError("bad-language", name) from None


def language_for_path(path: str | Path) -> Language | None:
    return _EXTENSIONS.get(Path(path).suffix.lower())


def source_extensions(language: Language) -> tuple[str, ...]:
    return tuple(ext for ext, lang in _EXTENSIONS.items() if lang is language)


def lex(source_text: str | bytes, profile: LanguageProfile | Language = JAVA,
        source_path: str = "") -> TokenStream:
    """Split ``source_text`` into a lossless, categorized token stream.

    Unterminated strings and block comments swallow the rest of the input as
    a single token of the started category. Bytes input must be valid UTF-8.
    """
    if isinstance(profile, Language):
        profile = PROFILES[profile]
    if isinstance(source_text, (bytes, bytearray)):
        try:
            source_text = bytes(source_text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise OvlmError("encoding", str(exc)) from None

    tokens = []
    line, col = 1, 0
    keywords = profile.keyword_set
    punct = profile.punctuation
    for m in profile._regex.finditer(source_text):
        text = m.group()
        kind = m.lastgroup
        if kind == "ws":
            cat = Category.WHITESPACE
        elif kind == "comment":
            cat = Category.COMMENT
        elif kind == "string":
            cat = Category.STRING
        elif kind == "number":
            cat = Category.NUMBER
        elif kind == "ident":
            cat = Category.KEYWORD if text in keywords else Category.IDENTIFIER
        elif kind == "op":
            cat = Category.PUNCTUATION if text in punct else Category.OPERATOR
        else:
            cat = Category.OTHER
        tokens.append(Token(text, cat, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n") - 1
        else:
            col += len(text)
    return TokenStream(tokens, profile.language, source_path)


def lex_file(path: str | Path, language: Language | None = None) -> TokenStream:
    path = Path(path)
    language = language or language_for_path(path) or Language.JAVA
    return lex(path.read_bytes(), PROFILES[language], str(path))


# --- .toks format ---------------------------------------------------------

_ESCAPES = {"\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "n": "\n", "t": "\t", "r": "\r", "s": " "}


def escape(text: str, space: bool = False) -> str:
    """Escape a token for line-oriented files; ``space`` also escapes ' '."""
    out = text.replace("\\", "\\\\").replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    if space:
        out = out.replace(" ", "\\s")
    return out


def unescape(text: str) -> str:
    if "\\" not in text:
        return text
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt in _UNESCAPES:
                out.append(_UNESCAPES[nxt])
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def format_tokens(tokens: Iterable[Token]) -> str:
    return "".join(f"{t.category.value}\t{escape(t.text)}\n" for t in tokens)


def parse_tokens(lines: Iterable[str]) -> list[Token]:
    """Parse ``.toks`` lines; positions are recomputed from the texts."""
    tokens = []
    line, col = 1, 0
    for raw in lines:
        raw = raw.rstrip("\n")
        if not raw or raw.startswith("@"):
            continue
        cat, _, esc = raw.partition("\t")
        text = unescape(esc)
        try:
            category = Category(cat)
        except ValueError:
            raise OvlmError("corrupt", f"unknown category {cat!r}") from None
        tokens.append(Token(text, category, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n") - 1
        else:
            col += len(text)
    return tokens
