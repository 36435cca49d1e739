"""Vocabulary modeling choices and vocabulary statistics.

``apply_prep`` turns a lexer token stream into the word sequence a language
model sees, according to a :class:`PrepConfig`. ``build_vocabulary`` and
``vocab_report`` then measure vocabulary size, corpus size, out-of-vocabulary
rates at several cutoffs and the word frequency distribution.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import OvlmError
from .lexer import Category, Token, TokenStream, escape, unescape

NON_ENGLISH = "<non-en>"
COMMENT_PLACEHOLDER = "<comment>"
STRING_PLACEHOLDER = "<string>"
UNDERSCORE = "<_>"
UPPER = "<Upper>"
ALLCAPS = "<UPPER>"
MARKERS = frozenset({UNDERSCORE, UPPER, ALLCAPS})

STRING_TRUNCATE_LEN = 15

DEFAULT_CUTOFFS = (200_000, 100_000, 75_000, 50_000, 25_000)
FREQ_BUCKETS = (
    ("1000+", 1000, None),
    ("101-999", 101, 999),
    ("11-100", 11, 100),
    ("2-10", 2, 10),
    ("1", 1, 1),
)


class CommentHandling(enum.Enum):
    KEEP = "keep"
    PLACEHOLDER = "placeholder"
    REMOVE = "remove"


class StringHandling(enum.Enum):
    KEEP = "keep"
    PLACEHOLDER = "placeholder"
    KEEP_TRUNCATED_15 = "truncate15"


@dataclass(frozen=True)
class PrepConfig:
    """Vocabulary modeling choices.

    The defaults keep everything and split nothing, so the prepared words
    concatenate back to the source text.
    """

    non_english_filter: bool = False
    keep_whitespace: bool = True
    comment_handling: CommentHandling = CommentHandling.KEEP
    string_handling: StringHandling = StringHandling.KEEP
    convention_split: bool = False
    case_markers: bool = False
    digit_split: bool = False

    def __post_init__(self) -> None:
        if self.case_markers and not self.convention_split:
            raise OvlmError("bad-config", "case_markers requires convention_split")

    @classmethod
    def lm_default(cls) -> "PrepConfig":
        """Preprocessing used for language model corpora."""
        return cls(
            non_english_filter=True,
            keep_whitespace=False,
            comment_handling=CommentHandling.REMOVE,
            string_handling=StringHandling.KEEP_TRUNCATED_15,
        )

    def to_dict(self) -> dict[str, str]:
        return {
            "non_english_filter": str(int(self.non_english_filter)),
            "keep_whitespace": str(int(self.keep_whitespace)),
            "comment_handling": self.comment_handling.value,
            "string_handling": self.string_handling.value,
            "convention_split": str(int(self.convention_split)),
            "case_markers": str(int(self.case_markers)),
            "digit_split": str(int(self.digit_split)),
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "PrepConfig":
        return cls(
            non_english_filter=d["non_english_filter"] == "1",
            keep_whitespace=d["keep_whitespace"] == "1",
            comment_handling=CommentHandling(d["comment_handling"]),
            string_handling=StringHandling(d["string_handling"]),
            convention_split=d["convention_split"] == "1",
            case_markers=d["case_markers"] == "1",
            digit_split=d["digit_split"] == "1",
        )


@dataclass(frozen=True)
class PreparedToken:
    text: str
    category: Category


# --- splitting ------------------------------------------------------------

_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_DIGITS = re.compile(r"[0-9]|[^0-9]+")
_IDENT_LIKE = re.compile(r"[A-Za-z0-9_$]+")


def _case_encode(sub: str) -> list[str]:
    low = sub.lower()
    if low == sub:
        return [sub]
    if len(sub) >= 2 and low.upper() == sub:
        return [ALLCAPS, low]
    if low[:1].upper() + low[1:] == sub:
        return [UPPER, low]
    return [sub]


def _split(text: str, convention: bool, case_markers: bool, digits: bool) -> list[str]:
    if convention:
        pieces = []
        for part in re.split(r"(_)", text):
            if part == "_":
                pieces.append(UNDERSCORE)
            elif part:
                pieces.extend(p for p in _CAMEL.split(part) if p)
    else:
        pieces = [text]
    if digits:
        pieces = [d for p in pieces for d in ([p] if p in MARKERS else _DIGITS.findall(p))]
    if case_markers:
        pieces = [c for p in pieces for c in ([p] if p in MARKERS else _case_encode(p))]
    return pieces


def split_convention(token_text: str, case_markers: bool = False,
                     digit_split: bool = False) -> list[str]:
    """Split a word at underscores and camelCase boundaries.

    Underscores become ``<_>``. With ``case_markers`` every capitalized
    subtoken is lowercased and preceded by ``<Upper>`` (or ``<UPPER>`` when it
    is all caps and at least two characters long). With ``digit_split``
    every digit is its own subtoken.

    >>> split_convention("HTTPServer_v2", case_markers=True)
    ['<UPPER>', 'http', '<Upper>', 'server', '<_>', 'v2']
    """
    return _split(token_text, True, case_markers, digit_split)


def desplit(subtokens: Sequence[str]) -> str:
    """Inverse of :func:`split_convention`."""
    out = []
    i = 0
    n = len(subtokens)
    while i < n:
        s = subtokens[i]
        if s == UNDERSCORE:
            out.append("_")
        elif s in (UPPER, ALLCAPS):
            if i + 1 >= n or subtokens[i + 1] in MARKERS:
                raise OvlmError("malformed-split", f"{s} at position {i} has no word")
            word = subtokens[i + 1]
            if word != word.lower():
                raise OvlmError("malformed-split", f"{s} followed by non-lowercase {word!r}")
            out.append(word.upper() if s == ALLCAPS else word[:1].upper() + word[1:])
            i += 1
        else:
            out.append(s)
        i += 1
    return "".join(out)


# --- preparation ----------------------------------------------------------


def _string_delims(text: str) -> tuple[str, str]:
    for d in ('"""', "'''", '"', "'"):
        if text.startswith(d):
            close = d if len(text) >= 2 * len(d) and text.endswith(d) else ""
            return d, close
    return "", ""


def _truncate_string(text: str) -> str:
    open_, close = _string_delims(text)
    content_len = len(text) - len(open_) - len(close)
    if open_ and content_len >= STRING_TRUNCATE_LEN:
        return open_ + open_
    return text


def _split_whitespace(text: str, keep_whitespace: bool) -> list[tuple[str, bool]]:
    if keep_whitespace:
        return [(p, p.isspace()) for p in re.split(r"(\s+)", text) if p]
    return [(p, False) for p in text.split()]


def apply_prep_tokens(stream: TokenStream | Iterable[Token], config: PrepConfig) -> list[PreparedToken]:
    """Like :func:`apply_prep` but keeps the lexer category of every word."""
    out: list[PreparedToken] = []
    for tok in stream:
        cat = tok.category
        if cat is Category.WHITESPACE:
            if config.keep_whitespace:
                out.append(PreparedToken(tok.text, cat))
            continue

        # (word, is_whitespace, splittable)
        words: list[tuple[str, bool, bool]]
        if cat is Category.COMMENT:
            if config.comment_handling is CommentHandling.REMOVE:
                continue
            if config.comment_handling is CommentHandling.PLACEHOLDER:
                out.append(PreparedToken(COMMENT_PLACEHOLDER, cat))
                continue
            words = [(w, ws, True) for w, ws in _split_whitespace(tok.text, config.keep_whitespace)]
        elif cat is Category.STRING:
            if config.string_handling is StringHandling.PLACEHOLDER:
                out.append(PreparedToken(STRING_PLACEHOLDER, cat))
                continue
            if config.string_handling is StringHandling.KEEP_TRUNCATED_15:
                words = [(_truncate_string(tok.text), False, False)]
            else:
                words = [(w, ws, True) for w, ws in _split_whitespace(tok.text, config.keep_whitespace)]
        else:
            words = [(tok.text, False, True)]

        for word, is_ws, splittable in words:
            if is_ws:
                out.append(PreparedToken(word, Category.WHITESPACE))
                continue
            if config.non_english_filter and not word.isascii():
                out.append(PreparedToken(NON_ENGLISH, cat))
                continue
            convention = config.convention_split and splittable and _IDENT_LIKE.fullmatch(word) is not None
            digits = config.digit_split and splittable
            if convention or digits:
                out.extend(PreparedToken(p, cat) for p in
                           _split(word, convention, config.case_markers and convention, digits))
            else:
                out.append(PreparedToken(word, cat))
    return out


def apply_prep(stream: TokenStream | Iterable[Token], config: PrepConfig) -> list[str]:
    """Apply the vocabulary modeling choices in ``config`` to a token stream."""
    return [p.text for p in apply_prep_tokens(stream, config)]


# --- vocabulary -----------------------------------------------------------


@dataclass
class Vocabulary:
    entries: Counter = field(default_factory=Counter)

    @property
    def total_tokens(self) -> int:
        return sum(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def update(self, words: Iterable[str]) -> None:
        self.entries.update(words)

    def merge(self, other: "Vocabulary") -> "Vocabulary":
        return Vocabulary(self.entries + other.entries)

    def ranked(self) -> list[tuple[str, int]]:
        """Entries by count descending, ties lexicographic ascending."""
        return sorted(self.entries.items(), key=lambda kv: (-kv[1], kv[0]))

    def truncated(self, size: int) -> set[str]:
        return {w for w, _ in self.ranked()[:size]}

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for word, count in self.ranked():
                f.write(f"{escape(word)}\t{count}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        entries: Counter = Counter()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                word, _, count = line.rpartition("\t")
                entries[unescape(word)] = int(count)
        return cls(entries)


def build_vocabulary(prepared_corpus: Iterable[Iterable[str]]) -> Vocabulary:
    vocab = Vocabulary()
    for words in prepared_corpus:
        vocab.update(words)
    return vocab


@dataclass
class VocabReport:
    vocab_size: int
    corpus_size: int
    oov_rates: dict[str, float]
    freq_buckets: dict[str, float]

    def to_text(self) -> str:
        lines = [f"vocab_size={self.vocab_size}", f"corpus_size={self.corpus_size}"]
        lines += [f"oov_{k}={v:.4f}" for k, v in self.oov_rates.items()]
        lines += [f"freq_{k}={v:.4f}" for k, v in self.freq_buckets.items()]
        return "\n".join(lines) + "\n"


def frequency_buckets(vocab: Vocabulary) -> dict[str, float]:
    n = len(vocab)
    counts = dict.fromkeys((name for name, _, _ in FREQ_BUCKETS), 0)
    for c in vocab.entries.values():
        for name, lo, hi in FREQ_BUCKETS:
            if c >= lo and (hi is None or c <= hi):
                counts[name] += 1
                break
    return {k: (100.0 * v / n if n else 0.0) for k, v in counts.items()}


def vocab_report(train_vocab: Vocabulary, test_corpus: Iterable[str],
                 cutoffs: Sequence[int] = DEFAULT_CUTOFFS) -> VocabReport:
    """OOV of the distinct test words against the (truncated) training vocabulary."""
    test_words = set(test_corpus)
    if not test_words:
        raise OvlmError("empty-test", "test corpus has no words")
    if any(c <= 0 for c in cutoffs):
        raise OvlmError("bad-cutoff", "cutoffs must be positive")

    ranked = [w for w, _ in train_vocab.ranked()]
    oov = {"full": 100.0 * len(test_words - train_vocab.entries.keys()) / len(test_words)}
    for c in sorted(cutoffs, reverse=True):
        kept = set(ranked[:c])
        oov[str(c)] = 100.0 * len(test_words - kept) / len(test_words)
    return VocabReport(
        vocab_size=len(train_vocab),
        corpus_size=train_vocab.total_tokens,
        oov_rates=oov,
        freq_buckets=frequency_buckets(train_vocab),
    )
