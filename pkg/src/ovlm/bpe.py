"""Byte-pair encoding over token strings.

Every token starts as its characters followed by a separate ``</t>`` symbol.
Merges never cross token boundaries, and ``</t>`` can merge with the unit
before it, so ``public`` may end up as the single unit ``public</t>``.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import OvlmError
from .lexer import escape, unescape

END = "</t>"
UNK_CHAR = "<unkchar>"
_END_RANK = 0x110000  # sorts after every code point

Pair = tuple[str, str]


def symbol_key(symbol: str) -> tuple[int, ...]:
    """Ordering key for symbols: code points, with ``</t>`` after every character."""
    if symbol.endswith(END):
        return tuple(map(ord, symbol[: -len(END)])) + (_END_RANK,)
    return tuple(map(ord, symbol))


def pair_key(pair: Pair) -> tuple[tuple[int, ...], tuple[int, ...]]:
    return symbol_key(pair[0]), symbol_key(pair[1])


@dataclass
class BpeModel:
    merges: list[Pair]
    initial_symbols: frozenset[str]
    _ranks: dict[Pair, int] = field(init=False, repr=False, compare=False)
    _cache: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.merges = [tuple(m) for m in self.merges]
        self.initial_symbols = frozenset(self.initial_symbols) | {END}
        self._ranks = {}
        for i, m in enumerate(self.merges):
            self._ranks.setdefault(m, i)
        self._cache = {}

    @property
    def num_merges(self) -> int:
        return len(self.merges)

    @property
    def alphabet(self) -> frozenset[str]:
        return self.initial_symbols - {END}

    def subword_vocabulary(self) -> list[str]:
        """Initial symbols (sorted) followed by merge products in merge order."""
        units = sorted(self.initial_symbols, key=symbol_key)
        seen = set(units)
        for left, right in self.merges:
            u = left + right
            if u not in seen:
                seen.add(u)
                units.append(u)
        return units

    # --- serialization ---------------------------------------------------

    def dumps(self) -> str:
        chars = "".join(sorted(self.alphabet, key=symbol_key))
        lines = [f"#bpe v1 merges={self.num_merges} alphabet={escape(chars, space=True)}"]
        lines += [f"{escape(l, space=True)} {escape(r, space=True)}" for l, r in self.merges]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "BpeModel":
        lines = text.split("\n")
        header = lines[0].split(" ") if lines else []
        if len(header) < 3 or header[0] != "#bpe" or header[1] != "v1":
            raise OvlmError("corrupt", "missing '#bpe v1' header")
        fields = dict(h.split("=", 1) for h in header[2:] if "=" in h)
        try:
            n = int(fields["merges"])
        except (KeyError, ValueError):
            raise OvlmError("corrupt", "bad merge count in header") from None
        merges = []
        for line in lines[1:]:
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise OvlmError("corrupt", f"bad merge line {line!r}")
            merges.append((unescape(parts[0]), unescape(parts[1])))
        if len(merges) != n:
            raise OvlmError("corrupt", f"header says {n} merges, found {len(merges)}")
        alphabet = set(unescape(fields.get("alphabet", "")))
        for left, right in merges:
            for s in (left, right):
                if len(s) == 1:
                    alphabet.add(s)
        return cls(merges, frozenset(alphabet))

    @classmethod
    def load(cls, path: str | Path) -> "BpeModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


# --- learning -------------------------------------------------------------


def _pairs(symbols: Sequence[str]) -> Iterable[Pair]:
    return zip(symbols, symbols[1:])


def _merge_word(symbols: Sequence[str], pair: Pair) -> list[str]:
    left, right = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def learn_bpe(corpus: Iterable[str], num_merges: int) -> BpeModel:
    """Learn up to ``num_merges`` merges from token occurrences.

    The most frequent adjacent pair wins; equal counts go to the smallest pair
    under :func:`pair_key`. Learning stops early once no pair occurs twice.
    Pair counts are updated incrementally: only words containing the merged
    pair are re-counted.
    """
    if num_merges < 0:
        raise OvlmError("bad-merges", "num_merges must be >= 0")
    freqs = Counter(corpus)
    if not freqs:
        raise OvlmError("empty-corpus", "BPE training corpus is empty")

    words = [list(w) + [END] for w in freqs]
    counts = list(freqs.values())
    alphabet = frozenset(ch for w in freqs for ch in w)

    stats: Counter = Counter()
    where: dict[Pair, set[int]] = defaultdict(set)
    for idx, (sym, c) in enumerate(zip(words, counts)):
        for p in _pairs(sym):
            stats[p] += c
            where[p].add(idx)

    heap = [(-c, pair_key(p), p) for p, c in stats.items()]
    heapq.heapify(heap)

    merges: list[Pair] = []
    while len(merges) < num_merges and heap:
        neg, _, pair = heapq.heappop(heap)
        if stats.get(pair, 0) != -neg:
            continue  # stale entry
        if -neg < 2:
            break
        merges.append(pair)
        touched: Counter = Counter()
        for idx in where.pop(pair, ()):
            sym = words[idx]
            if pair not in set(_pairs(sym)):
                continue
            c = counts[idx]
            for p in _pairs(sym):
                touched[p] -= c
            new = _merge_word(sym, pair)
            words[idx] = new
            for p in _pairs(new):
                touched[p] += c
                where[p].add(idx)
        for p, delta in touched.items():
            if delta == 0:
                continue
            stats[p] += delta
            if stats[p] <= 0:
                del stats[p]
            else:
                heapq.heappush(heap, (-stats[p], pair_key(p), p))
        stats.pop(pair, None)
    return BpeModel(merges, alphabet)


# --- application ----------------------------------------------------------


@dataclass
class SegmentStats:
    """Counts unknown characters replaced by ``<unkchar>``."""

    unk_chars: int = 0


def _apply_merges(symbols: list[str], ranks: dict[Pair, int]) -> list[str]:
    # Applying merges in recorded order: the next merge with any effect is the
    # lowest-ranked pair present whose rank is above the last one applied.
    last = -1
    while len(symbols) > 1:
        best = None
        for p in _pairs(symbols):
            r = ranks.get(p)
            if r is not None and r > last and (best is None or r < best[0]):
                best = (r, p)
        if best is None:
            break
        last = best[0]
        symbols = _merge_word(symbols, best[1])
    return symbols


def segment(token_text: str, model: BpeModel, stats: SegmentStats | None = None) -> list[str]:
    """Segment one token into subword units ending with a ``</t>`` unit."""
    cached = model._cache.get(token_text)
    if cached is not None:
        if stats is not None:
            stats.unk_chars += cached.count(UNK_CHAR)
        return list(cached)

    alphabet = model.initial_symbols
    units: list[str] = []
    chunk: list[str] = []
    unk = 0
    for ch in token_text:
        if ch in alphabet:
            chunk.append(ch)
        else:
            if chunk:
                units.extend(_apply_merges(chunk, model._ranks))
                chunk = []
            units.append(UNK_CHAR)
            unk += 1
    chunk.append(END)
    units.extend(_apply_merges(chunk, model._ranks))
    if len(model._cache) < 1_000_000:
        model._cache[token_text] = tuple(units)
    if stats is not None:
        stats.unk_chars += unk
    return units


def segment_stream(tokens: Iterable[str], model: BpeModel,
                   stats: SegmentStats | None = None) -> list[str]:
    out: list[str] = []
    for t in tokens:
        out.extend(segment(t, model, stats))
    return out


def desegment(units: Iterable[str]) -> list[str]:
    """Group units back into tokens at every unit ending in ``</t>``."""
    tokens = []
    pending: list[str] = []
    for u in units:
        if u.endswith(END):
            pending.append(u[: -len(END)])
            tokens.append("".join(pending))
            pending = []
        else:
            pending.append(u)
    if pending:
        raise OvlmError("incomplete-token", f"{len(pending)} trailing units without {END}")
    return tokens
