"""Complete-token prediction: beam search over subword units, identifier cache."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bpe import END, BpeModel, segment
from .errors import OvlmError
from .nlm import LanguageModel, NlmParams, UnitVocab, adapt, run_sequence, step_batch

__all__ = [
    "IdentifierCache", "adapt", "beam_search", "cache_observe", "history_state",
    "merge_predictions", "predict_top_k", "predict_with_cache", "token_probability",
]

MAX_TOKEN_UNITS = 12
CACHE_WEIGHT = 0.3
HISTORY_LEN = 5

CompletionList = list[tuple[str, float]]


class _BestTokens:
    """At most ``k`` complete tokens, keyed by text, keeping each text's best path."""

    def __init__(self, k: int):
        self.k = k
        self.items: dict[str, float] = {}

    @property
    def full(self) -> bool:
        return len(self.items) >= self.k

    def threshold(self) -> float:
        return min(self.items.values()) if self.full else 0.0

    def offer(self, text: str, prob: float) -> None:
        old = self.items.get(text)
        if old is not None:
            if prob > old:
                self.items[text] = prob
            return
        self.items[text] = prob
        if len(self.items) > self.k:
            worst = min(self.items.items(), key=lambda kv: (kv[1], _Desc(kv[0])))
            del self.items[worst[0]]

    def ranked(self) -> CompletionList:
        return sorted(self.items.items(), key=lambda kv: (-kv[1], kv[0]))


class _Desc(str):
    """String with reversed ordering, so ``min`` picks the largest text."""

    def __lt__(self, other):
        return str.__gt__(self, other)


def beam_search(params: NlmParams, vocab: UnitVocab, root_dist: np.ndarray,
                root_state: np.ndarray, k: int = 10, beam_size: int | None = None,
                max_units: int = MAX_TOKEN_UNITS) -> CompletionList:
    """Top-``k`` complete tokens given the distribution after the history.

    Two queues: ``candidates`` (partial tokens, a max-heap on probability) and
    the ``k`` best complete tokens. Each round pops up to ``beam_size``
    candidates, scores their one-unit expansions in one batched model step,
    and files them as complete tokens (unit ends with ``</t>``) or new
    candidates. The search stops once the best candidate is less likely than
    the k-th best token; candidates reaching ``max_units`` are dropped.
    """
    if k < 1:
        raise OvlmError("bad-k", "k must be >= 1")
    beam_size = beam_size or 5 * k
    units = vocab.units
    end_cols = np.flatnonzero(vocab.is_end)
    open_cols = np.flatnonzero(~vocab.is_end)
    end_text = [units[c][: -len(END)] for c in end_cols]
    best = _BestTokens(k)
    heap: list = []

    def expand(dists, probs, prefixes, states):
        P = probs[:, None] * dists
        Pe = P[:, end_cols]
        thr = best.threshold()
        rows, cols = np.nonzero(Pe >= thr) if thr > 0 else np.nonzero(Pe > 0)
        vals = Pe[rows, cols]
        for i in np.argsort(-vals, kind="stable"):
            p = float(vals[i])
            if best.full and p < best.threshold():
                break
            prefix = prefixes[rows[i]]
            text = "".join(units[u] for u in prefix) + end_text[cols[i]]
            # a bare </t> is the file-start unit, not a token
            if text:
                best.offer(text, p)

        thr = best.threshold()
        Po = P[:, open_cols]
        rows, cols = np.nonzero(Po >= thr) if thr > 0 else np.nonzero(Po > 0)
        for r, c in zip(rows.tolist(), cols.tolist()):
            prefix = prefixes[r]
            if len(prefix) + 1 >= max_units:
                continue
            heapq.heappush(heap, (-float(Po[r, c]), prefix + (int(open_cols[c]),), states, r))

    expand(root_dist[None, :], np.ones(1), [()], np.asarray(root_state, dtype=np.float64)[None, :])
    while heap:
        batch = []
        while heap and len(batch) < beam_size:
            neg, prefix, states, row = heap[0]
            if best.full and -neg < best.threshold():
                heap.clear()
                break
            heapq.heappop(heap)
            batch.append((-neg, prefix, states[row]))
        if not batch:
            break
        probs = np.array([b[0] for b in batch])
        prefixes = [b[1] for b in batch]
        dists, new_states = step_batch(params, [p[-1] for p in prefixes], np.stack([b[2] for b in batch]))
        expand(dists, probs, prefixes, new_states)
    return best.ranked()


def _history_ids(model: LanguageModel, history_units: Sequence) -> np.ndarray:
    if len(history_units) == 0:
        return np.array([model.vocab.bos], dtype=np.int64)
    if isinstance(history_units[0], str):
        return model.vocab.encode(history_units)
    return np.asarray(history_units, dtype=np.int64)


def history_state(model: LanguageModel, history_units: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Next-unit distribution and state after consuming the history.

    An empty history is treated as the start of a file.
    """
    logp, states = run_sequence(model.params, _history_ids(model, history_units))
    return np.exp(logp[-1]), states[-1]


def predict_top_k(model: LanguageModel, history_units: Sequence, k: int = 10,
                  beam_size: int | None = None, max_units: int = MAX_TOKEN_UNITS) -> CompletionList:
    """Rank the ``k`` most likely next complete tokens after ``history_units``."""
    beam_size = beam_size or 5 * k
    if beam_size < k:
        raise OvlmError("bad-beam", "beam_size must be >= k")
    dist, state = history_state(model, history_units)
    return beam_search(model.params, model.vocab, dist, state, k, beam_size, max_units)


def token_probability(params: NlmParams, root_dist: np.ndarray, root_state: np.ndarray,
                      unit_ids: Sequence[int]) -> float:
    """Product of unit probabilities of one token, starting from a history state."""
    p = float(root_dist[unit_ids[0]])
    if len(unit_ids) > 1:
        logp, _ = run_sequence(params, unit_ids[:-1], root_state)
        p *= float(np.exp(logp[np.arange(len(unit_ids) - 1), unit_ids[1:]].sum()))
    return p


# --- identifier cache -----------------------------------------------------


@dataclass
class IdentifierCache:
    """Identifiers seen after exact 5-token histories, with counts."""

    entries: dict[tuple[str, ...], dict[str, int]] = field(default_factory=dict)

    def observe(self, history_tokens: Sequence[str], identifier: str) -> None:
        if len(history_tokens) != HISTORY_LEN:
            raise OvlmError("bad-history", f"history must have {HISTORY_LEN} tokens")
        bucket = self.entries.setdefault(tuple(history_tokens), {})
        bucket[identifier] = bucket.get(identifier, 0) + 1

    def lookup(self, history_tokens: Sequence[str]) -> list[tuple[str, int]]:
        if len(history_tokens) != HISTORY_LEN:
            return []
        return list(self.entries.get(tuple(history_tokens), {}).items())

    def clear(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


def cache_observe(cache: IdentifierCache, history_tokens: Sequence[str], identifier: str) -> IdentifierCache:
    cache.observe(history_tokens, identifier)
    return cache


def merge_predictions(beam: CompletionList, cache_pred: dict[str, float],
                      cache_weight: float = CACHE_WEIGHT, top: int = 10) -> CompletionList:
    """``cache_pred * w + beam_pred * (1 - w)`` over the union; top ``top`` kept."""
    if not 0.0 <= cache_weight <= 1.0:
        raise OvlmError("bad-weight", "cache_weight must be in [0, 1]")
    merged: dict[str, float] = {}
    for text, p in beam:
        merged[text] = p * (1.0 - cache_weight)
    for text, p in cache_pred.items():
        merged[text] = merged.get(text, 0.0) + p * cache_weight
    ranked = sorted(((t, p) for t, p in merged.items() if p > 0), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top]


def cache_distribution(model: LanguageModel, bpe: BpeModel, identifiers: Sequence[str],
                       root_dist: np.ndarray, root_state: np.ndarray) -> dict[str, float]:
    """Score cached identifiers with the model and normalize to sum 1."""
    scores = {}
    for ident in identifiers:
        ids = model.vocab.encode(segment(ident, bpe))
        scores[ident] = token_probability(model.params, root_dist, root_state, ids)
    total = sum(scores.values())
    if total <= 0:
        return {t: 1.0 / len(scores) for t in scores}
    return {t: s / total for t, s in scores.items()}


def predict_with_cache(model: LanguageModel, cache: IdentifierCache, history_tokens: Sequence[str],
                       history_units: Sequence, k: int = 10, beam_size: int | None = None,
                       cache_weight: float = CACHE_WEIGHT, bpe: BpeModel | None = None,
                       max_units: int = MAX_TOKEN_UNITS) -> CompletionList:
    """Beam predictions merged with cached identifiers for the last 5 tokens.

    Falls back to :func:`predict_top_k` on a cache miss.
    """
    dist, state = history_state(model, history_units)
    beam = beam_search(model.params, model.vocab, dist, state, k, beam_size or 5 * k, max_units)
    hits = cache.lookup(list(history_tokens)[-HISTORY_LEN:])
    if not hits:
        return beam
    if bpe is None:
        raise OvlmError("no-bpe", "a BPE model is needed to score cached identifiers")
    cached = cache_distribution(model, bpe, [t for t, _ in hits], dist, state)
    return merge_predictions(beam, cached, cache_weight, top=k)
