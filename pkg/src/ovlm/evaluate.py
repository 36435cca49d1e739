"""Cross entropy, MRR/recall, evaluation scenarios and bug scoring."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bpe import BpeModel, segment
from .completion import (HISTORY_LEN, MAX_TOKEN_UNITS, CompletionList,
                         IdentifierCache, beam_search, cache_distribution, merge_predictions)
from .corpus import EncodedFile, Pipeline, Project, check_disjoint
from .errors import OvlmError
from .lexer import Category, TokenStream, lex
from .nlm import LanguageModel, adapt, run_sequence

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
MAX_MRR_TOKENS = 1_000_000


class Scenario(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    MAINTENANCE = "maintenance"


@dataclass
class EvalReport:
    entropy_bits_per_token: float = 0.0
    mrr: float = 0.0
    r_at_1: float = 0.0
    r_at_10: float = 0.0
    identifier_mrr: float = 0.0
    identifier_r_at_1: float = 0.0
    identifier_r_at_10: float = 0.0
    tokens_evaluated: int = 0
    scenario: Scenario = Scenario.STATIC
    identifier_entropy_bits: float = 0.0
    predictions_evaluated: int = 0
    operations: list[tuple[str, str]] = field(default_factory=list, repr=False)

    def to_text(self, extra: dict[str, str] | None = None) -> str:
        rows = {
            "scenario": self.scenario.value,
            "entropy_bits_per_token": f"{self.entropy_bits_per_token:.6f}",
            "identifier_entropy_bits": f"{self.identifier_entropy_bits:.6f}",
            "mrr": f"{self.mrr:.6f}",
            "r_at_1": f"{self.r_at_1:.6f}",
            "r_at_10": f"{self.r_at_10:.6f}",
            "identifier_mrr": f"{self.identifier_mrr:.6f}",
            "identifier_r_at_1": f"{self.identifier_r_at_1:.6f}",
            "identifier_r_at_10": f"{self.identifier_r_at_10:.6f}",
            "tokens_evaluated": str(self.tokens_evaluated),
            "predictions_evaluated": str(self.predictions_evaluated),
        }
        rows.update(extra or {})
        return "".join(f"{k}={v}\n" for k, v in rows.items())


# --- entropy ----------------------------------------------------------------


def token_entropy(model: LanguageModel, token: str, context_units: Sequence, bpe: BpeModel) -> float:
    """Bits needed for ``token`` after ``context_units``, by the subword chain rule.

    An empty context means the start of a file.
    """
    unit_ids = model.vocab.encode(segment(token, bpe))
    if len(context_units) and isinstance(context_units[0], str):
        context = model.vocab.encode(context_units)
    else:
        context = np.asarray(context_units, dtype=np.int64)
    if len(context) == 0:
        context = np.array([model.vocab.bos], dtype=np.int64)
    seq = np.concatenate([context, unit_ids])
    logp, _ = run_sequence(model.params, seq[:-1])
    n = len(context)
    picked = logp[np.arange(n - 1, len(seq) - 1), seq[n:]]
    return float(-picked.sum() / LN2)


def file_token_entropies(model: LanguageModel, f: EncodedFile) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-token entropies (bits) of one file, plus the eval-mode log probs and states."""
    logp, states = run_sequence(model.params, f.ids[:-1])
    unit_nll = np.zeros(len(f.ids))
    unit_nll[1:] = -logp[np.arange(len(f.ids) - 1), f.ids[1:]]
    cum = np.concatenate([[0.0], np.cumsum(unit_nll)])
    bits = (cum[f.ends] - cum[f.starts]) / LN2
    return bits, logp, states


def corpus_entropy(model: LanguageModel, files: Iterable[EncodedFile]) -> float:
    """Mean bits per token; the state is reset at every file."""
    total, count = 0.0, 0
    for f in files:
        if len(f) == 0:
            continue
        bits, _, _ = file_token_entropies(model, f)
        total += float(bits.sum())
        count += len(bits)
    if count == 0:
        raise OvlmError("empty-test", "no tokens to evaluate")
    return total / count


# --- ranking metrics ----------------------------------------------------------


@dataclass
class RankMetrics:
    mrr: float
    r_at_1: float
    r_at_10: float
    identifier_mrr: float
    identifier_r_at_1: float
    identifier_r_at_10: float
    count: int
    identifier_count: int


def reciprocal_rank(predictions: Sequence[tuple[str, float]] | Sequence[str], truth: str) -> float:
    for rank, pred in enumerate(predictions, 1):
        text = pred[0] if isinstance(pred, tuple) else pred
        if text == truth:
            return 1.0 / rank
    return 0.0


def _summary(rr: np.ndarray) -> tuple[float, float, float]:
    if len(rr) == 0:
        return 0.0, 0.0, 0.0
    return float(rr.mean()), float((rr == 1.0).mean()), float((rr >= 0.1 - 1e-12).mean())


def mrr_and_recall(ranked_predictions: Sequence, truths: Sequence[str],
                   identifier_mask: Sequence[bool] | None = None) -> RankMetrics:
    """MRR, R@1 and R@10 over all positions and over identifier positions.

    A truth missing from the list has reciprocal rank 0.
    """
    if identifier_mask is None:
        identifier_mask = [False] * len(truths)
    if not (len(ranked_predictions) == len(truths) == len(identifier_mask)):
        raise OvlmError("misaligned", "predictions, truths and mask differ in length")
    rr = np.array([reciprocal_rank(p[:10], t) for p, t in zip(ranked_predictions, truths)])
    mask = np.asarray(identifier_mask, dtype=bool)
    mrr, r1, r10 = _summary(rr)
    imrr, ir1, ir10 = _summary(rr[mask] if len(rr) else rr)
    return RankMetrics(mrr, r1, r10, imrr, ir1, ir10, len(rr), int(mask.sum()))


# --- scenarios ----------------------------------------------------------------


@dataclass
class ScenarioOptions:
    k: int = 10
    beam_size: int | None = None
    cache_weight: float | None = None  # None disables the identifier cache
    adapt_unroll: int = 20
    adapt_lr: float | None = None
    max_mrr_tokens: int = MAX_MRR_TOKENS
    max_units: int = MAX_TOKEN_UNITS
    predict: bool = True


@dataclass
class _Accumulator:
    nll_bits: list[float] = field(default_factory=list)
    ident: list[bool] = field(default_factory=list)
    predictions: list[CompletionList] = field(default_factory=list)
    truths: list[str] = field(default_factory=list)
    pred_ident: list[bool] = field(default_factory=list)


def evaluate_file(model: LanguageModel, f: EncodedFile, acc: _Accumulator, opts: ScenarioOptions,
                  cache: IdentifierCache | None = None, bpe: BpeModel | None = None) -> None:
    """Score every token of ``f`` and, within the MRR budget, rank predictions."""
    if len(f) == 0:
        return
    bits, logp, states = file_token_entropies(model, f)
    mask = f.identifier_mask
    acc.nll_bits.extend(bits.tolist())
    acc.ident.extend(mask.tolist())
    if not opts.predict:
        return
    history: list[str] = []
    for i in range(len(f)):
        truth = f.tokens[i]
        if len(acc.predictions) < opts.max_mrr_tokens:
            s = int(f.starts[i])
            dist = np.exp(logp[s - 1])
            state = states[s]
            preds = beam_search(model.params, model.vocab, dist, state, opts.k,
                                opts.beam_size or 5 * opts.k, opts.max_units)
            if cache is not None and len(history) >= HISTORY_LEN:
                hits = cache.lookup(history[-HISTORY_LEN:])
                if hits:
                    cached = cache_distribution(model, bpe, [t for t, _ in hits], dist, state)
                    preds = merge_predictions(preds, cached, opts.cache_weight, top=opts.k)
            acc.predictions.append(preds)
            acc.truths.append(truth)
            acc.pred_ident.append(bool(mask[i]))
        if cache is not None and mask[i] and len(history) >= HISTORY_LEN:
            cache.observe(history[-HISTORY_LEN:], truth)
        if f.categories[i] is not Category.WHITESPACE:
            history.append(truth)


def _report(acc: _Accumulator, scenario: Scenario, ops: list[tuple[str, str]]) -> EvalReport:
    bits = np.asarray(acc.nll_bits)
    ident = np.asarray(acc.ident, dtype=bool)
    if len(bits) == 0:
        raise OvlmError("empty-test", "no test tokens")
    m = mrr_and_recall(acc.predictions, acc.truths, acc.pred_ident)
    return EvalReport(
        entropy_bits_per_token=float(bits.mean()),
        mrr=m.mrr, r_at_1=m.r_at_1, r_at_10=m.r_at_10,
        identifier_mrr=m.identifier_mrr, identifier_r_at_1=m.identifier_r_at_1,
        identifier_r_at_10=m.identifier_r_at_10,
        tokens_evaluated=len(bits), scenario=scenario,
        identifier_entropy_bits=float(bits[ident].mean()) if ident.any() else 0.0,
        predictions_evaluated=m.count,
        operations=ops,
    )


def run_scenario(scenario: Scenario | str, global_model: LanguageModel, test_projects: Sequence[Project],
                 options: ScenarioOptions | None = None, bpe: BpeModel | None = None,
                 train_paths: Iterable[str | Path] = ()) -> EvalReport:
    """Evaluate ``test_projects`` under one scenario.

    * static: the global model, frozen.
    * dynamic: per project, each file is predicted and then used for one
      adaptation pass; the global model is restored after each project.
    * maintenance: each file is predicted by the global model adapted on the
      other files of its project.
    """
    scenario = Scenario(scenario)
    opts = options or ScenarioOptions()
    if opts.cache_weight is not None and bpe is None:
        raise OvlmError("no-bpe", "the identifier cache needs the BPE model")
    train_paths = list(train_paths)
    if train_paths:
        check_disjoint({"train": train_paths,
                        "test": [f.path for p in test_projects for f in p.files if f.path]})

    acc = _Accumulator()
    ops: list[tuple[str, str]] = []
    for project in test_projects:
        cache = IdentifierCache() if opts.cache_weight is not None else None
        if scenario is Scenario.STATIC:
            for f in project.files:
                ops.append(("predict", f.path))
                evaluate_file(global_model, f, acc, opts, cache, bpe)
        elif scenario is Scenario.DYNAMIC:
            model = global_model
            for f in project.files:
                ops.append(("predict", f.path))
                evaluate_file(model, f, acc, opts, cache, bpe)
                model = adapt(model, [f.ids], opts.adapt_unroll, opts.adapt_lr)
                ops.append(("adapt", f.path))
        else:
            for i, f in enumerate(project.files):
                others = [g for j, g in enumerate(project.files) if j != i]
                model = global_model
                if others:
                    model = adapt(global_model, [g.ids for g in others], opts.adapt_unroll, opts.adapt_lr)
                    ops.extend(("adapt", g.path) for g in others)
                ops.append(("predict", f.path))
                evaluate_file(model, f, acc, opts, cache, bpe)
        ops.append(("restore", project.name))
    return _report(acc, scenario, ops)


# --- bug scoring --------------------------------------------------------------


@dataclass
class BugPair:
    id: str
    buggy_snippet: TokenStream
    fixed_snippet: TokenStream

    def __post_init__(self) -> None:
        if not len(self.buggy_snippet) or not len(self.fixed_snippet):
            raise OvlmError("empty-snippet", f"bug pair {self.id} has an empty side")


def snippet_entropy(model: LanguageModel, pipeline: Pipeline, stream: TokenStream) -> float:
    f = pipeline.encode_stream(stream)
    if len(f) == 0:
        raise OvlmError("empty-snippet", "snippet has no tokens after preparation")
    bits, _, _ = file_token_entropies(model, f)
    return float(bits.mean())


def bug_entropy_delta(static_model: LanguageModel, pair: BugPair, pipeline: Pipeline) -> float:
    """Mean per-token entropy of the buggy side minus that of the fixed side."""
    return (snippet_entropy(static_model, pipeline, pair.buggy_snippet)
            - snippet_entropy(static_model, pipeline, pair.fixed_snippet))


def load_bug_pairs(directory: str | Path, pipeline: Pipeline) -> list[BugPair]:
    directory = Path(directory)
    pairs = []
    for buggy in sorted(directory.glob("*.buggy")):
        fixed = buggy.with_suffix(".fixed")
        if not fixed.exists():
            raise OvlmError("missing-path", str(fixed))
        pairs.append(BugPair(
            buggy.stem,
            lex(buggy.read_bytes(), pipeline.language, str(buggy)),
            lex(fixed.read_bytes(), pipeline.language, str(fixed)),
        ))
    if not pairs:
        raise OvlmError("empty-split", f"no *.buggy files in {directory}")
    return pairs
