"""Reference implementations used as test oracles.

Each one is written for obviousness, not speed, and shares no code with the
package beyond public data types.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

END = "</t>"


# --- BPE ------------------------------------------------------------------


def _sym_order(sym: str) -> list[int]:
    # "</t>" ranks after every character, also as a suffix of a merged unit
    if sym.endswith(END):
        return [ord(c) for c in sym[:-4]] + [0x110000]
    return [ord(c) for c in sym]


def naive_learn_bpe(corpus: list[str], num_merges: int) -> list[tuple[str, str]]:
    """Recount every pair over every token occurrence on every iteration."""
    words = [list(w) + [END] for w in corpus]
    merges = []
    for _ in range(num_merges):
        counts: dict[tuple[str, str], int] = {}
        for w in words:
            for a, b in zip(w, w[1:]):
                counts[(a, b)] = counts.get((a, b), 0) + 1
        if not counts:
            break
        top = max(counts.values())
        if top < 2:
            break
        best = min((p for p, c in counts.items() if c == top),
                   key=lambda p: (_sym_order(p[0]), _sym_order(p[1])))
        merges.append(best)
        new_words = []
        for w in words:
            out, i = [], 0
            while i < len(w):
                if i < len(w) - 1 and (w[i], w[i + 1]) == best:
                    out.append(w[i] + w[i + 1])
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            new_words.append(out)
        words = new_words
    return merges


def naive_segment(token: str, merges: list[tuple[str, str]]) -> list[str]:
    """Apply each merge in recorded order, left to right, once per merge."""
    units = list(token) + [END]
    for a, b in merges:
        out, i = [], 0
        while i < len(units):
            if i < len(units) - 1 and units[i] == a and units[i + 1] == b:
                out.append(a + b)
                i += 2
            else:
                out.append(units[i])
                i += 1
        units = out
    return units


# --- vocabulary -----------------------------------------------------------


def count_report(train_words: list[str], test_words: list[str], cutoffs: list[int]) -> dict:
    """OOV and frequency buckets by direct counting."""
    counts = Counter(train_words)
    order = sorted(counts, key=lambda w: (-counts[w], w))
    distinct_test = set(test_words)
    out = {"vocab_size": len(counts), "corpus_size": len(train_words)}
    out["oov_full"] = 100.0 * sum(1 for w in distinct_test if w not in counts) / len(distinct_test)
    for c in cutoffs:
        keep = set(order[:c])
        out[f"oov_{c}"] = 100.0 * sum(1 for w in distinct_test if w not in keep) / len(distinct_test)
    buckets = {"1000+": 0, "101-999": 0, "11-100": 0, "2-10": 0, "1": 0}
    for n in counts.values():
        if n >= 1000:
            buckets["1000+"] += 1
        elif n >= 101:
            buckets["101-999"] += 1
        elif n >= 11:
            buckets["11-100"] += 1
        elif n >= 2:
            buckets["2-10"] += 1
        else:
            buckets["1"] += 1
    for k, v in buckets.items():
        out[f"freq_{k}"] = 100.0 * v / len(counts)
    return out


# --- GRU language model ---------------------------------------------------


def _sigmoid(a):
    return 1.0 / (1.0 + math.exp(-a))


def scalar_gru_nll(params, ids) -> float:
    """Mean next-unit NLL (nats) with explicit per-unit loops, eval mode."""
    E = np.asarray(params.embedding, dtype=np.float64)
    mats = {n: np.asarray(getattr(params, n), dtype=np.float64)
            for n in ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h", "W_out", "b_out")}
    H = mats["U_z"].shape[0]
    V = E.shape[0]
    h = [0.0] * H
    total = 0.0
    for t in range(len(ids) - 1):
        x = E[ids[t]]
        z = [_sigmoid(sum(x[d] * mats["W_z"][d, j] for d in range(len(x)))
                      + sum(h[i] * mats["U_z"][i, j] for i in range(H)) + mats["b_z"][j]) for j in range(H)]
        r = [_sigmoid(sum(x[d] * mats["W_r"][d, j] for d in range(len(x)))
                      + sum(h[i] * mats["U_r"][i, j] for i in range(H)) + mats["b_r"][j]) for j in range(H)]
        c = [math.tanh(sum(x[d] * mats["W_h"][d, j] for d in range(len(x)))
                       + sum(r[i] * h[i] * mats["U_h"][i, j] for i in range(H)) + mats["b_h"][j])
             for j in range(H)]
        h = [(1 - z[j]) * h[j] + z[j] * c[j] for j in range(H)]
        logits = [sum(h[i] * mats["W_out"][i, v] for i in range(H)) + mats["b_out"][v] for v in range(V)]
        m = max(logits)
        lse = m + math.log(sum(math.exp(l - m) for l in logits))
        total += lse - logits[ids[t + 1]]
    return total / (len(ids) - 1)


def central_difference(f, x: np.ndarray, index, eps: float = 1e-4) -> float:
    old = x[index]
    x[index] = old + eps
    up = f()
    x[index] = old - eps
    down = f()
    x[index] = old
    return (up - down) / (2 * eps)


# --- beam search ----------------------------------------------------------


def exhaustive_top_k(step, root_dist, root_state, units: list[str], k: int, max_units: int):
    """Enumerate every unit sequence up to ``max_units`` ending in a ``</t>`` unit.

    ``step(state, unit) -> (dist, state)`` advances the model by one unit.
    Identical texts keep their most likely path; ties order lexicographically.
    """
    best: dict[str, float] = {}
    frontier = [("", 1.0, root_dist, root_state)]
    for depth in range(1, max_units + 1):
        nxt = []
        for text, p, dist, state in frontier:
            for u, pu in enumerate(dist):
                q = p * float(pu)
                if q <= 0:
                    continue
                if units[u].endswith(END):
                    full = text + units[u][: -len(END)]
                    if full and q > best.get(full, 0.0):
                        best[full] = q
                elif depth < max_units:
                    d2, s2 = step(state, u)
                    nxt.append((text + units[u], q, d2, s2))
        frontier = nxt
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
