"""Synthetic Java-like projects for desk-scale experiments.

Every project shares the same idioms (loops, getters, collections, null
checks) but names its classes, fields and methods from a private pool of
invented words, so identifiers repeat within a project and rarely across
projects.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from pathlib import Path

from .lexer import Category, lex

_ONSETS = ["b", "br", "c", "ch", "d", "dr", "f", "fl", "g", "gr", "h", "j", "k", "kl", "l", "m",
           "n", "p", "pl", "qu", "r", "s", "sh", "st", "t", "tr", "v", "w", "z"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou", "ea"]
_CODAS = ["", "n", "r", "l", "x", "m", "nd", "st", "ck", "th"]

SHARED_TYPES = ["String", "Integer", "Long", "Double", "Object"]
SUFFIXES = ["Manager", "Service", "Record", "Entry", "Handler", "Builder", "Cache", "Index"]
VERBS = ["compute", "load", "update", "find", "process", "validate", "register", "merge"]
NOUNS = ["count", "total", "size", "limit", "offset", "score", "weight", "level"]


def _word(rng: random.Random) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(rng.randint(1, 2))) + rng.choice(_CODAS)


def _cap(w: str) -> str:
    return w[:1].upper() + w[1:]


@dataclass
class SynthProject:
    name: str
    files: dict[str, str]

    def write(self, root: str | Path) -> Path:
        root = Path(root) / self.name
        root.mkdir(parents=True, exist_ok=True)
        for fname, text in self.files.items():
            (root / fname).write_text(text, encoding="utf-8")
        return root

    def token_estimate(self) -> int:
        return sum(sum(1 for t in lex(src) if t.category is not Category.WHITESPACE)
                   for src in self.files.values())


class _Names:
    def __init__(self, rng: random.Random, n_words: int):
        words: set[str] = set()
        while len(words) < n_words:
            words.add(_word(rng))
        self.words = sorted(words)
        self.rng = rng

    def word(self) -> str:
        return self.rng.choice(self.words)


def _method(rng: random.Random, names: _Names, cls: str, fields: list[tuple[str, str]],
            entity: str) -> list[str]:
    f_type, f_name = rng.choice(fields)
    verb = rng.choice(VERBS)
    w = names.word()
    kind = rng.randrange(6)
    if kind == 0:
        return [
            f"    public {f_type} get{_cap(f_name)}() {{",
            f"        return {f_name};",
            "    }",
        ]
    if kind == 1:
        return [
            f"    public void set{_cap(f_name)}({f_type} {f_name}) {{",
            f"        this.{f_name} = {f_name};",
            "    }",
        ]
    if kind == 2:
        noun = rng.choice(NOUNS)
        return [
            f"    public int {verb}{_cap(w)}{_cap(noun)}(List<{entity}> {w}List) {{",
            f"        int {noun} = 0;",
            f"        for (int i = 0; i < {w}List.size(); i++) {{",
            f"            {entity} {w} = {w}List.get(i);",
            f"            if ({w} == null) {{",
            "                continue;",
            "            }",
            f"            {noun} += {w}.get{_cap(rng.choice(NOUNS))}();",
            "        }",
            f"        return {noun};",
            "    }",
        ]
    if kind == 3:
        return [
            f"    public boolean {verb}{_cap(w)}({entity} {w}) {{",
            f"        if ({w} == null) {{",
            f"            throw new IllegalArgumentException(\"{w}\");",
            "        }",
            f"        return {f_name} != null && {f_name}.equals({w}.get{_cap(f_name)}());",
            "    }",
        ]
    if kind == 4:
        return [
            f"    public List<{entity}> {verb}{_cap(w)}s() {{",
            f"        List<{entity}> result = new ArrayList<>();",
            f"        for ({entity} {w} : {entity.lower()}s) {{",
            f"            if ({w}.is{_cap(names.word())}()) {{",
            f"                result.add({w});",
            "            }",
            "        }",
            "        return result;",
            "    }",
        ]
    return [
        "    @Override",
        "    public String toString() {",
        f"        return \"{cls}{{\" + \"{f_name}=\" + {f_name} + \"}}\";",
        "    }",
    ]


def _class_file(rng: random.Random, names: _Names, project: str, entities: list[str]) -> tuple[str, str]:
    cls = _cap(names.word()) + rng.choice(SUFFIXES)
    entity = rng.choice(entities)
    fields = [(rng.choice(SHARED_TYPES + entities), names.word() + _cap(rng.choice(NOUNS)))
              for _ in range(rng.randint(2, 4))]
    lines = [
        f"package com.{project}.{names.word()};",
        "",
        "import java.util.ArrayList;",
        "import java.util.List;",
        "",
        f"public class {cls} {{",
    ]
    for t, n in fields:
        lines.append(f"    private {t} {n};")
    lines.append(f"    private List<{entity}> {entity.lower()}s = new ArrayList<>();")
    lines.append("")
    params = ", ".join(f"{t} {n}" for t, n in fields)
    lines.append(f"    public {cls}({params}) {{")
    lines += [f"        this.{n} = {n};" for _, n in fields]
    lines.append("    }")
    for _ in range(rng.randint(4, 8)):
        lines.append("")
        lines += _method(rng, names, cls, fields, entity)
    lines.append("}")
    return f"{cls}.java", "\n".join(lines) + "\n"


def make_project(name: str, seed: int, n_files: int = 20, n_words: int = 30) -> SynthProject:
    rng = random.Random(seed)
    names = _Names(rng, n_words)
    entities = [_cap(names.word()) for _ in range(3)]
    files: dict[str, str] = {}
    while len(files) < n_files:
        fname, text = _class_file(rng, names, name, entities)
        files.setdefault(fname, text)
    return SynthProject(name, files)


def make_corpus(seed: int = 0, sizes: dict[str, int] | None = None) -> dict[str, SynthProject]:
    """Projects keyed by name, each with its own identifier pool."""
    sizes = sizes or {"alpha": 40, "beta": 40, "gamma": 30}
    return {name: make_project(name, seed * 1000 + i, n) for i, (name, n) in enumerate(sizes.items())}


_OPERATOR_SWAPS = [(" < ", " <= "), (" == null", " != null"), (" += ", " -= "), (" != null", " == null")]


def make_bug_pairs(project: SynthProject, n: int, seed: int = 0) -> list[tuple[str, str, str]]:
    """(id, buggy, fixed) snippets cut from ``project``.

    Half the bugs rename one identifier occurrence to a fresh word, half swap
    an operator.
    """
    rng = random.Random(seed)
    fresh = _Names(random.Random(seed + 7919), 4 * n)
    snippets = []
    for text in project.files.values():
        lines = text.split("\n")
        for i, line in enumerate(lines):
            if line.startswith("    public ") and "(" in line and i + 6 < len(lines):
                snippets.append("\n".join(lines[i:i + 6]) + "\n")
    rng.shuffle(snippets)
    pairs = []
    for snippet in snippets:
        if len(pairs) >= n:
            break
        idx = len(pairs)
        if idx % 2 == 0:
            swaps = [(a, b) for a, b in _OPERATOR_SWAPS if a in snippet]
            if not swaps:
                continue
            a, b = rng.choice(swaps)
            buggy = snippet.replace(a, b, 1)
        else:
            idents = [t.text for t in lex(snippet) if t.category is Category.IDENTIFIER and len(t.text) > 3]
            if not idents:
                continue
            target = rng.choice(idents)
            new = "z" + fresh.words[idx] + "q"
            buggy = re.sub(rf"\b{re.escape(target)}\b", new, snippet, count=1)
        if buggy != snippet:
            pairs.append((f"bug{idx:03d}", buggy, snippet))
    return pairs
