"""Corpus manifests, file discovery and the token-to-unit pipeline."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .bpe import BpeModel, SegmentStats, segment
from .errors import OvlmError
from .lexer import (Category, Language, TokenStream, escape, lex, lex_file, parse_language,
                    source_extensions, unescape)
from .nlm import UnitVocab
from .vocab import PrepConfig, PreparedToken, apply_prep_tokens

SPLITS = ("train", "small_train", "bpe", "valid", "test")
_SPLIT_ALIASES = {"bpe_train": "bpe", "validation": "valid", "small": "small_train"}
# small_train is a subset of the full training set by construction
_MAY_OVERLAP = {frozenset({"train", "small_train"})}


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("OVLM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class CorpusManifest:
    splits: dict[str, list[Path]]
    language: Language = Language.JAVA
    path: Path | None = None

    def projects(self, split: str) -> list[Path]:
        return self.splits.get(split, [])

    def files(self, split: str) -> list[tuple[Path, list[Path]]]:
        """(project, source files) for every project of ``split``."""
        exts = source_extensions(self.language)
        return [(p, project_files(p, exts)) for p in self.projects(split)]

    def require(self, split: str) -> list[Path]:
        projects = self.projects(split)
        if not projects or not any(fs for _, fs in self.files(split)):
            raise OvlmError("empty-split", f"split '{split}' has no source files")
        return projects


def project_files(project: Path, extensions: Sequence[str]) -> list[Path]:
    if project.is_file():
        return [project]
    return sorted(p for p in project.rglob("*") if p.is_file() and p.suffix.lower() in extensions)


def check_disjoint(splits: dict[str, Iterable[Path]]) -> None:
    resolved = {name: {Path(p).resolve() for p in paths} for name, paths in splits.items()}
    names = list(resolved)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if frozenset({a, b}) in _MAY_OVERLAP:
                continue
            common = resolved[a] & resolved[b]
            if common:
                raise OvlmError("contaminated-split",
                                f"{sorted(map(str, common))[0]} is in both '{a}' and '{b}'")


def parse_manifest(text: str, base: Path) -> CorpusManifest:
    splits: dict[str, list[Path]] = {}
    language = Language.JAVA
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            name = _SPLIT_ALIASES.get(name, name)
            if name not in SPLITS:
                raise OvlmError("bad-manifest", f"line {lineno}: unknown section [{name}]")
            section = name
            splits.setdefault(section, [])
            continue
        if section is None:
            key, sep, value = line.partition("=")
            if sep and key.strip() == "language":
                language = parse_language(value)
                continue
            raise OvlmError("bad-manifest", f"line {lineno}: path outside a section")
        p = Path(line)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise OvlmError("missing-path", str(p))
        splits[section].append(p)
    check_disjoint(splits)
    return CorpusManifest(splits, language)


def load_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    if not path.is_file():
        raise OvlmError("missing-path", str(path))
    m = parse_manifest(path.read_text(encoding="utf-8"), path.parent)
    m.path = path
    return m


def lex_files(paths: Sequence[Path], language: Language) -> list[TokenStream]:
    """Lex many files, in parallel when ``OVLM_THREADS`` > 1."""
    workers = max_workers()
    if workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lex_file, paths, [language] * len(paths)))
    return [lex_file(p, language) for p in paths]


# --- encoded files ----------------------------------------------------------


@dataclass
class EncodedFile:
    """A file's prepared tokens and their unit ids.

    ``ids[0]`` is the file-start unit; token ``i`` spans
    ``ids[starts[i]:ends[i]]``.
    """

    path: str
    tokens: list[str]
    categories: list[Category]
    ids: np.ndarray
    starts: np.ndarray
    ends: np.ndarray

    @property
    def identifier_mask(self) -> np.ndarray:
        return np.array([c is Category.IDENTIFIER for c in self.categories], dtype=bool)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Project:
    name: str
    files: list[EncodedFile] = field(default_factory=list)

    @property
    def num_tokens(self) -> int:
        return sum(len(f) for f in self.files)


def encode_units(path: str, tokens: Sequence[str], categories: Sequence[Category],
                 unit_lists: Sequence[Sequence[str]], vocab: UnitVocab) -> EncodedFile:
    lengths = np.array([len(u) for u in unit_lists], dtype=np.int64)
    ends = 1 + np.cumsum(lengths)
    starts = ends - lengths
    flat = [u for units in unit_lists for u in units]
    ids = np.concatenate([[vocab.bos], vocab.encode(flat)]).astype(np.int64)
    return EncodedFile(path, list(tokens), list(categories), ids, starts, ends)


@dataclass
class Pipeline:
    """Source text -> prepared tokens -> subword unit ids."""

    bpe: BpeModel
    vocab: UnitVocab
    prep: PrepConfig = field(default_factory=PrepConfig.lm_default)
    language: Language = Language.JAVA
    stats: SegmentStats = field(default_factory=SegmentStats)

    @classmethod
    def from_bpe(cls, bpe: BpeModel, prep: PrepConfig | None = None,
                 language: Language = Language.JAVA) -> "Pipeline":
        return cls(bpe, UnitVocab.from_bpe(bpe), prep or PrepConfig.lm_default(), language)

    def prepare(self, stream: TokenStream) -> list[PreparedToken]:
        return apply_prep_tokens(stream, self.prep)

    def encode_tokens(self, tokens: Sequence[PreparedToken], path: str = "") -> EncodedFile:
        units = [segment(t.text, self.bpe, self.stats) for t in tokens]
        return encode_units(path, [t.text for t in tokens], [t.category for t in tokens],
                            units, self.vocab)

    def encode_stream(self, stream: TokenStream) -> EncodedFile:
        return self.encode_tokens(self.prepare(stream), stream.source_path)

    def encode_source(self, text: str | bytes, path: str = "") -> EncodedFile:
        return self.encode_stream(lex(text, self.language, path))

    def encode_path(self, path: Path) -> EncodedFile:
        return self.encode_stream(lex_file(path, self.language))

    def encode_projects(self, projects: Iterable[tuple[Path, list[Path]]]) -> list[Project]:
        out = []
        for project, files in projects:
            streams = lex_files(files, self.language)
            out.append(Project(str(project), [self.encode_stream(s) for s in streams]))
        return out


def concat_ids(files: Iterable[EncodedFile]) -> np.ndarray:
    parts = [f.ids for f in files]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


# --- line formats -----------------------------------------------------------
# Multi-file token streams (.toks/.prep) and unit files (.units) share one
# layout: `@project\t<name>` and `@file\t<path>` directive lines, then one
# `<category>\t<payload>` line per token.


def write_prepared(out, files: Iterable[tuple[str, str, Sequence[PreparedToken]]]) -> None:
    """Write (project, path, tokens) triples as a ``.prep`` stream."""
    project = None
    for proj, path, tokens in files:
        if proj != project:
            out.write(f"@project\t{escape(proj)}\n")
            project = proj
        out.write(f"@file\t{escape(path)}\n")
        for t in tokens:
            out.write(f"{t.category.value}\t{escape(t.text)}\n")


def read_prepared(lines: Iterable[str], raw: bool = False
                  ) -> Iterator[tuple[str, str, list[PreparedToken]]]:
    """Inverse of :func:`write_prepared`; plain ``.toks`` files read as one file.

    With ``raw`` the token payloads are returned still escaped.
    """
    project, path, tokens = "", "", []
    started = False
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        kind, _, payload = line.partition("\t")
        if kind == "@project":
            if started:
                yield project, path, tokens
                started, tokens = False, []
            project = unescape(payload)
        elif kind == "@file":
            if started:
                yield project, path, tokens
            path, tokens, started = unescape(payload), [], True
        else:
            try:
                cat = Category(kind)
            except ValueError:
                raise OvlmError("corrupt", f"unknown category {kind!r}") from None
            tokens.append(PreparedToken(payload if raw else unescape(payload), cat))
            started = True
    if started:
        yield project, path, tokens


def write_units(out, projects: Iterable[Project], vocab: UnitVocab) -> None:
    for project in projects:
        out.write(f"@project\t{escape(project.name)}\n")
        for f in project.files:
            out.write(f"@file\t{escape(f.path)}\n")
            for tok_cat, s, e in zip(f.categories, f.starts, f.ends):
                units = " ".join(escape(vocab.units[i], space=True) for i in f.ids[s:e])
                out.write(f"{tok_cat.value}\t{units}\n")


def read_units(lines: Iterable[str], vocab: UnitVocab) -> list[Project]:
    from .bpe import desegment

    projects: list[Project] = []
    for proj, path, entries in read_prepared(lines, raw=True):
        unit_lists = [[unescape(u) for u in t.text.split(" ")] for t in entries]
        tokens = [desegment(u)[0] if u else "" for u in unit_lists]
        f = encode_units(path, tokens, [t.category for t in entries], unit_lists, vocab)
        if not projects or projects[-1].name != proj:
            projects.append(Project(proj))
        projects[-1].files.append(f)
    return projects
