"""``ovlm`` command line: lexing, preprocessing, BPE, training, evaluation, completion.

Exit codes: 0 success, 1 usage error, 2 data error (the message starts with
the error code, e.g. ``error: contaminated-split: ...``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence

from . import __version__
from .bpe import BpeModel, learn_bpe
from .completion import HISTORY_LEN, IdentifierCache, predict_with_cache
from .corpus import (CorpusManifest, Pipeline, Project, concat_ids, lex_files, load_manifest,
                     project_files, read_prepared, read_units, write_prepared, write_units)
from .errors import OvlmError
from .evaluate import Scenario, ScenarioOptions, bug_entropy_delta, load_bug_pairs, run_scenario
from .lexer import (Category, Language, Token, escape, format_tokens, language_for_path, lex_file,
                    parse_language, source_extensions)
from .nlm import (LanguageModel, NlmConfig, UnitVocab, adapt, init_model, load_model, save_model,
                  train)
from .vocab import (DEFAULT_CUTOFFS, CommentHandling, PrepConfig, PreparedToken, StringHandling,
                    apply_prep_tokens, build_vocabulary, vocab_report)

log = logging.getLogger("ovlm")

PreparedFile = tuple[str, str, list[PreparedToken]]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- shared options -------------------------------------------------------


def _add_inputs(p: argparse.ArgumentParser, split: str | None) -> None:
    p.add_argument("inputs", nargs="*", type=Path,
                   help="source files, project directories, or .toks/.prep/.units files")
    p.add_argument("--manifest", type=Path, help="corpus manifest; replaces INPUTS")
    if split is not None:
        p.add_argument("--split", default=split, help=f"manifest split to read (default: {split})")
    p.add_argument("--language", type=parse_language, help="JavaLike, CLike or PythonLike")


def _add_prep(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("preprocessing")
    g.add_argument("--preset", choices=["lm", "identity"], default="lm",
                   help="starting configuration (default: lm)")
    g.add_argument("--non-en", dest="non_english_filter", action=argparse.BooleanOptionalAction)
    g.add_argument("--whitespace", dest="keep_whitespace", action=argparse.BooleanOptionalAction)
    g.add_argument("--comments", choices=[c.value for c in CommentHandling])
    g.add_argument("--strings", choices=[s.value for s in StringHandling])
    g.add_argument("--split-conventions", dest="convention_split", action=argparse.BooleanOptionalAction)
    g.add_argument("--case-markers", action=argparse.BooleanOptionalAction)
    g.add_argument("--split-digits", dest="digit_split", action=argparse.BooleanOptionalAction)


def _prep_config(args) -> PrepConfig:
    base = PrepConfig.lm_default() if args.preset == "lm" else PrepConfig()
    d = base.to_dict()
    for key in ("non_english_filter", "keep_whitespace", "convention_split", "case_markers",
                "digit_split"):
        v = getattr(args, key)
        if v is not None:
            d[key] = str(int(v))
    if args.comments:
        d["comment_handling"] = args.comments
    if args.strings:
        d["string_handling"] = args.strings
    return PrepConfig.from_dict(d)


@contextmanager
def _output(path: Path | None) -> Iterator:
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        yield f


def _manifest(args) -> CorpusManifest | None:
    if args.manifest is None:
        return None
    if args.inputs:
        raise UsageError("give either INPUTS or --manifest, not both")
    return load_manifest(args.manifest)


def _language(args, manifest: CorpusManifest | None, path: Path | None = None) -> Language:
    if args.language is not None:
        return args.language
    if manifest is not None:
        return manifest.language
    return (language_for_path(path) if path is not None else None) or Language.JAVA


def _source_groups(args, split: str | None) -> list[tuple[str, list[Path], Language]]:
    """(project, files, language) for every source input or manifest project."""
    manifest = _manifest(args)
    if manifest is not None:
        manifest.require(split)
        lang = _language(args, manifest)
        return [(str(proj), files, lang) for proj, files in manifest.files(split)]
    if not args.inputs:
        raise UsageError("no inputs given")
    groups = []
    for path in args.inputs:
        if not path.exists():
            raise OvlmError("missing-path", str(path))
        if path.is_dir():
            lang = _language(args, None)
            groups.append((str(path), project_files(path, source_extensions(lang)), lang))
        else:
            groups.append(("", [path], _language(args, None, path)))
    return groups


def _is_stream_file(path: Path) -> bool:
    return path.suffix in (".toks", ".prep", ".units")


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise OvlmError("missing-path", str(path))
    return path.read_text(encoding="utf-8").splitlines()


def _prepared_inputs(args, split: str | None, prep: PrepConfig) -> list[PreparedFile]:
    """Prepared tokens per file from sources, ``.toks`` (prepped here) or ``.prep`` files."""
    out: list[PreparedFile] = []
    if args.manifest is None and args.inputs and all(_is_stream_file(p) for p in args.inputs):
        for path in args.inputs:
            if path.suffix == ".units":
                raise UsageError(f"{path}: expected tokens, got subword units")
            for proj, fpath, tokens in read_prepared(_read_lines(path)):
                if path.suffix == ".toks":
                    tokens = apply_prep_tokens([Token(t.text, t.category) for t in tokens], prep)
                out.append((proj, fpath or str(path), tokens))
        return out
    for proj, files, lang in _source_groups(args, split):
        for stream in lex_files(files, lang):
            out.append((proj, stream.source_path, apply_prep_tokens(stream, prep)))
    return out


def _projects(args, split: str | None, pipeline: Pipeline) -> list[Project]:
    """Encoded projects from ``.units`` files or from any token input."""
    if args.manifest is None and args.inputs and all(p.suffix == ".units" for p in args.inputs):
        projects = []
        for path in args.inputs:
            projects.extend(read_units(_read_lines(path), pipeline.vocab))
        return projects
    projects: list[Project] = []
    for proj, path, tokens in _prepared_inputs(args, split, pipeline.prep):
        if not projects or projects[-1].name != proj:
            projects.append(Project(proj))
        projects[-1].files.append(pipeline.encode_tokens(tokens, path))
    return projects


def _load_bpe(path: Path) -> BpeModel:
    if not path.is_file():
        raise OvlmError("missing-path", str(path))
    return BpeModel.load(path)


def _load_model(args) -> tuple[LanguageModel, BpeModel, Pipeline]:
    bpe = _load_bpe(args.bpe)
    if not args.model.is_file():
        raise OvlmError("missing-path", str(args.model))
    model = load_model(args.model, UnitVocab.from_bpe(bpe))
    prep_meta = {k[5:]: v for k, v in model.meta.items() if k.startswith("prep.")}
    prep = PrepConfig.from_dict(prep_meta) if prep_meta else PrepConfig.lm_default()
    lang = parse_language(model.meta.get("language", "java"))
    if getattr(args, "language", None) is not None:
        lang = args.language
    pipeline = Pipeline(bpe, model.vocab, prep, lang)
    return model, bpe, pipeline


# --- subcommands ----------------------------------------------------------


def cmd_lex(args) -> None:
    with _output(args.output) as out:
        for _, files, lang in _source_groups(args, args.split):
            for path in files:
                stream = lex_file(path, lang)
                out.write(f"@file\t{escape(stream.source_path)}\n")
                out.write(format_tokens(stream))


def cmd_prep(args) -> None:
    files = _prepared_inputs(args, args.split, _prep_config(args))
    with _output(args.output) as out:
        write_prepared(out, files)


def cmd_vocab_stats(args) -> None:
    prep = _prep_config(args)
    train_files = _prepared_inputs(_sub(args, args.train, "train"), "train", prep)
    test_files = _prepared_inputs(_sub(args, args.test, "test"), "test", prep)
    vocab = build_vocabulary([t.text for t in toks] for _, _, toks in train_files)
    report = vocab_report(vocab, [t.text for _, _, toks in test_files for t in toks],
                          args.cutoffs or DEFAULT_CUTOFFS)
    with _output(args.output) as out:
        out.write(report.to_text())


def _sub(args, inputs: list[Path] | None, split: str) -> argparse.Namespace:
    ns = argparse.Namespace(**vars(args))
    ns.inputs = inputs or []
    ns.split = split
    return ns


def cmd_bpe_learn(args) -> None:
    if args.merges < 0:
        raise UsageError("--merges must be >= 0")
    files = _prepared_inputs(args, args.split, _prep_config(args))
    words = [t.text for _, _, toks in files for t in toks]
    if not words:
        raise OvlmError("empty-split", "no tokens to learn merges from")
    model = learn_bpe(words, args.merges)
    with _output(args.output) as out:
        out.write(model.dumps())


def cmd_bpe_apply(args) -> None:
    bpe = _load_bpe(args.bpe)
    pipeline = Pipeline.from_bpe(bpe, _prep_config(args))
    projects = _projects(args, args.split, pipeline)
    with _output(args.output) as out:
        write_units(out, projects, pipeline.vocab)
    if pipeline.stats.unk_chars:
        log.warning("%d characters outside the BPE alphabet", pipeline.stats.unk_chars)


def cmd_train(args) -> None:
    bpe = _load_bpe(args.bpe)
    prep = _prep_config(args)
    manifest = _manifest(args)
    lang = _language(args, manifest)
    pipeline = Pipeline(bpe, UnitVocab.from_bpe(bpe), prep, lang)
    if manifest is not None:
        train_projects = _projects(_sub(args, [], args.split), args.split, pipeline)
        valid_projects = _projects(_sub(args, [], "valid"), "valid", pipeline)
    else:
        if not args.inputs or not args.valid:
            raise UsageError("train needs INPUTS and --valid, or --manifest")
        train_projects = _projects(args, None, pipeline)
        valid_projects = _projects(_sub(args, args.valid, "valid"), None, pipeline)
    train_ids = concat_ids(f for p in train_projects for f in p.files)
    valid_ids = concat_ids(f for p in valid_projects for f in p.files)
    config = NlmConfig(
        vocab_size=len(pipeline.vocab), embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
        dropout_rate=args.dropout, learning_rate=args.lr, batch_size=args.batch_size,
        unroll_len=args.unroll, max_epochs=args.epochs, max_lr_halvings=args.max_halvings,
        seed=args.seed,
    )

    def report(epoch, lr, train_bits, valid_bits):
        print(f"epoch={epoch} lr={lr:.6g} train_bits={train_bits:.4f} valid_bits={valid_bits:.4f}",
              file=sys.stderr)

    params, _ = train(init_model(config), train_ids, valid_ids, config, on_epoch=report)
    meta = {f"prep.{k}": v for k, v in prep.to_dict().items()}
    meta.update({"language": lang.value, "bpe_merges": str(bpe.num_merges)})
    save_model(LanguageModel(params, config, pipeline.vocab, meta), args.output)


def cmd_eval(args) -> None:
    model, bpe, pipeline = _load_model(args)
    projects = _projects(args, args.split, pipeline)
    train_paths: list[Path] = []
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        train_paths = [f for split in ("train", "small_train", "valid", "bpe")
                       for _, fs in manifest.files(split) for f in fs]
    opts = ScenarioOptions(
        k=args.k, beam_size=args.beam, cache_weight=args.cache_weight,
        adapt_unroll=args.adapt_unroll, adapt_lr=args.adapt_lr,
        max_mrr_tokens=args.max_mrr_tokens, predict=not args.entropy_only,
    )
    report = run_scenario(args.scenario, model, projects, opts, bpe, train_paths)
    test_source = str(args.manifest) if args.manifest else ",".join(map(str, args.inputs))
    extra = {"model": str(args.model), "bpe_merges": str(bpe.num_merges), "test_manifest": test_source}
    with _output(args.output) as out:
        out.write(report.to_text(extra))


def cmd_complete(args) -> None:
    k = args.k
    beam = args.beam or 5 * k
    if k < 1 or beam < k:
        raise UsageError("need --k >= 1 and --beam >= --k")
    if not 0.0 <= args.cache_weight <= 1.0:
        raise UsageError("--cache-weight must be in [0, 1]")
    model, bpe, pipeline = _load_model(args)
    if not args.context_file.is_file():
        raise OvlmError("missing-path", str(args.context_file))
    f = pipeline.encode_path(args.context_file)

    cache = IdentifierCache()
    history: list[str] = []
    for text, cat in zip(f.tokens, f.categories):
        if cat is Category.IDENTIFIER and len(history) >= HISTORY_LEN:
            cache.observe(history[-HISTORY_LEN:], text)
        if cat is not Category.WHITESPACE:
            history.append(text)
    preds = predict_with_cache(model, cache, history[-HISTORY_LEN:], f.ids, k, beam,
                               args.cache_weight, bpe)
    with _output(args.output) as out:
        for rank, (token, prob) in enumerate(preds, 1):
            out.write(f"{rank}\t{token}\t{prob:.6g}\n")


def cmd_adapt(args) -> None:
    model, _, pipeline = _load_model(args)
    projects = _projects(args, args.split, pipeline)
    streams = [f.ids for p in projects for f in p.files]
    adapted = adapt(model, streams, args.adapt_unroll, args.lr)
    save_model(adapted, args.output)


def cmd_bug_delta(args) -> None:
    model, _, pipeline = _load_model(args)
    pairs = load_bug_pairs(args.pairs, pipeline)
    with _output(args.output) as out:
        out.write("id,delta_bits\n")
        for pair in pairs:
            out.write(f"{pair.id},{bug_entropy_delta(model, pair, pipeline):.6f}\n")


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ovlm", description="Open-vocabulary language modeling for source code.")
    parser.add_argument("--version", action="version", version=f"ovlm {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name, func, help_, split=None, prep=False):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        if split is not ...:
            _add_inputs(p, split)
        if prep:
            _add_prep(p)
        p.add_argument("-o", "--output", type=Path, help="output file (default: stdout)")
        return p

    command("lex", cmd_lex, "Tokenize source files into a .toks stream.", split="train")
    command("prep", cmd_prep, "Apply vocabulary preprocessing; writes a .prep stream.",
            split="train", prep=True)

    p = command("vocab-stats", cmd_vocab_stats, "Vocabulary size, OOV rates and frequency buckets.",
                split=..., prep=True)
    p.add_argument("--train", nargs="+", type=Path, help="training inputs")
    p.add_argument("--test", nargs="+", type=Path, help="test inputs")
    p.add_argument("--manifest", type=Path, help="reads the train and test splits")
    p.add_argument("--language", type=parse_language)
    p.add_argument("--cutoffs", nargs="+", type=int, help="vocabulary sizes to truncate to")

    p = command("bpe-learn", cmd_bpe_learn, "Learn BPE merges; writes a .bpe model.",
                split="bpe", prep=True)
    p.add_argument("--merges", type=int, required=True, help="number of merge operations")

    p = command("bpe-apply", cmd_bpe_apply, "Segment tokens into subword units; writes .units.",
                split="train", prep=True)
    p.add_argument("--bpe", type=Path, required=True)

    p = command("train", cmd_train, "Train the GRU language model; writes a .nlm checkpoint.",
                split="train", prep=True)
    p.add_argument("--bpe", type=Path, required=True)
    p.add_argument("--valid", nargs="+", type=Path, help="validation inputs (without --manifest)")
    p.add_argument("--embed-dim", type=int, default=512)
    p.add_argument("--hidden-dim", type=int, default=512)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--unroll", type=int, default=200)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--max-halvings", type=int, default=4)
    p.add_argument("--seed", type=int, default=0, help="seeds initialization and dropout")

    p = command("eval", cmd_eval, "Entropy, MRR and recall under one evaluation scenario.",
                split="test")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--bpe", type=Path, required=True)
    p.add_argument("--scenario", choices=[s.value for s in Scenario], default="static")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--beam", type=int, help="beam size (default: 5*k)")
    p.add_argument("--cache-weight", type=float, help="enable the identifier cache with this weight")
    p.add_argument("--adapt-unroll", type=int, default=20)
    p.add_argument("--adapt-lr", type=float, help="adaptation learning rate (default: training rate)")
    p.add_argument("--max-mrr-tokens", type=int, default=1_000_000)
    p.add_argument("--entropy-only", action="store_true", help="skip completion metrics")

    p = command("complete", cmd_complete, "Rank completions for the token after a context file.",
                split=...)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--bpe", type=Path, required=True)
    p.add_argument("--context-file", type=Path, required=True)
    p.add_argument("--language", type=parse_language)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--beam", type=int, help="beam size (default: 5*k)")
    p.add_argument("--cache-weight", type=float, default=0.3)

    p = command("adapt", cmd_adapt, "One adaptation pass over a project; writes a new checkpoint.",
                split="test")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--bpe", type=Path, required=True)
    p.add_argument("--adapt-unroll", type=int, default=20)
    p.add_argument("--lr", type=float, help="learning rate (default: training rate)")

    p = command("bug-delta", cmd_bug_delta, "Entropy delta (buggy - fixed) per snippet pair; CSV.",
                split=...)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--bpe", type=Path, required=True)
    p.add_argument("--pairs", type=Path, required=True, help="directory of <id>.buggy / <id>.fixed")
    p.add_argument("--language", type=parse_language)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("train", "adapt") and args.output is None:
            raise UsageError(f"{args.command} needs -o/--output")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except OvlmError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
