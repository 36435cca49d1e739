import io

import pytest

from ovlm.bpe import learn_bpe
from ovlm.corpus import (Pipeline, check_disjoint, load_manifest, parse_manifest, read_prepared,
                         read_units, write_prepared, write_units)
from ovlm.errors import OvlmError
from ovlm.lexer import Language, lex
from ovlm.vocab import PrepConfig


@pytest.fixture
def tree(tmp_path):
    for name in ("p1", "p2", "p3", "p4"):
        d = tmp_path / name
        d.mkdir()
        (d / "A.java").write_text(f"class {name.upper()} {{ int x = 1; }}\n")
    return tmp_path


def test_manifest_sections(tree):
    text = "language=JavaLike\n[train]\np1\n[bpe_train]\np4\n[validation]\np2\n[test]\np3\n"
    m = parse_manifest(text, tree)
    assert m.language is Language.JAVA
    assert m.projects("train") == [tree / "p1"]
    assert m.projects("valid") == [tree / "p2"]
    assert m.require("test") == [tree / "p3"]
    assert m.files("train") == [(tree / "p1", [tree / "p1" / "A.java"])]


def test_manifest_missing_path(tree):
    with pytest.raises(OvlmError) as e:
        parse_manifest("[train]\nnope\n", tree)
    assert e.value.code == "missing-path"
    with pytest.raises(OvlmError) as e:
        load_manifest(tree / "absent.txt")
    assert e.value.code == "missing-path"


def test_manifest_contaminated(tree):
    with pytest.raises(OvlmError) as e:
        parse_manifest("[train]\np1\n[test]\np1\n", tree)
    assert e.value.code == "contaminated-split"


def test_small_train_may_overlap_train(tree):
    m = parse_manifest("[train]\np1\n[small_train]\np1\n", tree)
    assert m.projects("small_train") == [tree / "p1"]


def test_overlap_detected_through_different_spellings(tree):
    with pytest.raises(OvlmError):
        check_disjoint({"train": [tree / "p1"], "test": [tree / "x" / ".." / "p1"]})


def test_empty_split(tree):
    m = parse_manifest("[train]\np1\n", tree)
    with pytest.raises(OvlmError) as e:
        m.require("test")
    assert e.value.code == "empty-split"


@pytest.mark.parametrize("text", ["[weird]\n", "p1\n"])
def test_bad_manifest(tree, text):
    with pytest.raises(OvlmError) as e:
        parse_manifest(text, tree)
    assert e.value.code == "bad-manifest"


def _pipeline():
    bpe = learn_bpe("int x = 1 ; class P { }".split() * 3, 10)
    return Pipeline.from_bpe(bpe, PrepConfig.lm_default())


def test_encoded_file_layout():
    f = _pipeline().encode_source("int x = 1;")
    assert f.tokens == ["int", "x", "=", "1", ";"]
    assert f.ids[0] == _pipeline().vocab.bos
    assert list(f.starts[1:]) == list(f.ends[:-1]) and f.ends[-1] == len(f.ids)
    assert list(f.identifier_mask) == [False, True, False, False, False]


def test_prepared_stream_roundtrip():
    pipe = _pipeline()
    toks = pipe.prepare(lex('int s = "a\tb";', Language.JAVA))
    buf = io.StringIO()
    write_prepared(buf, [("proj", "dir/A.java", toks), ("proj", "dir/B.java", toks[:2])])
    back = list(read_prepared(io.StringIO(buf.getvalue())))
    assert back == [("proj", "dir/A.java", toks), ("proj", "dir/B.java", toks[:2])]


def test_units_roundtrip(tree):
    pipe = _pipeline()
    projects = pipe.encode_projects([(tree / "p1", [tree / "p1" / "A.java"])])
    buf = io.StringIO()
    write_units(buf, projects, pipe.vocab)
    back = read_units(io.StringIO(buf.getvalue()), pipe.vocab)
    assert back[0].name == projects[0].name
    a, b = back[0].files[0], projects[0].files[0]
    assert a.tokens == b.tokens and list(a.ids) == list(b.ids)
