import os
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gen
import oracle
from provstamp import integrity, query
from provstamp.codec import record_to_document
from provstamp.errors import QuerySyntaxError
from provstamp.query import And, Compare, Exists, Not, Or, eval_query, parse_query, summarize
from provstamp.samples import dogs_record, tiny_png

DOGS = record_to_document(dogs_record())


# -- parsing ------------------------------------------------------------------


def test_parse_example():
    ast = parse_query('annotations[*].class == "Dog" and flux:parameters.steps >= 4')
    assert ast == And(
        (
            Compare(("annotations", "[*]", "class"), "==", "Dog"),
            Compare(("flux:parameters", "steps"), ">=", 4),
        )
    )
    assert parse_query("exists(contentDigest)") == Exists(("contentDigest",))


def test_precedence():
    a, b, c = (Exists((x,)) for x in "abc")
    assert parse_query("exists(a) or exists(b) and exists(c)") == Or((a, And((b, c))))
    assert parse_query("not exists(a) and exists(b)") == And((Not(a), b))
    assert parse_query("not (exists(a) or exists(b))") == Not(Or((a, b)))
    assert parse_query("not not exists(a)") == Not(Not(a))


@pytest.mark.parametrize(
    "text, offset, expected",
    [
        ("split == ", 9, {"string", "number", "true", "false"}),
        ("", 0, {"(", "not", "exists", "path"}),
        ("(exists(a)", 10, {")", "and", "or"}),
        ("exists(a) exists(b)", 10, {"and", "or", "end of input"}),
        ("a = 1", 2, None),
        ('a < "Dog"', 4, {"number", "timestamp"}),
        ("a contains", 10, {"string", "number", "true", "false"}),
        ('a == "unterminated', 5, {"string"}),
        ("é == 1", 0, None),
        ('"é" == 1', 0, {"(", "not", "exists", "path"}),
    ],
)
def test_syntax_errors(text, offset, expected):
    with pytest.raises(QuerySyntaxError) as exc:
        parse_query(text)
    assert exc.value.offset == offset
    if expected is not None:
        assert exc.value.expected == frozenset(expected)
    assert isinstance(exc.value, ValueError)


def test_offsets_are_bytes():
    with pytest.raises(QuerySyntaxError) as exc:
        parse_query('name == "ünï" and')
    assert exc.value.offset == len('name == "ünï" and'.encode())


def test_literals():
    assert parse_query("a == -1.5e3").value == -1500.0
    assert parse_query("a == true").value is True
    assert parse_query(r'a == "q\"é"').value == 'q"é'
    assert parse_query('a >= "2025-03-02"').value == "2025-03-02"


@settings(max_examples=300)
@given(st.integers(0, 2**32))
def test_format_parse_round_trip(seed):
    ast = gen.query_ast(random.Random(seed))
    assert parse_query(query.format_query(ast)) == ast


# -- evaluation -----------------------------------------------------------------


@pytest.mark.parametrize(
    "text, result",
    [
        ('annotations[*].class == "Dog"', True),
        ("flux:parameters.steps >= 4", True),
        ('flux:parameters.steps >= "4"', None),
        ("flux:parameters.seed == 140716430322376", True),
        ('dateCreated > "2025-03-02T10:00:00+01:00"', True),
        ('dateCreated < "2025-03-02"', False),
        ('dateCreated == "2025-03-02T09:31:00Z"', True),
        ("exists(nonexistent.path)", False),
        ('requirements[*].requirement contains "park"', True),
        ('annotations contains "Dog"', False),
        ('name != "x"', True),
        ("name != 3", False),
        ("fidelity == true", False),
        ("not exists(split)", True),
        ('creator.@type == "Person"', True),
        ("annotations[*] == 1", False),
        ("annotations.class == \"Dog\"", False),
    ],
)
def test_eval_on_golden(text, result):
    if result is None:
        with pytest.raises(QuerySyntaxError):
            parse_query(text)
        return
    assert eval_query(parse_query(text), DOGS) is result


def test_quoted_number_coercion():
    doc = {"steps": "4", "flags": [True, "1", 2], "n": 4, "b": True}
    assert eval_query(parse_query("steps >= 4"), doc)
    assert eval_query(parse_query("steps == 4.0"), doc)
    assert eval_query(parse_query('n == "4"'), doc)
    assert not eval_query(parse_query('steps == "4.0"'), doc)  # string vs string is exact
    assert eval_query(parse_query("flags contains 1"), doc)
    assert eval_query(parse_query("flags contains true"), doc)
    assert not eval_query(parse_query("b == 1"), doc)
    assert not eval_query(parse_query("b != 1"), doc)


def test_naive_timestamps_treated_as_utc():
    doc = {"t": "2025-03-02T09:31:00"}
    assert eval_query(parse_query('t == "2025-03-02T09:31:00"'), doc)
    assert eval_query(parse_query('t >= "2025-03-02T09:31:00Z"'), doc)
    assert eval_query(parse_query('t < "2025-03-02T10:31:00.5+01:00"'), doc)


def test_wildcard_is_existential():
    doc = {"xs": [{"v": 1}, {"v": 5}, {"w": 9}]}
    assert eval_query(parse_query("xs[*].v > 4"), doc)
    assert eval_query(parse_query("xs[*].v < 2"), doc)
    assert not eval_query(parse_query("xs[*].v > 5"), doc)
    assert eval_query(parse_query("xs[*].v != 1"), doc)
    assert eval_query(parse_query("exists(xs[*].w)"), doc)
    nested = {"m": [[1, 2], [3]]}
    assert eval_query(parse_query("m[*][*] == 3"), nested)


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 2**32))
def test_agrees_with_reference(seed):
    rng = random.Random(seed)
    ast, doc = gen.query_ast(rng), gen.document(rng)
    assert eval_query(ast, doc) == oracle.reference_eval(ast, doc)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_de_morgan(seed):
    rng = random.Random(seed)
    a, b, doc = gen.query_ast(rng), gen.query_ast(rng), gen.document(rng)
    assert eval_query(Not(And((a, b))), doc) == eval_query(Or((Not(a), Not(b))), doc)
    assert eval_query(Not(Or((a, b))), doc) == eval_query(And((Not(a), Not(b))), doc)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_eval_is_total(seed):
    rng = random.Random(seed)
    doc = gen.json_value(rng)  # not necessarily an object
    assert isinstance(eval_query(gen.query_ast(rng), doc), bool)


# -- scanning -----------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    made = gen.corpus(root, 60, seed=7)
    (root / "broken.png").write_bytes(tiny_png()[:-6])
    return root, made


def test_scan_small_example(tmp_path):
    records = [dogs_record(), dogs_record(), None]
    for name, rec in zip(["b.png", "a.png", "c.png"], records):
        img = tiny_png() if rec is None else integrity.seal(tiny_png(), rec)
        (tmp_path / name).write_bytes(img)
    result = query.scan(tmp_path, 'annotations[*].class == "Dog"')
    assert result.paths == ["a.png", "b.png"]
    assert result.skipped == ["c.png"]


def test_scan_empty_dir(tmp_path):
    result = query.scan(tmp_path, "exists(name)")
    assert result.matches == [] and result.errors == [] and result.skipped == []


def test_scan_all_valid_records(tmp_path):
    rng = random.Random(3)
    for i in range(20):
        (tmp_path / f"{i}.png").write_bytes(integrity.seal(gen.png(rng), gen.record(rng)))
    assert len(query.scan(tmp_path, "exists(name)").matches) == 20


def test_scan_matches_brute_force(corpus):
    root, made = corpus
    rng = random.Random(11)
    for _ in range(15):
        text = gen.record_query(rng)
        result = query.scan(root, text)
        assert result.paths == oracle.brute_force_scan(root, text)
    assert [p for p, _ in result.errors] == ["broken.png"]
    assert sorted(result.skipped) == sorted(p for p, r in made.items() if r is None)


def test_scan_parallel_is_identical(corpus):
    root, _ = corpus
    for text in gen.RECORD_QUERIES[:5]:
        a, b = query.scan(root, text), query.scan(root, text, jobs=4)
        assert a == b


def test_scan_order_independent_of_listing(corpus, monkeypatch):
    root, _ = corpus
    before = query.scan(root, "exists(name)").paths
    real_walk = os.walk

    def shuffled_walk(top, *a, **kw):
        for dirpath, dirs, files in real_walk(top, *a, **kw):
            files.reverse()
            dirs.reverse()
            yield dirpath, dirs, files

    monkeypatch.setattr(query.os, "walk", shuffled_walk)
    assert query.scan(root, "exists(name)").paths == before == sorted(before)


def test_index_equals_scan(corpus):
    root, made = corpus
    data, errors = query.build_index(root)
    assert [p for p, _ in errors] == ["broken.png"]
    entries = query.read_index(data)
    assert len(entries) == sum(r is not None for r in made.values())
    assert [e["path"] for e in entries] == sorted(e["path"] for e in entries)
    assert {e["digestStatus"] for e in entries} == {"OK"}
    for text in gen.RECORD_QUERIES:
        assert [p for p, _ in query.query_index(entries, text)] == query.scan(root, text).paths
    again, _ = query.build_index(root, jobs=3)
    assert again == data


# -- summaries ----------------------------------------------------------------


def test_summary_examples():
    docs = [{"split": s} for s in ["training", "training", "validation", "testing"]]
    assert summarize(docs).by_split == {"training": 2, "validation": 1, "testing": 1}
    assert summarize([DOGS]).by_class == {"Dog": 2}
    empty = summarize([]).as_dict()
    assert empty["totalImages"] == 0 and empty["missingProvenance"] == 0
    assert all(v == {} for k, v in empty.items() if k.startswith("by") or k == "requirementCoverage")


def test_requirement_coverage_counts_images():
    doc = {"requirements": [{"requirement": "r"}, {"requirement": "r"}]}
    assert summarize([doc, doc, None]).requirement_coverage == {"r": 2}
    assert summarize([doc, None]).missing_provenance == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_summary_invariants(seed):
    rng = random.Random(seed)
    docs = [record_to_document(gen.record(rng)) if rng.random() < 0.8 else None for _ in range(rng.randint(0, 15))]
    s = summarize(docs)
    assert s.total_images == len(docs)
    assert sum(s.by_split.values()) <= s.total_images
    assert sum(s.by_fidelity.values()) == s.total_images - s.missing_provenance
    assert sum(s.by_class.values()) == sum(len(d.get("annotations", [])) for d in docs if d)
