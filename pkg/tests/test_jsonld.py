import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provstamp import jsonld
from provstamp.errors import (
    ConflictingContext,
    DuplicateKey,
    JsonLdError,
    MalformedJson,
    RelativeIri,
    UnknownContext,
    UnknownTerm,
)
from provstamp.jsonld import (
    FLUX_IRI,
    SCHEMA_ORG,
    ActiveContext,
    ContextDeclaration,
    ContextRegistry,
    canonicalize,
    compact,
    default_context,
    expand,
    load_json,
)

DEFAULT = default_context(True)


def schema_terms():
    return sorted(jsonld.default_registry().lookup(SCHEMA_ORG))


def test_anchor_expansions():
    doc = {"@context": DEFAULT.to_json(), "dateCreated": "2025-03-02T09:31:00Z", "flux:version": "flux1.schnell"}
    out = expand(doc)
    assert out == {
        "https://schema.org/dateCreated": "2025-03-02T09:31:00Z",
        "https://example.org/flux#version": "flux1.schnell",
    }


# -- canonical form -----------------------------------------------------------


def test_canonical_sorts_keys_by_utf16_units():
    # U+E000 sorts before U+1F600 in UTF-16 (0xE000 < 0xD83D is false); check the real order
    doc = {"\U0001f600": 1, "": 2, "a": 3, "B": 4}
    out = canonicalize(doc).decode()
    keys = list(json.loads(out))
    assert keys == sorted(doc, key=lambda k: k.encode("utf-16-be"))
    assert keys == ["B", "a", "\U0001f600", ""]


@pytest.mark.parametrize(
    "value, text",
    [
        (1.0, "1"),
        (-0.0, "0"),
        (0.1, "0.1"),
        (1e21, "1e+21"),
        (1e20, "100000000000000000000"),
        (1.5e-7, "1.5e-7"),
        (0.000001, "0.000001"),
        (123456789012345680000.0, "123456789012345680000"),
        (True, "true"),
        (None, "null"),
        ("a \"\\", '"a \\"\\\\"'),
    ],
)
def test_canonical_scalars(value, text):
    assert canonicalize(value).decode() == text


def test_canonical_is_compact_and_utf8():
    assert canonicalize({"b": [1, {"z": 1, "a": "é"}], "a": None}) == '{"a":null,"b":[1,{"a":"é","z":1}]}'.encode()


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**60), 2**60) | st.floats(allow_nan=False, allow_infinity=False) | st.text(),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=5), children, max_size=4),
    max_leaves=20,
)


@settings(max_examples=300)
@given(json_values)
def test_canonical_is_a_fixed_point(value):
    once = canonicalize(value)
    parsed, _ = load_json(once)
    assert canonicalize(parsed) == once
    assert json.loads(once) == pytest.approx(value) if isinstance(value, float) else True


# -- JSON loading --------------------------------------------------------------


def test_duplicate_keys_strict_and_lenient():
    with pytest.raises(DuplicateKey):
        load_json('{"a": 1, "a": 2}')
    value, warnings = load_json('{"a": 1, "a": 2}', strict=False)
    assert value == {"a": 2} and len(warnings) == 1


@pytest.mark.parametrize("text", ["{", '{"a": NaN}', '{"a": Infinity}', "[1e999]", "\xff", ""])
def test_malformed_json(text):
    with pytest.raises(MalformedJson):
        load_json(text.encode("latin-1"))


# -- registry -----------------------------------------------------------------


def test_registry_is_offline_and_immutable():
    reg = ContextRegistry()
    reg2 = reg.register("https://example.com/ctx", {"thing": "https://example.com/v#thing"})
    assert "https://example.com/ctx" in reg2 and "https://example.com/ctx" not in reg
    with pytest.raises(UnknownContext):
        reg.lookup("https://example.com/ctx")
    assert reg2.register("https://example.com/ctx", {"thing": "https://example.com/v#thing"}) is reg2
    with pytest.raises(ConflictingContext):
        reg2.register("https://example.com/ctx", {"thing": "https://example.com/v#other"})
    with pytest.raises(RelativeIri):
        reg.register("ctx", {})
    with pytest.raises(RelativeIri):
        reg.register("https://example.com/c2", {"t": "relative/path"})


def test_unregistered_context_is_rejected():
    with pytest.raises(UnknownContext):
        expand({"@context": "https://nowhere.example/ctx", "a": 1})


def test_context_dir_environment(tmp_path, monkeypatch):
    (tmp_path / "lab.json").write_text(json.dumps({"@id": "https://lab.example/ctx", "@context": {"lens": "https://lab.example/v#lens"}}))
    monkeypatch.setenv(jsonld.CONTEXT_DIR_ENV, str(tmp_path))
    jsonld.reset_default_registry()
    try:
        out = expand({"@context": ["https://schema.org", "https://lab.example/ctx"], "lens": "50mm"})
        assert out == {"https://lab.example/v#lens": "50mm"}
    finally:
        monkeypatch.delenv(jsonld.CONTEXT_DIR_ENV)
        jsonld.reset_default_registry()


# -- expansion / compaction ---------------------------------------------------


def test_unknown_term_strict():
    with pytest.raises(UnknownTerm) as exc:
        expand({"@context": DEFAULT.to_json(), "name": "x", "mystery": 1})
    assert "mystery" in str(exc.value)
    assert expand({"@context": DEFAULT.to_json(), "mystery": 1}, strict=False) == {"mystery": 1}


def test_nested_context_rejected():
    with pytest.raises(JsonLdError):
        expand({"@context": DEFAULT.to_json(), "creator": {"@context": SCHEMA_ORG, "name": "x"}})


def test_json_literal_values_are_left_alone():
    doc = {"@context": DEFAULT.to_json(), "captureMetadata": {"iso": 400, "name": "kept"}}
    out = expand(doc)
    assert out == {"https://schema.org/captureMetadata": {"iso": 400, "name": "kept"}}
    assert compact(out, DEFAULT) == doc


def test_inline_prefix_and_absolute_keys():
    ctx = [SCHEMA_ORG, {"flux": FLUX_IRI, "ex": "https://ex.example/terms/"}]
    doc = {"@context": ctx, "ex:lens": 1, "https://other.example/p": 2, "urn:x:y": 3}
    out = expand(doc)
    assert out == {"https://ex.example/terms/lens": 1, "https://other.example/p": 2, "urn:x:y": 3}
    assert compact(out, ctx) == doc


def test_compaction_prefers_terms_then_longest_prefix():
    reg = ContextRegistry()
    ctx = [{"a": "https://x.example/", "ab": "https://x.example/deep/", "leaf": "https://x.example/deep/leaf"}]
    active = ActiveContext(ContextDeclaration.from_json(ctx), reg)
    assert active.compact_iri("https://x.example/deep/leaf") == "leaf"
    assert active.compact_iri("https://x.example/deep/other") == "ab:other"
    assert active.compact_iri("https://x.example/top") == "a:top"
    assert active.compact_iri("https://y.example/z") == "https://y.example/z"


def _oracle_expand(terms, key):
    if key in terms:
        return terms[key]
    prefix, colon, suffix = key.partition(":")
    if colon and prefix in terms and terms[prefix][-1] in ":/?#[]@" and not suffix.startswith("//"):
        return terms[prefix] + suffix
    return None


def test_compaction_exhaustive_small_contexts():
    """Every IRI over a tiny alphabet, under every small prefix set."""
    bases = ["https://e.x/", "https://e.x/a/", "https://e.x/a#", "https://e.x/ab/"]
    names = ["p", "q", "pp"]
    suffixes = ["", "a", "a/", "a#", "ab/", "ab/c", "a/c", "a#c", "c"]
    iris = sorted({"https://e.x/" + s for s in suffixes})
    checked = 0
    for n in range(1, 4):
        for chosen in itertools.permutations(bases, n):
            for nm in itertools.permutations(names, n):
                terms = dict(zip(nm, chosen))
                terms["t"] = "https://e.x/a/c"
                active = ActiveContext(ContextDeclaration.from_json([terms]), ContextRegistry())
                for iri in iris:
                    got = active.compact_iri(iri)
                    # round trip
                    assert (_oracle_expand(terms, got) or got) == iri
                    exact = sorted((len(t), t) for t, v in terms.items() if v == iri)
                    if exact:
                        assert got == exact[0][1]
                        continue
                    usable = [
                        (len(v), t)
                        for t, v in terms.items()
                        if v[-1] in ":/?#[]@" and iri.startswith(v) and len(iri) > len(v)
                        and _oracle_expand(terms, f"{t}:{iri[len(v):]}") == iri
                    ]
                    if usable:
                        best = max(n for n, _ in usable)
                        prefix = got.split(":", 1)[0]
                        assert prefix in terms and len(terms[prefix]) == best
                    else:
                        assert got == iri
                    checked += 1
    assert checked > 1000


def _doc(rng: random.Random, terms, depth=0):
    literal = {"captureMetadata", "params", "classProportions", "splitProportions"}
    out = {}
    if rng.random() < 0.3:
        out["@type"] = rng.choice(["ImageObject", "Person", "Organization"])
    if rng.random() < 0.1:
        out["@id"] = f"https://example.org/item/{rng.randint(0, 9)}"
    for _ in range(rng.randint(0, 5)):
        key = rng.choice(
            terms * 2 + [f"flux:{rng.choice(['version', 'parameters', 'seed', 'x_1', 'a-b'])}", "flux", "https://else.example/p", "urn:ex:thing"]
        )
        if key in literal:
            out[key] = {"any key": [1, {"@weird": True}], "n": rng.random()}
        elif depth < 2 and rng.random() < 0.3:
            out[key] = _doc(rng, terms, depth + 1)
        elif depth < 2 and rng.random() < 0.2:
            out[key] = [_doc(rng, terms, depth + 1) for _ in range(rng.randint(0, 2))] + [rng.randint(0, 5)]
        else:
            out[key] = rng.choice(["v", 1, 2.5, True, None, "flux:notakey", "2025-03-02T09:31:00Z"])
    return out


def test_compact_expand_round_trip_generated():
    terms = schema_terms()
    for seed in range(300):
        rng = random.Random(seed)
        d = {"@context": DEFAULT.to_json(), **_doc(rng, terms)}
        assert canonicalize(compact(expand(d), DEFAULT)) == canonicalize(d)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_expand_is_idempotent(seed):
    d = {"@context": DEFAULT.to_json(), **_doc(random.Random(seed), schema_terms())}
    once = expand(d)
    assert expand(once, strict=False) == once
