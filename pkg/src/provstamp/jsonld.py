"""A restricted, offline JSON-LD profile plus canonical JSON.

Supported: ``@context`` given as an IRI, an inline term map or a list of both;
the ``@type`` and ``@id`` keywords; plain terms; compact IRIs (``prefix:suffix``);
and JSON-literal properties (``"@type": "@json"``) declared by registered
contexts. Contexts are never fetched: every context IRI must be registered.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Union

from .errors import (
    ConflictingContext,
    DuplicateKey,
    JsonLdError,
    MalformedJson,
    NonFiniteNumber,
    RelativeIri,
    UnknownContext,
    UnresolvableTerm,
)

KEYWORDS = frozenset({"@context", "@type", "@id"})
SCHEMA_ORG = "https://schema.org"
FLUX_PREFIX = "flux"
FLUX_IRI = "https://example.org/flux#"
CONTEXT_DIR_ENV = "PROVSTAMP_CONTEXT_DIR"

_ABSOLUTE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:[^\s]+$")
# schemes whose IRIs have no "//" authority but are still absolute
_OPAQUE_SCHEMES = frozenset({"urn", "mailto", "tag", "did", "data", "uuid"})
_GEN_DELIMS = tuple(":/?#[]@")


def is_absolute_iri(value) -> bool:
    return isinstance(value, str) and bool(_ABSOLUTE.match(value))


# -- canonical JSON ----------------------------------------------------------


def _format_number(x) -> str:
    if isinstance(x, int):
        return str(x)
    if not math.isfinite(x):
        raise NonFiniteNumber(f"{x!r} cannot be represented in JSON")
    if x == 0:
        return "0"
    # ECMAScript Number::toString over the shortest round-trip digits
    sign = "-" if x < 0 else ""
    mantissa, _, exp = repr(abs(x)).partition("e")
    whole, _, frac = mantissa.partition(".")
    raw = whole + frac
    digits = raw.lstrip("0")
    # value == 0.<digits> * 10**n
    n = len(whole) + int(exp or 0) - (len(raw) - len(digits))
    digits = digits.rstrip("0")
    k = len(digits)
    if k <= n <= 21:
        out = digits + "0" * (n - k)
    elif 0 < n <= 21:
        out = digits[:n] + "." + digits[n:]
    elif -6 < n <= 0:
        out = "0." + "0" * (-n) + digits
    else:
        e = n - 1
        head = digits[0] + ("." + digits[1:] if k > 1 else "")
        out = f"{head}e{'+' if e > 0 else '-'}{abs(e)}"
    return sign + out


def _utf16_key(key: str) -> bytes:
    return key.encode("utf-16-be", "surrogatepass")


def _encode(value, out: list) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, (int, float)):
        out.append(_format_number(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, Mapping):
        out.append("{")
        for i, key in enumerate(sorted(value, key=_utf16_key)):
            if not isinstance(key, str):
                raise JsonLdError(f"object key {key!r} is not a string")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    else:
        raise JsonLdError(f"{type(value).__name__} is not a JSON value")


def canonicalize(doc) -> bytes:
    """Canonical UTF-8 bytes: keys sorted by UTF-16 code units, no whitespace, minimal escapes."""
    out: list[str] = []
    _encode(doc, out)
    try:
        return "".join(out).encode("utf-8")
    except UnicodeEncodeError as exc:
        raise JsonLdError(f"string is not valid Unicode: {exc}") from None


def load_json(data: Union[bytes, str], *, strict: bool = True) -> tuple[Any, list[str]]:
    """Parse JSON text, rejecting (strict) or reporting (lenient) duplicate keys.

    Returns the value and a list of duplicate-key warnings. In lenient mode the
    last occurrence of a duplicated key wins.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"payload is not UTF-8: {exc}") from None
    dupes: list[str] = []

    def pairs(items):
        obj = {}
        for key, value in items:
            if key in obj:
                if strict:
                    raise DuplicateKey(key)
                dupes.append(key)
            obj[key] = value
        return obj

    def bad_constant(name):
        raise MalformedJson(f"{name} is not valid JSON")

    def finite_float(text):
        value = float(text)
        if not math.isfinite(value):
            raise MalformedJson(f"number {text} overflows")
        return value

    try:
        value = json.loads(
            data,
            object_pairs_hook=pairs,
            parse_constant=bad_constant,
            parse_float=finite_float,
        )
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{exc.msg} at line {exc.lineno} column {exc.colno}") from None
    except RecursionError:
        raise MalformedJson("document nests too deeply") from None
    return value, [f"duplicate key {k!r}; keeping the last occurrence" for k in dupes]


# -- contexts ----------------------------------------------------------------


@dataclass(frozen=True)
class TermDef:
    iri: str
    json_literal: bool = False


def _term_defs(terms: Mapping, *, allow_literals: bool) -> dict[str, TermDef]:
    if not isinstance(terms, Mapping):
        raise JsonLdError("a context must map terms to IRIs")
    defs = {}
    for term, value in terms.items():
        if not isinstance(term, str) or not term or term.startswith("@") or ":" in term:
            raise JsonLdError(f"invalid term name {term!r}")
        literal = False
        if isinstance(value, Mapping) and allow_literals:
            if set(value) - {"@id", "@type"} or value.get("@type", "@json") != "@json":
                raise JsonLdError(f"unsupported term definition for {term!r}")
            literal = value.get("@type") == "@json"
            value = value.get("@id")
        if not is_absolute_iri(value):
            raise RelativeIri(f"term {term!r} maps to {value!r}, which is not an absolute IRI")
        defs[term] = TermDef(value, literal)
    return defs


class ContextRegistry:
    """Offline map from context IRI to its term definitions.

    Registries are immutable: :meth:`register` returns an extended copy.
    """

    def __init__(self, contexts: Mapping[str, Mapping[str, TermDef]] | None = None):
        self._contexts = MappingProxyType(
            {iri: MappingProxyType(dict(defs)) for iri, defs in (contexts or {}).items()}
        )
        self._literals = frozenset(
            d.iri for defs in self._contexts.values() for d in defs.values() if d.json_literal
        )

    def register(self, iri: str, terms: Mapping) -> "ContextRegistry":
        if not is_absolute_iri(iri):
            raise RelativeIri(f"context IRI {iri!r} is not absolute")
        defs = _term_defs(terms, allow_literals=True)
        existing = self._contexts.get(iri)
        if existing is not None:
            if dict(existing) != defs:
                raise ConflictingContext(f"context {iri!r} is already registered with different terms")
            return self
        return ContextRegistry({**self._contexts, iri: defs})

    def lookup(self, iri: str) -> Mapping[str, TermDef]:
        try:
            return self._contexts[iri]
        except KeyError:
            raise UnknownContext(iri) from None

    def __contains__(self, iri) -> bool:
        return iri in self._contexts

    def __iter__(self):
        return iter(self._contexts)

    def is_json_literal(self, iri: str) -> bool:
        return iri in self._literals

    def register_file(self, path) -> "ContextRegistry":
        doc, _ = load_json(Path(path).read_bytes())
        if not isinstance(doc, dict) or "@id" not in doc or not isinstance(doc.get("@context"), dict):
            raise JsonLdError(f"{path}: context files need '@id' and an '@context' object")
        return self.register(doc["@id"], doc["@context"])

    def register_dir(self, directory) -> "ContextRegistry":
        reg = self
        for path in sorted(Path(directory).glob("*.json")):
            reg = reg.register_file(path)
        return reg


def register_context(registry: ContextRegistry, iri: str, terms: Mapping) -> ContextRegistry:
    return registry.register(iri, terms)


def bundled_registry() -> ContextRegistry:
    """Registry holding the contexts shipped in ``provstamp/contexts``."""
    reg = ContextRegistry()
    folder = resources.files("provstamp") / "contexts"
    for entry in sorted(folder.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            doc, _ = load_json(entry.read_bytes())
            reg = reg.register(doc["@id"], doc["@context"])
    return reg


_DEFAULT: ContextRegistry | None = None


def default_registry() -> ContextRegistry:
    """Bundled contexts plus any found in ``$PROVSTAMP_CONTEXT_DIR``."""
    global _DEFAULT
    if _DEFAULT is None:
        reg = bundled_registry()
        extra = os.environ.get(CONTEXT_DIR_ENV)
        if extra:
            reg = reg.register_dir(extra)
        _DEFAULT = reg
    return _DEFAULT


def reset_default_registry() -> None:
    global _DEFAULT
    _DEFAULT = None


@dataclass(frozen=True)
class ContextDeclaration:
    """The ``@context`` of a document: IRIs and inline term maps, in order."""

    entries: tuple
    as_list: bool = True

    @classmethod
    def from_json(cls, value) -> "ContextDeclaration":
        if isinstance(value, list):
            entries, as_list = value, True
        else:
            entries, as_list = [value], False
        norm = []
        for entry in entries:
            if isinstance(entry, str):
                if not is_absolute_iri(entry):
                    raise RelativeIri(f"context {entry!r} is not an absolute IRI")
                norm.append(entry)
            elif isinstance(entry, Mapping):
                _term_defs(entry, allow_literals=False)
                norm.append(MappingProxyType(dict(entry)))
            else:
                raise JsonLdError(f"unsupported @context entry {entry!r}")
        return cls(tuple(norm), as_list)

    def to_json(self):
        items = [e if isinstance(e, str) else dict(e) for e in self.entries]
        if not self.as_list and len(items) == 1:
            return items[0]
        return items


def default_context(with_flux: bool) -> ContextDeclaration:
    entries = [SCHEMA_ORG]
    if with_flux:
        entries.append(MappingProxyType({FLUX_PREFIX: FLUX_IRI}))
    return ContextDeclaration(tuple(entries))


class ActiveContext:
    def __init__(self, declaration: ContextDeclaration | None, registry: ContextRegistry):
        self.registry = registry
        self.terms: dict[str, str] = {}
        if declaration is not None:
            for entry in declaration.entries:
                defs = registry.lookup(entry) if isinstance(entry, str) else _term_defs(entry, allow_literals=False)
                for term, d in defs.items():
                    self.terms[term] = d.iri
        self.prefixes = {t: iri for t, iri in self.terms.items() if iri.endswith(_GEN_DELIMS)}
        inverse: dict[str, str] = {}
        for term, iri in self.terms.items():
            cur = inverse.get(iri)
            if cur is None or (len(term), term) < (len(cur), cur):
                inverse[iri] = term
        self.inverse = inverse
        # longest prefix IRI first; ties by IRI, then term
        self.prefix_order = sorted(self.prefixes.items(), key=lambda kv: (-len(kv[1]), kv[1], kv[0]))

    def expand_key(self, key: str) -> str | None:
        if key in self.terms:
            return self.terms[key]
        if ":" in key:
            prefix, suffix = key.split(":", 1)
            if prefix in self.prefixes and not suffix.startswith("//"):
                return self.prefixes[prefix] + suffix
            if is_absolute_iri(key) and (suffix.startswith("//") or prefix.lower() in _OPAQUE_SCHEMES):
                return key
        return None

    def compact_iri(self, iri: str) -> str:
        term = self.inverse.get(iri)
        if term is not None:
            return term
        for term, prefix_iri in self.prefix_order:
            if iri.startswith(prefix_iri) and len(iri) > len(prefix_iri):
                suffix = iri[len(prefix_iri):]
                candidate = f"{term}:{suffix}"
                if not suffix.startswith("//") and self.expand_key(candidate) == iri:
                    return candidate
        return iri


class _Expander:
    def __init__(self, active: ActiveContext, drop_unresolved: bool = False):
        self.active = active
        self.drop_unresolved = drop_unresolved
        self.unresolved: list[str] = []

    def value(self, value, path):
        if isinstance(value, dict):
            return self.obj(value, path)
        if isinstance(value, list):
            return [self.value(v, f"{path}[{i}]") for i, v in enumerate(value)]
        return value

    def obj(self, obj: dict, path: str) -> dict:
        out = {}
        for key, value in obj.items():
            where = f"{path}.{key}" if path else key
            if key.startswith("@"):
                if key == "@context":
                    if path:
                        raise JsonLdError(f"{where}: nested @context is not supported")
                    continue
                if key not in KEYWORDS:
                    raise JsonLdError(f"{where}: keyword {key} is not supported")
                out[key] = value
                continue
            iri = self.active.expand_key(key)
            if iri is None:
                self.unresolved.append(where)
                if self.drop_unresolved:
                    continue
                iri = key
            if iri in out:
                raise JsonLdError(f"{where}: two keys expand to {iri}")
            if self.active.registry.is_json_literal(iri):
                out[iri] = value
            else:
                out[iri] = self.value(value, where)
        return out


def active_context(doc: Mapping, registry: ContextRegistry) -> ActiveContext:
    decl = ContextDeclaration.from_json(doc["@context"]) if "@context" in doc else None
    return ActiveContext(decl, registry)


def expand_with_report(
    doc, registry: ContextRegistry | None = None, *, drop_unresolved: bool = False
) -> tuple[dict, list[str]]:
    """Expand leniently; return the document and the paths of unresolvable keys.

    Unresolvable keys are kept verbatim unless ``drop_unresolved`` is set.
    """
    if not isinstance(doc, dict):
        raise JsonLdError("only JSON objects can be expanded")
    registry = registry or default_registry()
    exp = _Expander(active_context(doc, registry), drop_unresolved)
    out = exp.obj(doc, "")
    return out, exp.unresolved


def expand(doc, registry: ContextRegistry | None = None, *, strict: bool = True) -> dict:
    """Replace every non-keyword key with its absolute IRI and drop ``@context``.

    Unresolvable keys raise :class:`UnresolvableTerm` when ``strict``; otherwise
    they are kept verbatim.
    """
    out, unresolved = expand_with_report(doc, registry)
    if strict and unresolved:
        raise UnresolvableTerm(unresolved)
    return out


def compact(doc, context, registry: ContextRegistry | None = None) -> dict:
    """Rewrite IRI keys of an expanded document to terms or compact IRIs under ``context``.

    ``context`` is a :class:`ContextDeclaration` or a raw ``@context`` value.
    IRIs with no matching term or prefix stay absolute.
    """
    if not isinstance(doc, dict):
        raise JsonLdError("only JSON objects can be compacted")
    registry = registry or default_registry()
    decl = context if isinstance(context, ContextDeclaration) else ContextDeclaration.from_json(context)
    active = ActiveContext(decl, registry)

    def value(v):
        if isinstance(v, dict):
            return obj(v)
        if isinstance(v, list):
            return [value(x) for x in v]
        return v

    def obj(o: dict) -> dict:
        out = {}
        for key, v in o.items():
            if key in KEYWORDS:
                if key != "@context":
                    out[key] = v
                continue
            short = active.compact_iri(key)
            if short in out:
                raise JsonLdError(f"two IRIs compact to {short!r}")
            out[short] = v if registry.is_json_literal(key) else value(v)
        return out

    return {"@context": decl.to_json(), **obj(doc)}
