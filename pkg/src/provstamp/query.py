"""Filter expressions over compacted provenance documents, plus dataset scans.

Grammar (lowest to highest precedence)::

    expr    := or
    or      := and ("or" and)*
    and     := unary ("and" unary)*
    unary   := "not" unary | primary
    primary := "(" expr ")" | "exists" "(" path ")" | path op literal
    op      := "==" | "!=" | "<" | "<=" | ">" | ">=" | "contains"
    literal := "double-quoted string" | number | "true" | "false"

A path is a dot-separated list of keys (``flux:parameters.steps``); ``[*]``
after a key ranges over the elements of an array and matches if any element
does. Evaluation never raises: missing paths and mismatched types are false.
"""

from __future__ import annotations

import json
import os
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from . import container, integrity
from .codec import parse, record_to_document
from .errors import MalformedJson, ProvstampError, QuerySyntaxError
from .jsonld import canonicalize, load_json
from .timeutil import as_utc, parse_iso

WILDCARD = "[*]"
COMPARISON_OPS = ("==", "!=", "<", "<=", ">", ">=", "contains")
ORDERING_OPS = ("<", "<=", ">", ">=")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


@dataclass(frozen=True)
class Compare:
    path: tuple
    op: str
    value: Union[str, int, float, bool]


@dataclass(frozen=True)
class Exists:
    path: tuple


Query = Union[Or, And, Not, Compare, Exists]


def format_query(node: Query) -> str:
    """Render an AST back to query text (fully parenthesized)."""
    if isinstance(node, (Or, And)):
        sep = " or " if isinstance(node, Or) else " and "
        return "(" + sep.join(format_query(n) for n in node.items) + ")"
    if isinstance(node, Not):
        return f"not {format_query(node.item)}"
    if isinstance(node, Exists):
        return f"exists({format_path(node.path)})"
    return f"{format_path(node.path)} {node.op} {json.dumps(node.value, ensure_ascii=False)}"


def format_path(path: tuple) -> str:
    out = ""
    for seg in path:
        if seg == WILDCARD:
            out += WILDCARD
        else:
            out += ("." if out else "") + seg
    return out


# -- lexer -------------------------------------------------------------------

_PATH = re.compile(r"[A-Za-z_@][A-Za-z0-9_@:\-]*(?:\[\*\])*(?:\.[A-Za-z_@][A-Za-z0-9_@:\-]*(?:\[\*\])*)*")
_NUM = re.compile(r"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_STRING = re.compile(r'"(?:[^"\\\x00-\x1f]|\\.)*"')
_KEYWORDS = ("and", "or", "not", "exists", "true", "false", "contains")


@dataclass
class _Token:
    kind: str  # "(", ")", "op", "path", "kw", "string", "number", "end"
    value: object
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "()":
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        two = text[i : i + 2]
        if two in ("==", "!=", "<=", ">="):
            tokens.append(_Token("op", two, i))
            i += 2
            continue
        if ch in "<>":
            tokens.append(_Token("op", ch, i))
            i += 1
            continue
        if ch == '"':
            m = _STRING.match(text, i)
            if m is None:
                raise QuerySyntaxError("unterminated string", _byte_offset(text, i), {"string"})
            try:
                value = json.loads(m.group())
            except json.JSONDecodeError:
                raise QuerySyntaxError("bad string escape", _byte_offset(text, i), {"string"}) from None
            tokens.append(_Token("string", value, i))
            i = m.end()
            continue
        m = _NUM.match(text, i)
        if m and (ch.isdigit() or ch == "-"):
            raw = m.group()
            value = float(raw) if any(c in raw for c in ".eE") else int(raw)
            tokens.append(_Token("number", value, i))
            i = m.end()
            continue
        m = _PATH.match(text, i)
        if m:
            word = m.group()
            if word in _KEYWORDS:
                tokens.append(_Token("op" if word == "contains" else "kw", word, i))
            else:
                tokens.append(_Token("path", _split_path(word), i))
            i = m.end()
            continue
        raise QuerySyntaxError(f"unexpected character {ch!r}", _byte_offset(text, i))
    tokens.append(_Token("end", None, n))
    return tokens


def _split_path(word: str) -> tuple:
    out = []
    for part in word.split("."):
        key, stars = part, 0
        while key.endswith(WILDCARD):
            key = key[: -len(WILDCARD)]
            stars += 1
        out.append(key)
        out.extend([WILDCARD] * stars)
    return tuple(out)


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


# -- parser ------------------------------------------------------------------

_LITERAL_EXPECT = {"string", "number", "true", "false"}
_PRIMARY_EXPECT = {"(", "not", "exists", "path"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, tok: _Token, expected, message=None):
        found = "end of input" if tok.kind == "end" else repr(self.text[tok.pos : tok.pos + 12])
        raise QuerySyntaxError(message or f"unexpected {found}", _byte_offset(self.text, tok.pos), expected)

    def is_kw(self, word) -> bool:
        tok = self.peek()
        return tok.kind == "kw" and tok.value == word

    def parse(self) -> Query:
        node = self.or_()
        tok = self.peek()
        if tok.kind != "end":
            self.error(tok, {"and", "or", "end of input"})
        return node

    def or_(self):
        items = [self.and_()]
        while self.is_kw("or"):
            self.take()
            items.append(self.and_())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def and_(self):
        items = [self.unary()]
        while self.is_kw("and"):
            self.take()
            items.append(self.unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def unary(self):
        if self.is_kw("not"):
            self.take()
            return Not(self.unary())
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok.kind == "(":
            self.take()
            node = self.or_()
            close = self.peek()
            if close.kind != ")":
                self.error(close, {")", "and", "or"})
            self.take()
            return node
        if tok.kind == "kw" and tok.value == "exists":
            self.take()
            if self.peek().kind != "(":
                self.error(self.peek(), {"("})
            self.take()
            path = self.peek()
            if path.kind != "path":
                self.error(path, {"path"})
            self.take()
            if self.peek().kind != ")":
                self.error(self.peek(), {")"})
            self.take()
            return Exists(path.value)
        if tok.kind == "path":
            self.take()
            op = self.peek()
            if op.kind != "op":
                self.error(op, set(COMPARISON_OPS))
            self.take()
            lit = self.peek()
            if lit.kind in ("string", "number"):
                value = lit.value
            elif lit.kind == "kw" and lit.value in ("true", "false"):
                value = lit.value == "true"
            else:
                self.error(lit, _LITERAL_EXPECT)
            self.take()
            if op.value in ORDERING_OPS and not (
                _is_number(value) or (isinstance(value, str) and parse_iso(value) is not None)
            ):
                self.error(lit, {"number", "timestamp"}, f"{op.value} needs a number or ISO 8601 timestamp")
            return Compare(tok.value, op.value, value)
        self.error(tok, _PRIMARY_EXPECT)


def parse_query(text: str) -> Query:
    """Parse filter-expression text; raises :class:`QuerySyntaxError`."""
    return _Parser(text).parse()


# -- evaluation --------------------------------------------------------------

_NUMERIC = re.compile(r"^\s*-?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?\s*$")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _as_number(x):
    """A number for numbers and numeric-looking strings, else None."""
    if _is_number(x):
        return x
    if isinstance(x, str) and _NUMERIC.match(x):
        s = x.strip()
        return float(s) if any(c in s for c in ".eE") else int(s)
    return None


def resolve(doc, path: tuple) -> list:
    """All values reachable from ``doc`` along ``path``."""
    current = [doc]
    for seg in path:
        nxt = []
        if seg == WILDCARD:
            for v in current:
                if isinstance(v, list):
                    nxt.extend(v)
        else:
            for v in current:
                if isinstance(v, dict) and seg in v:
                    nxt.append(v[seg])
        current = nxt
        if not current:
            break
    return current


def _equal(v, lit) -> Optional[bool]:
    """Equality, or None when the two values are not comparable."""
    if isinstance(lit, bool) or isinstance(v, bool):
        if isinstance(lit, bool) and isinstance(v, bool):
            return v == lit
        return None
    if _is_number(lit) or _is_number(v):
        a, b = _as_number(v), _as_number(lit)
        if a is None or b is None:
            return None
        return a == b
    if isinstance(v, str) and isinstance(lit, str):
        return v == lit
    return None


def _order(v, lit) -> Optional[int]:
    if isinstance(v, bool):
        return None
    if _is_number(lit):
        a = _as_number(v)
        if a is None:
            return None
        return (a > lit) - (a < lit)
    t_lit = parse_iso(lit) if isinstance(lit, str) else None
    t_v = parse_iso(v) if isinstance(v, str) else None
    if t_lit is None or t_v is None:
        return None
    a, b = as_utc(t_v), as_utc(t_lit)
    return (a > b) - (a < b)


def _compare_one(v, op: str, lit) -> bool:
    if op == "==":
        return _equal(v, lit) is True
    if op == "!=":
        return _equal(v, lit) is False
    if op == "contains":
        if isinstance(v, str):
            return isinstance(lit, str) and lit in v
        if isinstance(v, list):
            return any(_equal(x, lit) is True for x in v)
        return False
    c = _order(v, lit)
    if c is None:
        return False
    return {"<": c < 0, "<=": c <= 0, ">": c > 0, ">=": c >= 0}[op]


def eval_query(node: Query, doc) -> bool:
    if isinstance(node, Or):
        return any(eval_query(n, doc) for n in node.items)
    if isinstance(node, And):
        return all(eval_query(n, doc) for n in node.items)
    if isinstance(node, Not):
        return not eval_query(node.item, doc)
    if isinstance(node, Exists):
        return bool(resolve(doc, node.path))
    return any(_compare_one(v, node.op, node.value) for v in resolve(doc, node.path))


# -- dataset scans -----------------------------------------------------------


def iter_images(root) -> list[str]:
    """Image paths under ``root``, relative and ``/``-separated, sorted."""
    root = Path(root)
    found = []
    for dirpath, _, files in os.walk(root):
        for name in files:
            if name.lower().endswith(IMAGE_SUFFIXES):
                found.append((Path(dirpath) / name).relative_to(root).as_posix())
    return sorted(found)


@dataclass
class FileResult:
    path: str
    document: Optional[dict] = None
    digest_status: Optional[str] = None
    error: Optional[str] = None


def load_file(root, rel: str, *, with_digest: bool = False) -> FileResult:
    """Extract and parse (leniently) one image's provenance; errors are captured."""
    try:
        data = (Path(root) / rel).read_bytes()
        payload = container.extract(data)
        if payload is None:
            return FileResult(rel)
        record, _ = parse(payload, "lenient")
        status = integrity.verify(data).status.value if with_digest else None
        return FileResult(rel, record_to_document(record), status)
    except (OSError, ProvstampError) as exc:
        return FileResult(rel, error=f"{type(exc).__name__}: {exc}")


def load_tree(root, *, with_digest: bool = False, jobs: Optional[int] = None) -> list[FileResult]:
    paths = iter_images(root)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda p: load_file(root, p, with_digest=with_digest), paths))
    else:
        results = [load_file(root, p, with_digest=with_digest) for p in paths]
    return sorted(results, key=lambda r: r.path)


@dataclass
class ScanResult:
    matches: list = field(default_factory=list)  # (path, document)
    skipped: list = field(default_factory=list)  # paths without provenance
    errors: list = field(default_factory=list)  # (path, message)

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.matches]


def _as_ast(query) -> Query:
    return parse_query(query) if isinstance(query, str) else query


def scan(root, query, *, jobs: Optional[int] = None) -> ScanResult:
    """Images under ``root`` whose provenance satisfies ``query``, in path order."""
    ast = _as_ast(query)
    out = ScanResult()
    for res in load_tree(root, jobs=jobs):
        if res.error is not None:
            out.errors.append((res.path, res.error))
        elif res.document is None:
            out.skipped.append(res.path)
        elif eval_query(ast, res.document):
            out.matches.append((res.path, res.document))
    return out


def build_index(root, *, jobs: Optional[int] = None) -> tuple[bytes, list]:
    """Newline-delimited JSON index of every provenance-bearing image, plus per-file errors."""
    lines = []
    errors = []
    for res in load_tree(root, with_digest=True, jobs=jobs):
        if res.error is not None:
            errors.append((res.path, res.error))
        elif res.document is not None:
            entry = {"path": res.path, "record": res.document, "digestStatus": res.digest_status}
            lines.append(canonicalize(entry) + b"\n")
    return b"".join(lines), errors


def read_index(data: Union[bytes, str]) -> list[dict]:
    if isinstance(data, str):
        data = data.encode("utf-8")
    entries = []
    for n, line in enumerate(data.splitlines(), 1):
        if not line.strip():
            continue
        entry, _ = load_json(line)
        if not isinstance(entry, dict) or "path" not in entry or "record" not in entry:
            raise MalformedJson(f"index line {n} is not an index entry")
        entries.append(entry)
    return entries


def query_index(entries: Iterable[dict], query) -> list:
    ast = _as_ast(query)
    hits = [(e["path"], e["record"]) for e in entries if eval_query(ast, e["record"])]
    return sorted(hits, key=lambda h: h[0])


# -- summaries ---------------------------------------------------------------


@dataclass
class DatasetSummary:
    total_images: int = 0
    by_class: dict = field(default_factory=dict)
    by_split: dict = field(default_factory=dict)
    by_fidelity: dict = field(default_factory=dict)
    requirement_coverage: dict = field(default_factory=dict)
    missing_provenance: int = 0

    def as_dict(self) -> dict:
        return {
            "totalImages": self.total_images,
            "byClass": self.by_class,
            "bySplit": self.by_split,
            "byFidelity": self.by_fidelity,
            "requirementCoverage": self.requirement_coverage,
            "missingProvenance": self.missing_provenance,
        }


def summarize(documents: Iterable[Optional[dict]]) -> DatasetSummary:
    """Aggregate counts over documents; ``None`` stands for an image without provenance.

    Classes count once per annotation; requirements count once per image.
    """
    total = missing = 0
    classes, splits, fidelity, reqs = Counter(), Counter(), Counter(), Counter()
    for doc in documents:
        total += 1
        if doc is None:
            missing += 1
            continue
        for ann in doc.get("annotations", []):
            if isinstance(ann, dict) and isinstance(ann.get("class"), str):
                classes[ann["class"]] += 1
        if isinstance(doc.get("split"), str):
            splits[doc["split"]] += 1
        if isinstance(doc.get("fidelity"), str):
            fidelity[doc["fidelity"]] += 1
        seen = {
            r["requirement"]
            for r in doc.get("requirements", [])
            if isinstance(r, dict) and isinstance(r.get("requirement"), str)
        }
        reqs.update(seen)
    return DatasetSummary(
        total_images=total,
        by_class=dict(sorted(classes.items())),
        by_split=dict(sorted(splits.items())),
        by_fidelity=dict(sorted(fidelity.items())),
        requirement_coverage=dict(sorted(reqs.items())),
        missing_provenance=missing,
    )
