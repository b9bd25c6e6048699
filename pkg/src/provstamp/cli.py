"""``provstamp`` command line.

Exit codes: 0 success, 1 negative result (no match, invalid record, digest
mismatch, nothing embedded), 2 usage error, 3 I/O or format error. Data goes
to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import shutil
import sys
import tempfile
import warnings
from pathlib import Path
from typing import Optional

from . import container, integrity, jsonld, query
from .codec import event_from_dict, parse, serialize
from .errors import (
    ContainerError,
    JsonLdError,
    MalformedJson,
    ProvstampError,
    QuerySyntaxError,
    RecordError,
)
from .model import AGENT_TYPES, REVISION_ACTIONS, Agent, append_revision, append_transformation, validate_record

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    print(f"provstamp: {msg}", file=sys.stderr)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (OSError, ContainerError, MalformedJson)):
        return EXIT_IO
    if isinstance(exc, (RecordError, JsonLdError)):
        return EXIT_NEGATIVE
    return EXIT_IO


def write_atomic(path: Path, data: bytes, *, like: Optional[Path] = None) -> None:
    """Write ``data`` to ``path`` via a sibling temp file and ``os.replace``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        if like is not None and like.exists():
            shutil.copymode(like, tmp)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _read_input(source: str) -> bytes:
    if source == "-":
        return sys.stdin.buffer.read()
    return Path(source).read_bytes()


def _emit(data) -> None:
    if isinstance(data, bytes):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.write(b"\n")
    else:
        sys.stdout.write(data + "\n")
    sys.stdout.flush()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)


def _write_image(args, data: bytes) -> None:
    src = Path(args.image)
    target = src if args.in_place else Path(args.output)
    write_atomic(target, data, like=src)


def _load_record(image: bytes, mode: str = "lenient"):
    payload = container.extract(image)
    if payload is None:
        raise _Fail(EXIT_NEGATIVE, "image carries no provenance")
    record, warns = parse(payload, mode)
    for w in warns:
        _err(f"warning: {w.path or '(document)'}: {w.message}")
    return record


def _reseal(args, image: bytes, record) -> None:
    base = container.strip(image)
    if args.no_digest:
        record = dataclasses.replace(record, content_digest=None)
        out = container.embed(base, serialize(record), compress=args.compress).data
    else:
        out = integrity.seal(base, record, compress=args.compress)
    _write_image(args, out)


# -- subcommands -------------------------------------------------------------


def cmd_embed(args) -> int:
    image = Path(args.image).read_bytes()
    mode = "strict" if args.strict else "lenient"
    record, warns = parse(_read_input(args.provenance), mode)
    for w in warns:
        _err(f"warning: {w.path or '(document)'}: {w.message}")
    report = validate_record(record, mode)
    if not report.valid:
        for v in report.errors:
            _err(f"error: {v.path}: {v.message}")
        return EXIT_NEGATIVE
    if container.extract(image) is not None:
        _err("warning: replacing existing provenance")
    _reseal(args, image, record)
    return EXIT_OK


def cmd_extract(args) -> int:
    payload = container.extract(Path(args.image).read_bytes())
    if payload is None:
        _err("image carries no provenance")
        return EXIT_NEGATIVE
    if args.expanded:
        doc, _ = jsonld.load_json(payload, strict=False)
        expanded = jsonld.expand(doc, strict=False)
        _emit(_dump(expanded) if args.pretty else jsonld.canonicalize(expanded))
    elif args.pretty:
        try:
            record, _ = parse(payload, "lenient")
            text = serialize(record, "pretty")
        except ProvstampError:
            doc, _ = jsonld.load_json(payload, strict=False)
            text = _dump(doc)
        _emit(text)
    elif args.canonical:
        doc, _ = jsonld.load_json(payload, strict=False)
        _emit(jsonld.canonicalize(doc))
    else:
        _emit(payload)
    return EXIT_OK


def cmd_validate(args) -> int:
    mode = "strict" if args.strict else "lenient"
    payload = container.extract(Path(args.image).read_bytes())
    if payload is None:
        _err("image carries no provenance")
        return EXIT_NEGATIVE
    try:
        record, warns = parse(payload, mode)
    except (JsonLdError, RecordError) as exc:
        out = {"valid": False, "violations": [{"severity": "error", "code": type(exc).__name__, "message": str(exc), "path": ""}]}
        _emit(_dump(out))
        return EXIT_NEGATIVE
    report = validate_record(record, mode)
    out = report.as_dict()
    out["violations"] = [w.as_dict() for w in warns] + out["violations"]
    _emit(_dump(out))
    return EXIT_OK if report.valid else EXIT_NEGATIVE


def cmd_append(args) -> int:
    image = Path(args.image).read_bytes()
    record = _load_record(image)
    obj, _ = jsonld.load_json(_read_input(args.event))
    if not isinstance(obj, dict):
        raise _Fail(EXIT_NEGATIVE, "event must be a JSON object")
    event = event_from_dict(obj, strict=True)
    record = append_transformation(record, event, strict=not args.allow_regression)
    _reseal(args, image, record)
    return EXIT_OK


def cmd_revise(args) -> int:
    image = Path(args.image).read_bytes()
    record = _load_record(image)
    agent = Agent(args.agent, args.agent_type)
    record = append_revision(record, args.action, agent, target_version=args.to_version, note=args.note)
    _reseal(args, image, record)
    _err(f"now at version {record.current_version}")
    return EXIT_OK


def cmd_strip(args) -> int:
    image = Path(args.image).read_bytes()
    _write_image(args, container.strip(image))
    return EXIT_OK


def cmd_verify(args) -> int:
    report = integrity.verify(Path(args.image).read_bytes())
    _emit(_dump(report.as_dict()))
    return EXIT_OK if report.ok else EXIT_NEGATIVE


def _report_errors(errors) -> None:
    for path, msg in errors:
        _err(f"{path}: {msg}")


def cmd_query(args) -> int:
    try:
        ast = query.parse_query(args.where)
    except QuerySyntaxError as exc:
        _err(f"bad --where: {exc}")
        return EXIT_USAGE
    if args.index:
        hits = query.query_index(query.read_index(Path(args.index).read_bytes()), ast)
    else:
        result = query.scan(args.root, ast, jobs=args.jobs)
        _report_errors(result.errors)
        if result.skipped:
            _err(f"{len(result.skipped)} image(s) without provenance skipped")
        hits = result.matches
    for path, doc in hits:
        if args.format == "jsonl":
            _emit(jsonld.canonicalize({"path": path, "record": doc}))
        else:
            _emit(path)
    return EXIT_OK if hits else EXIT_NEGATIVE


def cmd_index(args) -> int:
    data, errors = query.build_index(args.root, jobs=args.jobs)
    _report_errors(errors)
    write_atomic(Path(args.out), data)
    _err(f"indexed {len(data.splitlines())} image(s)")
    return EXIT_OK


def cmd_summary(args) -> int:
    results = query.load_tree(args.root, jobs=args.jobs)
    _report_errors((r.path, r.error) for r in results if r.error)
    summary = query.summarize(r.document for r in results)
    _emit(_dump(summary.as_dict()))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Fail(EXIT_USAGE, message)


def _output_group(p, *, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--in-place", action="store_true", help="rewrite the input image")
    g.add_argument("--output", metavar="Q", help="write the result to Q")


def _sealing(p):
    p.add_argument("--compress", action="store_true", help="zlib-compress the PNG payload")
    p.add_argument("--no-digest", action="store_true", help="do not add contentDigest")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="provstamp", description="Embed, inspect and query image provenance.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="validate a record and seal it into an image")
    p.add_argument("--image", required=True)
    p.add_argument("--provenance", required=True, metavar="F", help="JSON-LD file, or - for stdin")
    p.add_argument("--strict", action="store_true")
    _sealing(p)
    _output_group(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="print the embedded payload")
    p.add_argument("--image", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--pretty", action="store_true")
    g.add_argument("--canonical", action="store_true")
    p.add_argument("--expanded", action="store_true", help="print with full IRIs")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("validate", help="check the embedded record")
    p.add_argument("--image", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("append", help="log a transformation event")
    p.add_argument("--image", required=True)
    p.add_argument("--event", required=True, metavar="F", help="event JSON file, or - for stdin")
    p.add_argument("--allow-regression", action="store_true", help="warn instead of failing on out-of-order timestamps")
    _sealing(p)
    _output_group(p)
    p.set_defaults(func=cmd_append)

    p = sub.add_parser("revise", help="record a dataset revision")
    p.add_argument("--image", required=True)
    p.add_argument("--action", required=True, choices=REVISION_ACTIONS)
    p.add_argument("--to-version", type=int, metavar="N", help="target version for revert")
    p.add_argument("--agent", required=True)
    p.add_argument("--agent-type", default="person", choices=AGENT_TYPES)
    p.add_argument("--note")
    _sealing(p)
    _output_group(p)
    p.set_defaults(func=cmd_revise)

    p = sub.add_parser("verify", help="check contentDigest against the image bytes")
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("query", help="filter a dataset by provenance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--root", metavar="D")
    src.add_argument("--index", metavar="F")
    p.add_argument("--where", required=True, metavar="EXPR")
    p.add_argument("--format", choices=("paths", "jsonl"), default="paths")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("index", help="write a JSONL index of a dataset")
    p.add_argument("--root", required=True, metavar="D")
    p.add_argument("--out", required=True, metavar="F")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("summary", help="class/split/fidelity counts for a dataset")
    p.add_argument("--root", required=True, metavar="D")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("strip", help="remove embedded provenance")
    p.add_argument("--image", required=True)
    _output_group(p)
    p.set_defaults(func=cmd_strip)
    return parser


def run(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _Fail as exc:
        _err(str(exc))
        return exc.code
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                return args.func(args)
            finally:
                for w in caught:
                    _err(f"warning: {w.message}")
    except _Fail as exc:
        _err(str(exc))
        return exc.code
    except (OSError, ProvstampError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return _exit_code(exc)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_NEGATIVE


def main() -> int:
    return run()


if __name__ == "__main__":
    sys.exit(main())
