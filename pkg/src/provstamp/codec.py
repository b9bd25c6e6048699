"""Map provenance records to and from compacted JSON-LD documents."""

from __future__ import annotations

import json
import re
from typing import Any, Mapping, Optional

from . import jsonld
from .errors import SchemaViolation, UnknownTerm
from .jsonld import FLUX_IRI, FLUX_PREFIX, SCHEMA_ORG, ContextDeclaration, ContextRegistry
from .model import (
    REQUIRED_FIELDS,
    Agent,
    Annotation,
    Criterion,
    DatasetDescriptor,
    GenerationParams,
    ProvenanceRecord,
    Requirement,
    Revision,
    TransformationEvent,
    Violation,
    ensure_valid,
    normalize_record,
    thaw,
)

AGENT_TYPE_NAMES = {"person": "Person", "organization": "Organization", "software": "SoftwareApplication"}
_AGENT_TYPES_BY_NAME = {v: k for k, v in AGENT_TYPE_NAMES.items()}

# legacy bare prefix IRI; concatenating onto it yields ".../fluxversion"
LEGACY_FLUX_IRI = "https://example.org/flux"

K_VERSION = f"{FLUX_PREFIX}:version"
K_PARAMS = f"{FLUX_PREFIX}:parameters"
K_GENERATOR = f"{FLUX_PREFIX}:generator"
_PARAM_KEYS = ("prompt", "seed", "steps", "sampler", "width", "height")

TOP_LEVEL_KEYS = (
    "@context",
    "@type",
    "name",
    "creator",
    "methodOfCollection",
    "dateCreated",
    "encodingFormat",
    "fidelity",
    "source",
    "captureMetadata",
    K_GENERATOR,
    K_VERSION,
    K_PARAMS,
    "inclusionCriteria",
    "exclusionCriteria",
    "requirements",
    "annotations",
    "transformations",
    "revisions",
    "split",
    "dataset",
    "contentDigest",
)

_NUMBER = re.compile(r"^-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?$")


# -- record -> document ------------------------------------------------------


def _agent_doc(agent: Agent) -> dict:
    out = {"@type": AGENT_TYPE_NAMES.get(agent.agent_type, agent.agent_type), "name": agent.name}
    if agent.identifier is not None:
        out["@id"] = agent.identifier
    return out


def _put(doc: dict, key: str, value) -> None:
    if value is not None:
        doc[key] = value


def _bbox_value(box):
    if all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in box):
        return list(box)
    return "[" + ", ".join(str(x) for x in box) + "]"


def record_context(record: ProvenanceRecord) -> ContextDeclaration:
    base = jsonld.default_context(record.generation is not None)
    extras = [e for e in record.context if e not in base.entries]
    return ContextDeclaration(base.entries + tuple(extras))


def record_to_document(record: ProvenanceRecord) -> dict:
    """Compacted JSON-LD document for ``record``, keys in presentation order."""
    r = record
    doc: dict[str, Any] = {"@context": record_context(r).to_json(), "@type": r.record_type}
    _put(doc, "name", r.name)
    if r.creator is not None:
        doc["creator"] = _agent_doc(r.creator)
    _put(doc, "methodOfCollection", r.method_of_collection)
    _put(doc, "dateCreated", r.date_created)
    _put(doc, "encodingFormat", r.encoding_format)
    _put(doc, "fidelity", r.fidelity)
    _put(doc, "source", r.source)
    if r.capture_metadata:
        doc["captureMetadata"] = thaw(r.capture_metadata)
    g = r.generation
    if g is not None:
        _put(doc, K_GENERATOR, g.generator_name)
        doc[K_VERSION] = g.generator_version
        params = {
            "prompt": g.prompt,
            "seed": g.seed,
            "steps": g.steps,
            "sampler": g.sampler,
            "width": g.width,
            "height": g.height,
        }
        for k, v in g.extra.items():
            params[f"{FLUX_PREFIX}:{k}"] = v
        doc[K_PARAMS] = params
    for key, items in (("inclusionCriteria", r.inclusion_criteria), ("exclusionCriteria", r.exclusion_criteria)):
        if items:
            out = []
            for c in items:
                item = {"text": c.text}
                if c.agent is not None:
                    item["agent"] = _agent_doc(c.agent)
                _put(item, "date", c.date)
                out.append(item)
            doc[key] = out
    if r.requirements:
        reqs = []
        for q in r.requirements:
            item = {"requirement": q.description}
            _put(item, "identifier", q.identifier)
            reqs.append(item)
        doc["requirements"] = reqs
    if r.annotations:
        anns = []
        for a in r.annotations:
            item = {"class": a.class_name, "bbox": _bbox_value(a.bbox)}
            if a.annotator is not None:
                item["annotator"] = _agent_doc(a.annotator)
            _put(item, "dateAnnotated", a.date_annotated)
            _put(item, "annotationType", a.annotation_type)
            anns.append(item)
        doc["annotations"] = anns
    if r.transformations:
        doc["transformations"] = [event_to_dict(e) for e in r.transformations]
    if r.revisions:
        revs = []
        for v in r.revisions:
            item = {"version": v.version, "action": v.action}
            _put(item, "targetVersion", v.target_version)
            item["agent"] = _agent_doc(v.agent)
            item["timestamp"] = v.timestamp
            _put(item, "note", v.note)
            revs.append(item)
        doc["revisions"] = revs
    _put(doc, "split", r.split)
    if r.dataset is not None:
        ds: dict[str, Any] = {}
        _put(ds, "datasetId", r.dataset.dataset_id)
        if r.dataset.class_proportions:
            ds["classProportions"] = thaw(r.dataset.class_proportions)
        if r.dataset.split_proportions:
            ds["splitProportions"] = thaw(r.dataset.split_proportions)
        doc["dataset"] = ds
    _put(doc, "contentDigest", r.content_digest)
    for k, v in r.extensions.items():
        if k in doc:
            raise SchemaViolation(f"extension {k!r} collides with a core member", [k])
        doc[k] = thaw(v)
    return doc


def event_to_dict(e: TransformationEvent) -> dict:
    item = {"eventType": e.event_type, "agent": _agent_doc(e.agent), "timestamp": e.timestamp}
    if e.params:
        item["params"] = thaw(e.params)
    _put(item, "note", e.note)
    if e.revision_version:
        item["revisionVersion"] = e.revision_version
    return item


def serialize(
    record: ProvenanceRecord,
    style: str = "canonical",
    registry: Optional[ContextRegistry] = None,
) -> bytes:
    """Encode a valid record as JSON-LD: canonical bytes or 2-space indented text."""
    ensure_valid(record)
    doc = record_to_document(record)
    if record.context or record.extensions:
        # custom members must stay resolvable, or parse() could not read them back
        jsonld.expand(doc, registry, strict=True)
    if style == "canonical":
        return jsonld.canonicalize(doc)
    if style == "pretty":
        return json.dumps(doc, indent=2, ensure_ascii=False, allow_nan=False).encode("utf-8")
    raise ValueError(f"unknown style {style!r}")


# -- document -> record ------------------------------------------------------


class _Reader:
    def __init__(self, strict: bool):
        self.strict = strict
        self.warnings: list[Violation] = []

    def warn(self, code: str, path: str, message: str) -> None:
        self.warnings.append(Violation("warning", code, message, path))

    def fail(self, path: str, message: str):
        raise SchemaViolation(f"{path}: {message}", [path])

    def obj(self, value, path) -> dict:
        if not isinstance(value, dict):
            self.fail(path, "expected an object")
        return value

    def members(self, obj: dict, allowed, path: str) -> None:
        extra = [k for k in obj if k not in allowed]
        if not extra:
            return
        if self.strict:
            self.fail(path, f"unexpected member(s) {extra}")
        for k in extra:
            self.warn("ignored-member", f"{path}.{k}" if path else k, f"member {k!r} is not part of the record schema")

    def string(self, obj, key, path, required=False) -> Optional[str]:
        if key not in obj:
            if required:
                self.fail(f"{path}.{key}" if path else key, "missing")
            return None
        value = obj[key]
        if not isinstance(value, str):
            self.fail(f"{path}.{key}" if path else key, "expected a string")
        return value

    def count(self, obj, key, path, required=False) -> Optional[int]:
        where = f"{path}.{key}" if path else key
        if key not in obj:
            if required:
                self.fail(where, "missing")
            return None
        value = obj[key]
        if isinstance(value, bool):
            self.fail(where, "expected an integer")
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, int):
            return value
        if isinstance(value, str) and re.fullmatch(r"-?[0-9]+", value.strip()):
            return int(value)
        self.fail(where, "expected an integer")

    def listing(self, obj, key, path) -> list:
        where = f"{path}.{key}" if path else key
        value = obj.get(key, [])
        if isinstance(value, dict):
            if self.strict:
                self.fail(where, "expected an array")
            self.warn("object-as-array", where, "single object read as a one-element array")
            return [value]
        if not isinstance(value, list):
            self.fail(where, "expected an array")
        return value

    def scalar_map(self, obj, key, path) -> dict:
        where = f"{path}.{key}" if path else key
        value = obj.get(key, {})
        if not isinstance(value, dict):
            self.fail(where, "expected an object")
        for k, v in value.items():
            if isinstance(v, (dict, list)):
                self.fail(f"{where}.{k}", "expected a scalar")
        return value

    def agent(self, value, path) -> Agent:
        obj = self.obj(value, path)
        self.members(obj, ("@type", "name", "@id"), path)
        type_name = obj.get("@type", "Person")
        if type_name not in _AGENT_TYPES_BY_NAME:
            self.fail(f"{path}.@type", f"unknown agent type {type_name!r}")
        return Agent(
            name=self.string(obj, "name", path, required=True),
            agent_type=_AGENT_TYPES_BY_NAME[type_name],
            identifier=self.string(obj, "@id", path),
        )

    def opt_agent(self, obj, key, path) -> Optional[Agent]:
        if key not in obj:
            return None
        return self.agent(obj[key], f"{path}.{key}")


def _bbox_from(value, path, reader: _Reader) -> tuple:
    if isinstance(value, str):
        text = value.strip()
        if not (text.startswith("[") and text.endswith("]")):
            reader.fail(path, "bbox string must look like '[x1, y1, x2, y2]'")
        items = [t.strip() for t in text[1:-1].split(",")]
        out = []
        for t in items:
            if _NUMBER.match(t):
                num = float(t)
                out.append(int(num) if num.is_integer() and re.fullmatch(r"-?[0-9]+", t) else num)
            else:
                out.append(t)
        return tuple(out)
    if isinstance(value, list):
        return tuple(value)
    reader.fail(path, "bbox must be an array or a bracketed string")


def _event(obj, path, reader: _Reader) -> TransformationEvent:
    obj = reader.obj(obj, path)
    reader.members(obj, ("eventType", "agent", "timestamp", "params", "note", "revisionVersion"), path)
    if "agent" not in obj:
        reader.fail(f"{path}.agent", "missing")
    return TransformationEvent(
        event_type=reader.string(obj, "eventType", path, required=True),
        agent=reader.agent(obj["agent"], f"{path}.agent"),
        timestamp=reader.string(obj, "timestamp", path, required=True),
        params=reader.scalar_map(obj, "params", path),
        note=reader.string(obj, "note", path),
        revision_version=reader.count(obj, "revisionVersion", path) or 0,
    )


def event_from_dict(obj: Mapping, *, strict: bool = False) -> TransformationEvent:
    """Read one transformation event; a bare string agent is taken as a person's name."""
    obj = dict(obj)
    if isinstance(obj.get("agent"), str):
        obj["agent"] = {"@type": "Person", "name": obj["agent"]}
    return _event(obj, "event", _Reader(strict))


def _generation(doc: dict, reader: _Reader) -> Optional[GenerationParams]:
    if K_PARAMS not in doc and K_VERSION not in doc and K_GENERATOR not in doc:
        return None
    version = reader.string(doc, K_VERSION, "", required=True)
    params = reader.obj(doc.get(K_PARAMS), K_PARAMS)
    extra = {}
    for k, v in params.items():
        if k in _PARAM_KEYS:
            continue
        if k.startswith(f"{FLUX_PREFIX}:"):
            if isinstance(v, (dict, list)):
                reader.fail(f"{K_PARAMS}.{k}", "extra parameters must be scalars")
            extra[k[len(FLUX_PREFIX) + 1:]] = v
        elif reader.strict:
            reader.fail(f"{K_PARAMS}.{k}", "unexpected member")
        else:
            reader.warn("ignored-member", f"{K_PARAMS}.{k}", f"member {k!r} is not part of the record schema")
    seed = params.get("seed")
    if isinstance(seed, int) and not isinstance(seed, bool):
        seed = str(seed)
    elif not isinstance(seed, str):
        reader.fail(f"{K_PARAMS}.seed", "expected a decimal string")
    prompt = reader.string(params, "prompt", K_PARAMS, required=True)
    sampler = reader.string(params, "sampler", K_PARAMS, required=True)
    return GenerationParams(
        generator_version=version,
        prompt=prompt,
        seed=seed,
        steps=reader.count(params, "steps", K_PARAMS, required=True),
        sampler=sampler,
        width=reader.count(params, "width", K_PARAMS, required=True),
        height=reader.count(params, "height", K_PARAMS, required=True),
        generator_name=reader.string(doc, K_GENERATOR, ""),
        extra=extra,
    )


def document_to_record(doc: dict, context_extras=(), *, strict: bool = True, reader=None) -> ProvenanceRecord:
    """Build a record from a document compacted against the default context."""
    reader = reader or _Reader(strict)
    missing = [key for key in REQUIRED_FIELDS.values() if key not in doc]
    if missing:
        raise SchemaViolation("missing required field(s): " + ", ".join(missing), missing)

    def criteria(key):
        out = []
        for i, item in enumerate(reader.listing(doc, key, "")):
            p = f"{key}[{i}]"
            item = reader.obj(item, p)
            reader.members(item, ("text", "agent", "date"), p)
            out.append(
                Criterion(
                    text=reader.string(item, "text", p, required=True),
                    agent=reader.opt_agent(item, "agent", p),
                    date=reader.string(item, "date", p),
                )
            )
        return out

    requirements = []
    for i, item in enumerate(reader.listing(doc, "requirements", "")):
        p = f"requirements[{i}]"
        item = reader.obj(item, p)
        reader.members(item, ("requirement", "identifier"), p)
        requirements.append(
            Requirement(
                description=reader.string(item, "requirement", p, required=True),
                identifier=reader.string(item, "identifier", p),
            )
        )

    annotations = []
    for i, item in enumerate(reader.listing(doc, "annotations", "")):
        p = f"annotations[{i}]"
        item = reader.obj(item, p)
        reader.members(item, ("class", "bbox", "annotator", "dateAnnotated", "annotationType"), p)
        if "bbox" not in item:
            reader.fail(f"{p}.bbox", "missing")
        annotations.append(
            Annotation(
                class_name=reader.string(item, "class", p, required=True),
                bbox=_bbox_from(item["bbox"], f"{p}.bbox", reader),
                annotator=reader.opt_agent(item, "annotator", p),
                date_annotated=reader.string(item, "dateAnnotated", p),
                annotation_type=reader.string(item, "annotationType", p),
            )
        )

    events = [_event(item, f"transformations[{i}]", reader) for i, item in enumerate(reader.listing(doc, "transformations", ""))]

    revisions = []
    for i, item in enumerate(reader.listing(doc, "revisions", "")):
        p = f"revisions[{i}]"
        item = reader.obj(item, p)
        reader.members(item, ("version", "action", "targetVersion", "agent", "timestamp", "note"), p)
        if "agent" not in item:
            reader.fail(f"{p}.agent", "missing")
        revisions.append(
            Revision(
                version=reader.count(item, "version", p, required=True),
                action=reader.string(item, "action", p, required=True),
                agent=reader.agent(item["agent"], f"{p}.agent"),
                timestamp=reader.string(item, "timestamp", p, required=True),
                target_version=reader.count(item, "targetVersion", p),
                note=reader.string(item, "note", p),
            )
        )

    dataset = None
    if "dataset" in doc:
        ds = reader.obj(doc["dataset"], "dataset")
        reader.members(ds, ("datasetId", "classProportions", "splitProportions"), "dataset")
        dataset = DatasetDescriptor(
            dataset_id=reader.string(ds, "datasetId", "dataset"),
            class_proportions=reader.scalar_map(ds, "classProportions", "dataset"),
            split_proportions=reader.scalar_map(ds, "splitProportions", "dataset"),
        )

    record_type = doc.get("@type", "ImageObject")
    if not isinstance(record_type, str):
        reader.fail("@type", "expected a string")

    extensions = {k: v for k, v in doc.items() if k not in TOP_LEVEL_KEYS}
    record = ProvenanceRecord(
        name=reader.string(doc, "name", "", required=True),
        creator=reader.agent(doc["creator"], "creator"),
        method_of_collection=reader.string(doc, "methodOfCollection", "", required=True),
        date_created=reader.string(doc, "dateCreated", "", required=True),
        encoding_format=reader.string(doc, "encodingFormat", "", required=True),
        fidelity=reader.string(doc, "fidelity", "", required=True),
        record_type=record_type,
        context=tuple(context_extras),
        source=reader.string(doc, "source", ""),
        capture_metadata=reader.scalar_map(doc, "captureMetadata", ""),
        generation=_generation(doc, reader),
        inclusion_criteria=criteria("inclusionCriteria"),
        exclusion_criteria=criteria("exclusionCriteria"),
        requirements=requirements,
        annotations=annotations,
        transformations=events,
        revisions=revisions,
        split=reader.string(doc, "split", ""),
        dataset=dataset,
        content_digest=reader.string(doc, "contentDigest", ""),
        extensions=extensions,
    )
    return normalize_record(record)


def _is_default_entry(entry) -> bool:
    return entry == SCHEMA_ORG or (isinstance(entry, Mapping) and dict(entry) == {FLUX_PREFIX: FLUX_IRI})


def parse(
    data,
    mode: str = "strict",
    registry: Optional[ContextRegistry] = None,
) -> tuple[ProvenanceRecord, list[Violation]]:
    """Decode a JSON-LD provenance document into a record plus warnings.

    Any spelling of the keys that expands to the same IRIs is accepted.
    ``strict`` rejects duplicate keys, unresolvable terms and unexpected
    members; ``lenient`` keeps going and reports them as warnings.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode {mode!r}")
    strict = mode == "strict"
    registry = registry or jsonld.default_registry()
    reader = _Reader(strict)

    doc, dupes = jsonld.load_json(data, strict=strict)
    for msg in dupes:
        reader.warn("duplicate-key", "", msg)
    if not isinstance(doc, dict):
        raise SchemaViolation("a provenance document must be a JSON object")

    if "@context" not in doc:
        if strict:
            raise SchemaViolation("document has no @context", ["@context"])
        reader.warn("missing-context", "@context", "no @context; assuming the default one")
        doc = {"@context": jsonld.default_context(True).to_json(), **doc}
    ctx = doc["@context"]
    entries = list(ctx) if isinstance(ctx, list) else [ctx]
    if not strict and isinstance(doc.get(FLUX_PREFIX), str) and jsonld.is_absolute_iri(doc[FLUX_PREFIX]):
        reader.warn("prefix-outside-context", FLUX_PREFIX, "top-level 'flux' prefix moved into @context")
        entries.append({FLUX_PREFIX: doc[FLUX_PREFIX]})
        doc = {k: v for k, v in doc.items() if k != FLUX_PREFIX}
    fixed = []
    for entry in entries:
        if isinstance(entry, dict) and LEGACY_FLUX_IRI in entry.values():
            reader.warn("flux-prefix", "@context", f"prefix IRI {LEGACY_FLUX_IRI} normalized to {FLUX_IRI}")
            entry = {k: (FLUX_IRI if v == LEGACY_FLUX_IRI else v) for k, v in entry.items()}
        fixed.append(entry)
    doc = {**doc, "@context": fixed if isinstance(ctx, list) or len(fixed) > 1 else fixed[0]}

    decl = ContextDeclaration.from_json(doc["@context"])
    expanded, unresolved = jsonld.expand_with_report(doc, registry, drop_unresolved=True)
    if unresolved:
        if strict:
            raise UnknownTerm(unresolved)
        for where in unresolved:
            term = where.rsplit(".", 1)[-1]
            reader.warn("unknown-term", where, f"term {term!r} is not defined by the @context; dropped")

    extras = tuple(e for e in decl.entries if not _is_default_entry(e))
    full = ContextDeclaration(jsonld.default_context(True).entries + extras)
    compacted = jsonld.compact(expanded, full, registry)
    compacted.pop("@context", None)
    record = document_to_record(compacted, extras, strict=strict, reader=reader)
    return record, reader.warnings


def parse_document(doc: Mapping, mode: str = "strict", registry=None):
    """Like :func:`parse` for an already-decoded JSON object."""
    return parse(json.dumps(doc, ensure_ascii=False, allow_nan=False), mode, registry)
