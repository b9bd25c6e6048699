"""Provenance record schema: origins, transformations and revisions of one image.

Records are immutable values. The ``append_*`` helpers return new records and
never touch their input; maps are exposed read-only so that no mutable state
is shared between an input record and its successor.
"""

from __future__ import annotations

import dataclasses
import math
import re
import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Literal, Mapping, Optional, Union

from .errors import (
    FidelityMismatch,
    InvalidRecord,
    MissingField,
    TimestampRegression,
    TimestampRegressionWarning,
    UnknownTargetVersion,
)
from .timeutil import is_utc_timestamp, normalize_timestamp, parse_iso, utcnow

Scalar = Union[str, int, float, bool, None]

AGENT_TYPES = ("person", "organization", "software")
FIDELITIES = ("real", "synthetic")
EVENT_TYPES = (
    "cleaning",
    "denoising",
    "resizing",
    "cropping",
    "normalization",
    "labeling",
    "feature-selection",
    "other",
)
REVISION_ACTIONS = ("add-data", "remove-data", "modify", "revert")
SPLITS = ("training", "validation", "testing")
RECORD_TYPE = "ImageObject"

# python attribute -> document key, in the order records are laid out
REQUIRED_FIELDS = {
    "name": "name",
    "creator": "creator",
    "method_of_collection": "methodOfCollection",
    "date_created": "dateCreated",
    "encoding_format": "encodingFormat",
    "fidelity": "fidelity",
}

PROPORTION_TOLERANCE = 1e-9
_DIGEST = re.compile(r"^sha256:[0-9a-f]{64}$")
_MIME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9!#$&^_.+-]*/[A-Za-z0-9][A-Za-z0-9!#$&^_.+-]*$")
_DECIMAL = re.compile(r"^[0-9]+$")
_EXTRA_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")
_ABS_IRI = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:\S+$")


def freeze(value):
    """Deep read-only copy of a JSON-like value (dicts -> mappingproxy, lists -> tuple)."""
    if isinstance(value, Mapping):
        return MappingProxyType({k: freeze(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    return value


def thaw(value):
    """Inverse of :func:`freeze`: plain dicts and lists."""
    if isinstance(value, Mapping):
        return {k: thaw(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [thaw(v) for v in value]
    return value


def _frozen_field():
    return field(default_factory=lambda: MappingProxyType({}))


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_scalar(x) -> bool:
    return x is None or isinstance(x, (str, bool)) or (_is_number(x) and math.isfinite(x))


def _is_count(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


@dataclass(frozen=True)
class Agent:
    name: str
    agent_type: Literal["person", "organization", "software"] = "person"
    identifier: Optional[str] = None


def person(name: str, identifier: Optional[str] = None) -> Agent:
    return Agent(name, "person", identifier)


@dataclass(frozen=True)
class GenerationParams:
    """Parameters of a synthetic image's generator run."""

    generator_version: str
    prompt: str
    seed: str
    steps: int
    sampler: str
    width: int
    height: int
    generator_name: Optional[str] = None
    extra: Mapping[str, Scalar] = _frozen_field()

    def __post_init__(self):
        object.__setattr__(self, "extra", freeze(self.extra))


@dataclass(frozen=True)
class Requirement:
    description: str
    identifier: Optional[str] = None


@dataclass(frozen=True)
class Annotation:
    """One labelled region. ``bbox`` entries may be numbers or symbolic placeholders."""

    class_name: str
    bbox: tuple = ()
    annotator: Optional[Agent] = None
    date_annotated: Optional[str] = None
    annotation_type: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(self.bbox))


@dataclass(frozen=True)
class Criterion:
    text: str
    agent: Optional[Agent] = None
    date: Optional[str] = None


@dataclass(frozen=True)
class TransformationEvent:
    event_type: str
    agent: Agent
    timestamp: str
    params: Mapping[str, Scalar] = _frozen_field()
    note: Optional[str] = None
    # revision version current when the event was appended (0 = before any revision)
    revision_version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "params", freeze(self.params))


@dataclass(frozen=True)
class Revision:
    version: int
    action: str
    agent: Agent
    timestamp: str
    target_version: Optional[int] = None
    note: Optional[str] = None


@dataclass(frozen=True)
class DatasetDescriptor:
    dataset_id: Optional[str] = None
    class_proportions: Mapping[str, float] = _frozen_field()
    split_proportions: Mapping[str, float] = _frozen_field()

    def __post_init__(self):
        object.__setattr__(self, "class_proportions", freeze(self.class_proportions))
        object.__setattr__(self, "split_proportions", freeze(self.split_proportions))


@dataclass(frozen=True)
class ProvenanceRecord:
    # required core; Optional only so that incomplete records can be validated
    name: Optional[str] = None
    creator: Optional[Agent] = None
    method_of_collection: Optional[str] = None
    date_created: Optional[str] = None
    encoding_format: Optional[str] = None
    fidelity: Optional[str] = None

    record_type: str = RECORD_TYPE
    # context entries beyond the defaults every record gets (IRI strings or term maps)
    context: tuple = ()
    source: Optional[str] = None
    capture_metadata: Mapping[str, Scalar] = _frozen_field()
    generation: Optional[GenerationParams] = None
    inclusion_criteria: tuple = ()
    exclusion_criteria: tuple = ()
    requirements: tuple = ()
    annotations: tuple = ()
    transformations: tuple = ()
    revisions: tuple = ()
    split: Optional[str] = None
    dataset: Optional[DatasetDescriptor] = None
    content_digest: Optional[str] = None
    # extra document members resolvable through ``context`` (compacted key -> JSON value)
    extensions: Mapping[str, Any] = _frozen_field()

    def __post_init__(self):
        for name in (
            "inclusion_criteria",
            "exclusion_criteria",
            "requirements",
            "annotations",
            "transformations",
            "revisions",
        ):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "context", freeze(tuple(self.context)))
        object.__setattr__(self, "capture_metadata", freeze(self.capture_metadata))
        object.__setattr__(self, "extensions", freeze(self.extensions))

    @property
    def current_version(self) -> int:
        return max((r.version for r in self.revisions), default=0)


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    severity: Literal["error", "warning"]
    code: str
    message: str
    path: str

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "error"]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "warning"]

    @property
    def valid(self) -> bool:
        return not self.errors

    def as_dict(self) -> dict:
        return {"valid": self.valid, "violations": [v.as_dict() for v in self.violations]}


class _Checker:
    def __init__(self, strict: bool):
        self.strict = strict
        self.found: list[Violation] = []

    def error(self, code, path, message):
        self.found.append(Violation("error", code, message, path))

    def warn(self, code, path, message):
        # strict mode promotes ordering and timestamp-form warnings
        self.found.append(Violation("error" if self.strict else "warning", code, message, path))

    def nonempty(self, value, path, what="value"):
        if not isinstance(value, str) or not value.strip():
            self.error("empty-string", path, f"{what} must be a non-empty string")
            return False
        return True

    def optional_str(self, value, path):
        if value is not None and not isinstance(value, str):
            self.error("bad-type", path, "expected a string")

    def timestamp(self, value, path):
        if not is_utc_timestamp(value):
            self.error("bad-timestamp", path, f"{value!r} is not an ISO 8601 timestamp with offset")
            return False
        if normalize_timestamp(value) != value:
            self.warn("timestamp-not-normalized", path, f"{value!r} is not in UTC 'Z' form")
        return True

    def enum(self, value, allowed, path):
        if value not in allowed:
            self.error("bad-enum", path, f"{value!r} not one of {list(allowed)}")
            return False
        return True

    def scalar_map(self, value, path):
        if not isinstance(value, Mapping):
            self.error("bad-type", path, "expected a key/value map")
            return
        for k, v in value.items():
            if not isinstance(k, str) or not k:
                self.error("bad-key", path, f"map key {k!r} must be a non-empty string")
            elif not _is_scalar(v):
                self.error("bad-type", f"{path}.{k}", "map values must be finite scalars")

    def agent(self, agent, path):
        if not isinstance(agent, Agent):
            self.error("bad-type", path, "expected an agent")
            return
        self.nonempty(agent.name, f"{path}.name", "agent name")
        self.enum(agent.agent_type, AGENT_TYPES, f"{path}.@type")
        if agent.identifier is not None and not (
            isinstance(agent.identifier, str) and _ABS_IRI.match(agent.identifier)
        ):
            self.error("relative-iri", f"{path}.@id", "agent identifier must be an absolute IRI")

    def proportions(self, mapping, path, label):
        if not isinstance(mapping, Mapping):
            self.error("bad-type", path, "expected a map of proportions")
            return
        if not mapping:
            return
        values = list(mapping.values())
        if not all(_is_number(v) and math.isfinite(v) and 0 <= v <= 1 for v in values):
            self.error("bad-proportion", path, f"{label} values must be numbers in [0, 1]")
            return
        total = math.fsum(values)
        if abs(total - 1.0) > PROPORTION_TOLERANCE:
            self.error("proportion-sum", path, f"{label} sum {total:g} ≠ 1.0")


def validate_record(record: ProvenanceRecord, mode: str = "lenient") -> ValidationReport:
    """Report every violated invariant of ``record`` and the values it contains.

    ``mode="strict"`` turns ordering and timestamp-form warnings into errors.
    Problems are reported, never raised.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown validation mode {mode!r}")
    c = _Checker(strict=mode == "strict")
    r = record

    for attr, key in REQUIRED_FIELDS.items():
        value = getattr(r, attr)
        if value is None or (isinstance(value, str) and not value.strip()):
            c.error("missing-field", key, f"required field {key} is missing")
            continue
        if attr == "creator":
            c.agent(value, key)
        elif attr == "date_created":
            c.timestamp(value, key)
        elif attr == "encoding_format":
            if not isinstance(value, str) or not _MIME.match(value):
                c.error("bad-mime", key, f"{value!r} is not a MIME type")
        elif attr == "fidelity":
            c.enum(value, FIDELITIES, key)
        elif not isinstance(value, str):
            c.error("bad-type", key, "expected a string")

    if r.record_type != RECORD_TYPE:
        c.error("bad-type", "@type", f"record type must be {RECORD_TYPE!r}")

    if r.fidelity == "synthetic" and r.generation is None:
        c.error("fidelity-mismatch", "flux:parameters", "synthetic records need generation parameters")
    elif r.fidelity == "real" and r.generation is not None:
        c.error("fidelity-mismatch", "flux:parameters", "real records must not carry generation parameters")

    if r.generation is not None:
        _check_generation(c, r.generation)

    c.optional_str(r.source, "source")
    c.scalar_map(r.capture_metadata, "captureMetadata")

    for key, items in (("inclusionCriteria", r.inclusion_criteria), ("exclusionCriteria", r.exclusion_criteria)):
        for i, crit in enumerate(items):
            p = f"{key}[{i}]"
            if not isinstance(crit, Criterion):
                c.error("bad-type", p, "expected a criterion")
                continue
            c.nonempty(crit.text, f"{p}.text", "criterion text")
            if crit.agent is not None:
                c.agent(crit.agent, f"{p}.agent")
            if crit.date is not None:
                c.timestamp(crit.date, f"{p}.date")

    for i, req in enumerate(r.requirements):
        p = f"requirements[{i}]"
        if not isinstance(req, Requirement):
            c.error("bad-type", p, "expected a requirement")
            continue
        c.nonempty(req.description, f"{p}.requirement", "requirement description")
        c.optional_str(req.identifier, f"{p}.identifier")

    for i, ann in enumerate(r.annotations):
        _check_annotation(c, ann, f"annotations[{i}]")

    _check_revisions(c, r.revisions)
    _check_transformations(c, r.transformations, {getattr(v, "version", None) for v in r.revisions})

    if r.split is not None:
        c.enum(r.split, SPLITS, "split")

    if r.dataset is not None:
        ds = r.dataset
        c.optional_str(ds.dataset_id, "dataset.datasetId")
        c.proportions(ds.class_proportions, "dataset.classProportions", "classProportions")
        c.proportions(ds.split_proportions, "dataset.splitProportions", "splitProportions")
        if isinstance(ds.split_proportions, Mapping):
            for k in ds.split_proportions:
                c.enum(k, SPLITS, f"dataset.splitProportions.{k}")

    if r.content_digest is not None and not (
        isinstance(r.content_digest, str) and _DIGEST.match(r.content_digest)
    ):
        c.error("bad-digest", "contentDigest", "expected 'sha256:' followed by 64 lowercase hex digits")

    for k in r.extensions:
        if not isinstance(k, str) or not k or k.startswith("@"):
            c.error("bad-key", "extensions", f"extension key {k!r} is not a usable term")

    return ValidationReport(tuple(c.found))


def _check_generation(c: _Checker, g: GenerationParams) -> None:
    base = "flux:parameters"
    c.nonempty(g.generator_version, "flux:version", "generator version")
    if g.generator_name is not None:
        c.nonempty(g.generator_name, "flux:generator", "generator name")
    if not isinstance(g.prompt, str):
        c.error("bad-type", f"{base}.prompt", "prompt must be a string")
    if not (isinstance(g.seed, str) and _DECIMAL.match(g.seed)):
        c.error("bad-seed", f"{base}.seed", "seed must be a non-empty string of decimal digits")
    if not isinstance(g.sampler, str):
        c.error("bad-type", f"{base}.sampler", "sampler must be a string")
    for name in ("steps", "width", "height"):
        v = getattr(g, name)
        if not _is_count(v) or v < 1:
            c.error("bad-count", f"{base}.{name}", f"{name} must be a positive integer")
    c.scalar_map(g.extra, base)
    for k in g.extra:
        if isinstance(k, str) and not _EXTRA_KEY.match(k):
            c.error("bad-key", f"{base}.{k}", f"extra parameter name {k!r} is not a plain identifier")


def _check_annotation(c: _Checker, ann, p: str) -> None:
    if not isinstance(ann, Annotation):
        c.error("bad-type", p, "expected an annotation")
        return
    c.nonempty(ann.class_name, f"{p}.class", "annotation class")
    box = ann.bbox
    if len(box) != 4 or not all(
        (_is_number(x) and math.isfinite(x)) or (isinstance(x, str) and x.strip()) for x in box
    ):
        c.error("bad-bbox", f"{p}.bbox", "bbox must hold four numbers or placeholders [x1, y1, x2, y2]")
    elif all(_is_number(x) for x in box):
        x1, y1, x2, y2 = box
        if x1 > x2 or y1 > y2:
            c.error("bad-bbox", f"{p}.bbox", f"bbox corners out of order: {list(box)}")
    if ann.annotator is not None:
        c.agent(ann.annotator, f"{p}.annotator")
    if ann.date_annotated is not None:
        c.timestamp(ann.date_annotated, f"{p}.dateAnnotated")
    c.optional_str(ann.annotation_type, f"{p}.annotationType")


def _check_transformations(c: _Checker, events, versions) -> None:
    last_time = None
    last_attr = 0
    for i, ev in enumerate(events):
        p = f"transformations[{i}]"
        if not isinstance(ev, TransformationEvent):
            c.error("bad-type", p, "expected a transformation event")
            continue
        c.enum(ev.event_type, EVENT_TYPES, f"{p}.eventType")
        c.agent(ev.agent, f"{p}.agent")
        if c.timestamp(ev.timestamp, f"{p}.timestamp"):
            t = parse_iso(ev.timestamp)
            if last_time is not None and t < last_time:
                c.warn("timestamp-regression", f"{p}.timestamp", "transformation is older than its predecessor")
            last_time = t if last_time is None else max(t, last_time)
        c.scalar_map(ev.params, f"{p}.params")
        c.optional_str(ev.note, f"{p}.note")
        rv = ev.revision_version
        if not _is_count(rv) or (rv != 0 and rv not in versions):
            c.error("bad-attribution", f"{p}.revisionVersion", f"revision version {rv!r} does not exist")
        elif rv < last_attr:
            c.error("bad-attribution", f"{p}.revisionVersion", "revision attribution goes backwards")
        else:
            last_attr = rv


def _check_revisions(c: _Checker, revisions) -> None:
    prev_version = 0
    seen: set[int] = set()
    last_time = None
    for i, rev in enumerate(revisions):
        p = f"revisions[{i}]"
        if not isinstance(rev, Revision):
            c.error("bad-type", p, "expected a revision")
            continue
        v = rev.version
        in_sequence = _is_count(v) and (v == 1 if i == 0 else v > prev_version)
        if not in_sequence:
            c.error("version-sequence", f"{p}.version", "revision versions must start at 1 and strictly increase")
        if _is_count(v):
            prev_version = max(prev_version, v)
        c.enum(rev.action, REVISION_ACTIONS, f"{p}.action")
        tv = rev.target_version
        if rev.action == "revert":
            if tv is None:
                c.error("missing-target", f"{p}.targetVersion", "revert revisions need a targetVersion")
            elif not _is_count(tv) or tv < 1 or (_is_count(v) and tv >= v):
                c.error("bad-target", f"{p}.targetVersion", "targetVersion must be a positive integer below version")
            elif tv not in seen:
                c.error("bad-target", f"{p}.targetVersion", f"targetVersion {tv} names no earlier revision")
        elif tv is not None:
            c.error("unexpected-target", f"{p}.targetVersion", "only revert revisions carry a targetVersion")
        c.agent(rev.agent, f"{p}.agent")
        if c.timestamp(rev.timestamp, f"{p}.timestamp"):
            t = parse_iso(rev.timestamp)
            if last_time is not None and t < last_time:
                c.warn("timestamp-regression", f"{p}.timestamp", "revision is older than its predecessor")
            last_time = t if last_time is None else max(t, last_time)
        c.optional_str(rev.note, f"{p}.note")
        if in_sequence:
            seen.add(v)


def ensure_valid(record: ProvenanceRecord, mode: str = "lenient") -> ValidationReport:
    report = validate_record(record, mode)
    if not report.valid:
        raise InvalidRecord(report)
    return report


# -- operations --------------------------------------------------------------


def new_record(
    *,
    name=None,
    creator=None,
    method_of_collection=None,
    date_created=None,
    encoding_format=None,
    fidelity=None,
    generation: Optional[GenerationParams] = None,
    **optional,
) -> ProvenanceRecord:
    """Start a provenance record from the origin of an image.

    The six core origin fields are required; any other :class:`ProvenanceRecord`
    field may be passed by keyword. Timestamps are normalized to UTC ``Z`` form.
    """
    core = dict(
        name=name,
        creator=creator,
        method_of_collection=method_of_collection,
        date_created=date_created,
        encoding_format=encoding_format,
        fidelity=fidelity,
    )
    for attr, key in REQUIRED_FIELDS.items():
        if core[attr] is None:
            raise MissingField(key)
    if fidelity == "synthetic" and generation is None:
        raise FidelityMismatch("synthetic records need generation parameters")
    if fidelity == "real" and generation is not None:
        raise FidelityMismatch("real records must not carry generation parameters")
    for forbidden in ("transformations", "revisions"):
        if optional.get(forbidden):
            raise TypeError(f"new records start with empty {forbidden}; use the append helpers")
    record = ProvenanceRecord(**core, generation=generation, **optional)
    record = normalize_record(record)
    ensure_valid(record)
    return record


def normalize_record(record: ProvenanceRecord) -> ProvenanceRecord:
    """Convert every timestamp in ``record`` to UTC ``Z`` form."""
    n = normalize_timestamp
    return dataclasses.replace(
        record,
        date_created=n(record.date_created),
        inclusion_criteria=[_replace_if(c, date=n(getattr(c, "date", None))) for c in record.inclusion_criteria],
        exclusion_criteria=[_replace_if(c, date=n(getattr(c, "date", None))) for c in record.exclusion_criteria],
        annotations=[
            _replace_if(a, date_annotated=n(getattr(a, "date_annotated", None))) for a in record.annotations
        ],
        transformations=[_replace_if(e, timestamp=n(getattr(e, "timestamp", None))) for e in record.transformations],
        revisions=[_replace_if(v, timestamp=n(getattr(v, "timestamp", None))) for v in record.revisions],
    )


def _replace_if(obj, **changes):
    if not dataclasses.is_dataclass(obj):
        return obj
    return dataclasses.replace(obj, **changes)


def append_transformation(
    record: ProvenanceRecord, event: TransformationEvent, *, strict: bool = True
) -> ProvenanceRecord:
    """Return ``record`` with ``event`` appended to its transformation log.

    The event is attributed to the record's current revision version. An event
    older than the previous one raises :class:`TimestampRegression` when
    ``strict``; otherwise a :class:`TimestampRegressionWarning` is issued.
    """
    event = dataclasses.replace(
        event,
        timestamp=normalize_timestamp(event.timestamp),
        revision_version=record.current_version,
    )
    if record.transformations:
        prev = parse_iso(record.transformations[-1].timestamp)
        cur = parse_iso(event.timestamp)
        if prev is not None and cur is not None and prev.tzinfo and cur.tzinfo and cur < prev:
            msg = f"event at {event.timestamp} precedes last event at {record.transformations[-1].timestamp}"
            if strict:
                raise TimestampRegression(msg)
            warnings.warn(msg, TimestampRegressionWarning, stacklevel=2)
    return dataclasses.replace(record, transformations=record.transformations + (event,))


def append_revision(
    record: ProvenanceRecord,
    action: str,
    agent: Agent,
    *,
    target_version: Optional[int] = None,
    note: Optional[str] = None,
    timestamp: Optional[str] = None,
) -> ProvenanceRecord:
    """Append a dataset revision numbered one past the current version."""
    if action not in REVISION_ACTIONS:
        raise ValueError(f"unknown revision action {action!r}")
    known = [r.version for r in record.revisions]
    if action == "revert":
        if target_version is None or target_version not in known:
            raise UnknownTargetVersion(target_version, known)
    elif target_version is not None:
        raise ValueError("target_version only applies to revert")
    rev = Revision(
        version=record.current_version + 1,
        action=action,
        agent=agent,
        timestamp=normalize_timestamp(timestamp or utcnow()),
        target_version=target_version,
        note=note,
    )
    return dataclasses.replace(record, revisions=record.revisions + (rev,))


def effective_view(record: ProvenanceRecord) -> ProvenanceRecord:
    """Resolve reverts: keep only transformations live in the final version.

    The live set for version ``v`` is the live set of the version it builds on
    (``v - 1``, or ``k`` for a revert to ``k``) plus the events appended while
    ``v`` was current. Revisions are kept as history.
    """
    ensure_valid(record)
    if not record.revisions:
        return record
    by_version: dict[int, list[int]] = {}
    for i, ev in enumerate(record.transformations):
        by_version.setdefault(ev.revision_version, []).append(i)
    live: dict[int, frozenset] = {0: frozenset(by_version.get(0, ()))}
    previous = 0
    for rev in record.revisions:
        base = rev.target_version if rev.action == "revert" else previous
        live[rev.version] = live[base] | frozenset(by_version.get(rev.version, ()))
        previous = rev.version
    keep = live[previous]
    events = [ev for i, ev in enumerate(record.transformations) if i in keep]
    return dataclasses.replace(record, transformations=events)
