"""Exception hierarchy shared by every provstamp module."""

from __future__ import annotations


class ProvstampError(Exception):
    """Base class for all errors raised by provstamp."""


# -- records -----------------------------------------------------------------


class RecordError(ProvstampError):
    pass


class MissingField(RecordError):
    def __init__(self, field: str):
        super().__init__(f"missing required field {field!r}")
        self.field = field


class FidelityMismatch(RecordError):
    pass


class TimestampRegression(RecordError):
    pass


class TimestampRegressionWarning(UserWarning):
    pass


class UnknownTargetVersion(RecordError):
    def __init__(self, target: int, known: list[int]):
        super().__init__(f"revert target version {target} does not exist (known: {known})")
        self.target = target
        self.known = known


class InvalidRecord(RecordError):
    def __init__(self, report):
        errors = report.errors
        head = "; ".join(f"{v.path}: {v.message}" for v in errors[:3])
        more = f" (+{len(errors) - 3} more)" if len(errors) > 3 else ""
        super().__init__(f"record is invalid: {head}{more}")
        self.report = report


# -- JSON / JSON-LD ----------------------------------------------------------


class JsonLdError(ProvstampError):
    pass


class MalformedJson(JsonLdError):
    pass


class DuplicateKey(MalformedJson):
    def __init__(self, key: str):
        super().__init__(f"duplicate object key {key!r}")
        self.key = key


class NonFiniteNumber(JsonLdError):
    pass


class UnknownTerm(JsonLdError):
    def __init__(self, terms):
        terms = list(terms)
        super().__init__("unresolvable term(s): " + ", ".join(repr(t) for t in terms))
        self.terms = terms


# expand() and parse() report the same condition
UnresolvableTerm = UnknownTerm


class UnknownContext(JsonLdError):
    def __init__(self, iri: str):
        super().__init__(f"context {iri!r} is not registered")
        self.iri = iri


class ConflictingContext(JsonLdError):
    pass


class RelativeIri(JsonLdError):
    pass


class SchemaViolation(JsonLdError):
    def __init__(self, message: str, fields=()):
        super().__init__(message)
        self.fields = list(fields)


# -- containers --------------------------------------------------------------


class ContainerError(ProvstampError):
    pass


class UnsupportedFormat(ContainerError):
    pass


class CorruptContainer(ContainerError):
    pass


class EmptyPayload(ContainerError):
    pass


class PayloadTooLarge(ContainerError):
    pass


class BadCompression(ContainerError):
    pass


class IncompleteSegments(ContainerError):
    def __init__(self, missing, total):
        missing = sorted(missing)
        super().__init__(f"missing provenance segment(s) {missing} of {total}")
        self.missing = missing
        self.total = total


class DuplicateProvenanceWarning(UserWarning):
    pass


# -- queries -----------------------------------------------------------------


class QuerySyntaxError(ProvstampError, ValueError):
    def __init__(self, message: str, offset: int, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"{message} at byte {offset}" + (f" (expected {exp})" if exp else ""))
