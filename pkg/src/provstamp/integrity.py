"""Bind a provenance record to the exact file it describes.

The digest covers the whole file minus its provenance chunks/segments, so
storing the digest inside the file does not change it.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
from dataclasses import dataclass
from typing import Optional

from . import container
from .codec import serialize
from .errors import MalformedJson
from .jsonld import load_json
from .model import ProvenanceRecord


class DigestStatus(str, enum.Enum):
    OK = "OK"
    MODIFIED = "MODIFIED"
    MISSING_DIGEST = "MISSING_DIGEST"
    MISSING_PROVENANCE = "MISSING_PROVENANCE"


@dataclass(frozen=True)
class DigestReport:
    status: DigestStatus
    actual: str
    expected: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status is DigestStatus.OK

    def as_dict(self) -> dict:
        return {"status": self.status.value, "expected": self.expected, "actual": self.actual}


def content_digest(image: bytes) -> str:
    return "sha256:" + hashlib.sha256(container.strip(image)).hexdigest()


def seal(image: bytes, record: ProvenanceRecord, *, compress: bool = False) -> bytes:
    """Embed ``record`` with its ``content_digest`` set to the digest of ``image``."""
    sealed = dataclasses.replace(record, content_digest=content_digest(image))
    return container.embed(image, serialize(sealed, "canonical"), compress=compress).data


def verify(image: bytes) -> DigestReport:
    actual = content_digest(image)
    payload = container.extract(image)
    if payload is None:
        return DigestReport(DigestStatus.MISSING_PROVENANCE, actual)
    doc, _ = load_json(payload, strict=False)
    if not isinstance(doc, dict):
        raise MalformedJson("provenance payload is not a JSON object")
    expected = doc.get("contentDigest")
    if expected is None:
        return DigestReport(DigestStatus.MISSING_DIGEST, actual)
    status = DigestStatus.OK if expected == actual else DigestStatus.MODIFIED
    return DigestReport(status, actual, expected)
