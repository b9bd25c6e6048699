"""Provenance records for image datasets, carried inside the image files themselves."""

from .codec import parse, record_to_document, serialize
from .container import embed, extract, strip
from .integrity import DigestStatus, content_digest, seal, verify
from .model import (
    Agent,
    Annotation,
    Criterion,
    DatasetDescriptor,
    GenerationParams,
    ProvenanceRecord,
    Requirement,
    Revision,
    TransformationEvent,
    append_revision,
    append_transformation,
    effective_view,
    new_record,
    validate_record,
)
from .query import build_index, eval_query, parse_query, scan, summarize

__version__ = "0.1.0"
