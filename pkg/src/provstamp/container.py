"""Byte-exact provenance carriers inside PNG and JPEG files.

PNG: one ``iTXt`` chunk with keyword ``ProvenanceJSONLD`` placed before the
first ``IDAT``. JPEG: one or more ``APP1`` segments, each starting with the
16-byte signature ``PROV-JSONLD/1.0\\0`` followed by a big-endian segment index
and count, placed after the leading APP0/APP1 run. Pixel data is never decoded
or re-encoded; every other chunk or segment is copied byte for byte.
"""

from __future__ import annotations

import enum
import struct
import warnings
import zlib
from dataclasses import dataclass
from typing import Optional

from .errors import (
    BadCompression,
    CorruptContainer,
    DuplicateProvenanceWarning,
    EmptyPayload,
    IncompleteSegments,
    PayloadTooLarge,
    UnsupportedFormat,
)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PNG_KEYWORD = b"ProvenanceJSONLD"

JPEG_SOI = b"\xff\xd8"
JPEG_EOI = b"\xff\xd9"
APP0, APP1, SOS, EOI = 0xE0, 0xE1, 0xDA, 0xD9
JPEG_SIGNATURE = b"PROV-JSONLD/1.0\x00"
JPEG_HEADER_SIZE = len(JPEG_SIGNATURE) + 4
JPEG_MAX_PAYLOAD = 65533
JPEG_SEGMENT_CAPACITY = JPEG_MAX_PAYLOAD - JPEG_HEADER_SIZE  # 65513
# markers that stand alone (no length field)
_STANDALONE = {0x01, 0xD8, *range(0xD0, 0xD8)}


class ImageFormat(enum.Enum):
    PNG = "png"
    JPEG = "jpeg"
    UNKNOWN = "unknown"


def detect_format(data: bytes) -> ImageFormat:
    if data[:8] == PNG_SIGNATURE:
        return ImageFormat.PNG
    if data[:2] == JPEG_SOI:
        return ImageFormat.JPEG
    return ImageFormat.UNKNOWN


@dataclass(frozen=True)
class EmbedResult:
    data: bytes
    replaced_existing: bool
    segment_count: int


# -- PNG ---------------------------------------------------------------------


@dataclass(frozen=True)
class PngChunk:
    chunk_type: bytes
    data: bytes
    crc: int

    @property
    def length(self) -> int:
        return len(self.data)

    @classmethod
    def make(cls, chunk_type: bytes, data: bytes) -> "PngChunk":
        return cls(chunk_type, data, zlib.crc32(chunk_type + data))

    def to_bytes(self) -> bytes:
        return struct.pack(">I", len(self.data)) + self.chunk_type + self.data + struct.pack(">I", self.crc)


def parse_png(data: bytes) -> tuple[list[PngChunk], bytes]:
    """Split a PNG into chunks (CRC-checked) and any bytes trailing IEND."""
    if data[:8] != PNG_SIGNATURE:
        raise UnsupportedFormat("not a PNG file")
    chunks = []
    pos = 8
    n = len(data)
    while True:
        if pos + 12 > n:
            raise CorruptContainer(f"truncated chunk header at offset {pos}")
        (length,) = struct.unpack_from(">I", data, pos)
        kind = data[pos + 4 : pos + 8]
        if length > 0x7FFFFFFF or pos + 12 + length > n:
            raise CorruptContainer(f"chunk {kind!r} at offset {pos} runs past end of file")
        if not all(65 <= b <= 90 or 97 <= b <= 122 for b in kind):
            raise CorruptContainer(f"invalid chunk type {kind!r} at offset {pos}")
        body = data[pos + 8 : pos + 8 + length]
        (crc,) = struct.unpack_from(">I", data, pos + 8 + length)
        if zlib.crc32(kind + body) != crc:
            raise CorruptContainer(f"CRC mismatch in {kind.decode('ascii')} chunk at offset {pos}")
        chunks.append(PngChunk(kind, body, crc))
        pos += 12 + length
        if kind == b"IEND":
            break
    if chunks[0].chunk_type != b"IHDR":
        raise CorruptContainer("first chunk is not IHDR")
    return chunks, data[pos:]


def _is_png_provenance(chunk: PngChunk) -> bool:
    return chunk.chunk_type == b"iTXt" and chunk.data.split(b"\x00", 1)[0] == PNG_KEYWORD


def _itxt(payload: bytes, compress: bool) -> bytes:
    if compress:
        return PNG_KEYWORD + b"\x00\x01\x00" + b"\x00" + b"\x00" + zlib.compress(payload)
    return PNG_KEYWORD + b"\x00\x00\x00" + b"\x00" + b"\x00" + payload


def _itxt_text(chunk: PngChunk) -> bytes:
    body = chunk.data
    head = len(PNG_KEYWORD) + 1
    if len(body) < head + 2:
        raise CorruptContainer("iTXt chunk too short")
    flag, method = body[head], body[head + 1]
    rest = body[head + 2 :]
    try:
        lang_end = rest.index(b"\x00")
        trans_end = rest.index(b"\x00", lang_end + 1)
    except ValueError:
        raise CorruptContainer("iTXt chunk lacks language/translated keyword terminators") from None
    text = rest[trans_end + 1 :]
    if flag == 0:
        return text
    if flag != 1 or method != 0:
        raise BadCompression(f"unsupported iTXt compression flag {flag} / method {method}")
    try:
        return zlib.decompress(text)
    except zlib.error as exc:
        raise BadCompression(f"cannot inflate provenance text: {exc}") from None


def _png_embed(data: bytes, payload: bytes, compress: bool) -> EmbedResult:
    chunks, trailer = parse_png(data)
    kept = [c for c in chunks if not _is_png_provenance(c)]
    replaced = len(kept) != len(chunks)
    new = PngChunk.make(b"iTXt", _itxt(payload, compress))
    at = next((i for i, c in enumerate(kept) if c.chunk_type == b"IDAT"), len(kept) - 1)
    kept.insert(at, new)
    # unchanged chunks are re-emitted from their parsed bytes, which round-trip exactly
    out = PNG_SIGNATURE + b"".join(c.to_bytes() for c in kept) + trailer
    return EmbedResult(out, replaced, 1)


def _png_extract(data: bytes) -> Optional[bytes]:
    chunks, _ = parse_png(data)
    found = [c for c in chunks if _is_png_provenance(c)]
    if not found:
        return None
    if len(found) > 1:
        warnings.warn(
            f"{len(found)} provenance chunks present; using the first", DuplicateProvenanceWarning, stacklevel=3
        )
    return _itxt_text(found[0])


def _png_strip(data: bytes) -> bytes:
    chunks, trailer = parse_png(data)
    return PNG_SIGNATURE + b"".join(c.to_bytes() for c in chunks if not _is_png_provenance(c)) + trailer


# -- JPEG --------------------------------------------------------------------


@dataclass(frozen=True)
class JpegSegment:
    marker: int
    payload: bytes
    # fill bytes (0xFF) that preceded the marker, kept for byte-exact output
    fill: bytes = b""

    @property
    def length(self) -> int:
        return len(self.payload) + 2

    def to_bytes(self) -> bytes:
        return self.fill + bytes((0xFF, self.marker)) + struct.pack(">H", self.length) + self.payload


def parse_jpeg(data: bytes) -> tuple[list[JpegSegment], bytes]:
    """Split a JPEG into header segments (SOI excluded) and the tail from SOS on.

    The tail (scan headers, entropy-coded data, later markers, EOI) is opaque.
    """
    if data[:2] != JPEG_SOI:
        raise UnsupportedFormat("not a JPEG file")
    segments = []
    pos = 2
    n = len(data)
    while True:
        start = pos
        if pos >= n or data[pos] != 0xFF:
            raise CorruptContainer(f"expected a marker at offset {pos}")
        while pos < n and data[pos] == 0xFF:
            pos += 1
        if pos >= n:
            raise CorruptContainer("file ends inside a marker")
        marker = data[pos]
        pos += 1
        if marker == 0x00:
            raise CorruptContainer(f"stuffed byte outside entropy-coded data at offset {pos - 2}")
        if marker == SOS or marker == EOI:
            tail = data[start:]
            break
        if marker in _STANDALONE:
            raise CorruptContainer(f"unexpected standalone marker 0x{marker:02X} at offset {pos - 2}")
        if pos + 2 > n:
            raise CorruptContainer(f"truncated segment length at offset {pos}")
        (length,) = struct.unpack_from(">H", data, pos)
        if length < 2 or pos + length > n:
            raise CorruptContainer(f"segment 0x{marker:02X} at offset {start} is truncated")
        segments.append(JpegSegment(marker, data[pos + 2 : pos + length], data[start : pos - 2]))
        pos += length
    if JPEG_EOI not in tail:
        raise CorruptContainer("missing EOI marker")
    return segments, tail


def _is_jpeg_provenance(seg: JpegSegment) -> bool:
    return seg.marker == APP1 and seg.payload.startswith(JPEG_SIGNATURE)


def split_payload(payload: bytes) -> list[bytes]:
    """APP1 payloads carrying ``payload``, ``JPEG_SEGMENT_CAPACITY`` bytes at a time."""
    pieces = [payload[i : i + JPEG_SEGMENT_CAPACITY] for i in range(0, len(payload), JPEG_SEGMENT_CAPACITY)]
    total = len(pieces)
    if total > 0xFFFF:
        raise PayloadTooLarge(f"payload needs {total} segments; at most 65535 fit")
    return [JPEG_SIGNATURE + struct.pack(">HH", i, total) + piece for i, piece in enumerate(pieces)]


def _jpeg_embed(data: bytes, payload: bytes) -> EmbedResult:
    segments, tail = parse_jpeg(data)
    kept = [s for s in segments if not _is_jpeg_provenance(s)]
    replaced = len(kept) != len(segments)
    at = 0
    while at < len(kept) and kept[at].marker in (APP0, APP1):
        at += 1
    new = [JpegSegment(APP1, body) for body in split_payload(payload)]
    kept[at:at] = new
    out = JPEG_SOI + b"".join(s.to_bytes() for s in kept) + tail
    return EmbedResult(out, replaced, len(new))


def _jpeg_extract(data: bytes) -> Optional[bytes]:
    segments, _ = parse_jpeg(data)
    found = [s for s in segments if _is_jpeg_provenance(s)]
    if not found:
        return None
    parts: dict[int, bytes] = {}
    totals = set()
    for seg in found:
        if len(seg.payload) < JPEG_HEADER_SIZE:
            raise CorruptContainer("provenance segment shorter than its header")
        index, total = struct.unpack_from(">HH", seg.payload, len(JPEG_SIGNATURE))
        if index in parts:
            raise CorruptContainer(f"provenance segment {index} appears twice")
        parts[index] = seg.payload[JPEG_HEADER_SIZE:]
        totals.add(total)
    if len(totals) != 1:
        raise CorruptContainer(f"provenance segments disagree on their count: {sorted(totals)}")
    total = totals.pop()
    if any(i >= total for i in parts):
        raise CorruptContainer(f"provenance segment index out of range for count {total}")
    missing = set(range(total)) - set(parts)
    if missing:
        raise IncompleteSegments(missing, total)
    return b"".join(parts[i] for i in range(total))


def _jpeg_strip(data: bytes) -> bytes:
    segments, tail = parse_jpeg(data)
    return JPEG_SOI + b"".join(s.to_bytes() for s in segments if not _is_jpeg_provenance(s)) + tail


# -- public API --------------------------------------------------------------


def _format_or_raise(data: bytes) -> ImageFormat:
    fmt = detect_format(data)
    if fmt is ImageFormat.UNKNOWN:
        raise UnsupportedFormat("only PNG and JPEG files are supported")
    return fmt


def embed(image: bytes, payload: bytes, *, compress: bool = False) -> EmbedResult:
    """Store ``payload`` in ``image``, replacing any provenance already there.

    ``compress`` applies to PNG only (zlib-compressed iTXt text).
    """
    if not payload:
        raise EmptyPayload("refusing to embed an empty payload")
    if _format_or_raise(image) is ImageFormat.PNG:
        return _png_embed(image, payload, compress)
    return _jpeg_embed(image, payload)


def extract(image: bytes) -> Optional[bytes]:
    """The embedded payload, or None when the image carries no provenance."""
    if _format_or_raise(image) is ImageFormat.PNG:
        return _png_extract(image)
    return _jpeg_extract(image)


def strip(image: bytes) -> bytes:
    """``image`` with every provenance chunk or segment removed."""
    if _format_or_raise(image) is ImageFormat.PNG:
        return _png_strip(image)
    return _jpeg_strip(image)


def provenance_spans(image: bytes) -> list[tuple[int, int]]:
    """Byte ranges ``[start, end)`` occupied by provenance chunks or segments."""
    spans = []
    if _format_or_raise(image) is ImageFormat.PNG:
        chunks, _ = parse_png(image)
        pos = 8
        for c in chunks:
            size = 12 + c.length
            if _is_png_provenance(c):
                spans.append((pos, pos + size))
            pos += size
    else:
        segments, _ = parse_jpeg(image)
        pos = 2
        for s in segments:
            size = len(s.to_bytes())
            if _is_jpeg_provenance(s):
                spans.append((pos, pos + size))
            pos += size
    return spans
