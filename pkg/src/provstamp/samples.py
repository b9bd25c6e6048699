"""Golden sample assets: the two-dogs provenance record and tiny generated images."""

from __future__ import annotations

import struct
import zlib

from .model import Annotation, GenerationParams, ProvenanceRecord, Requirement, new_record, person

DOG_PROMPT = (
    "A photo taken with a Nikon Z9 of two dogs playing in a vibrant dog park on a sunny afternoon."
)
DOG_REQUIREMENTS = (
    'The object detector shall detect a "Dog" class when the class is in a park setting',
    'The object detector shall detect a "Dog" class when there are 2 instances of the class in the image',
)
PLACEHOLDER_BBOX = ("x1", "y1", "x2", "y2")


def dogs_record() -> ProvenanceRecord:
    """The Flux-generated two-dogs record, with its arrays normalized to valid JSON."""
    return new_record(
        name="image_of_person",
        creator=person("Author 1"),
        method_of_collection="flux",
        date_created="2025-03-02T09:31:00Z",
        encoding_format="image/png",
        fidelity="synthetic",
        generation=GenerationParams(
            generator_version="flux1.schnell",
            prompt=DOG_PROMPT,
            seed="140716430322376",
            steps=4,
            sampler="euler_ancestral",
            width=1024,
            height=1024,
        ),
        requirements=[Requirement(text) for text in DOG_REQUIREMENTS],
        annotations=[Annotation("Dog", PLACEHOLDER_BBOX), Annotation("Dog", PLACEHOLDER_BBOX)],
    )


PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def png_chunk(kind: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data))


def tiny_png(width: int = 1, height: int = 1, rgb=(200, 120, 40), extra_chunks=()) -> bytes:
    """A valid 8-bit RGB PNG filled with one colour.

    ``extra_chunks`` are ``(type, data)`` pairs placed between IHDR and IDAT.
    """
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    row = b"\x00" + bytes(rgb) * width
    idat = zlib.compress(row * height, 9)
    out = PNG_SIGNATURE + png_chunk(b"IHDR", ihdr)
    for kind, data in extra_chunks:
        out += png_chunk(kind, data)
    return out + png_chunk(b"IDAT", idat) + png_chunk(b"IEND", b"")
