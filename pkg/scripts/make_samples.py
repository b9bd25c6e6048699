"""Regenerate the files in samples/: the golden two-dogs record and a sealed PNG."""

import argparse
import struct
import zlib
from pathlib import Path

from provstamp import integrity
from provstamp.codec import serialize
from provstamp.samples import PNG_SIGNATURE, dogs_record, png_chunk


def gradient_png(size: int = 32) -> bytes:
    rows = b"".join(
        b"\x00" + b"".join(bytes((x * 255 // (size - 1), y * 255 // (size - 1), 128)) for x in range(size))
        for y in range(size)
    )
    ihdr = struct.pack(">IIBBBBB", size, size, 8, 2, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + png_chunk(b"IHDR", ihdr)
        + png_chunk(b"IDAT", zlib.compress(rows, 9))
        + png_chunk(b"IEND", b"")
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "samples")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    record = dogs_record()
    (args.out / "dogs_record.json").write_bytes(serialize(record, "pretty") + b"\n")
    image = gradient_png()
    (args.out / "blank.png").write_bytes(image)
    (args.out / "dogs.png").write_bytes(integrity.seal(image, record))
    print(f"wrote samples to {args.out}")


if __name__ == "__main__":
    main()
