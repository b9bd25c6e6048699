"""Time embed/extract throughput and scan-vs-index queries on a synthetic dataset."""

import argparse
import dataclasses
import random
import statistics
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from provstamp import container, integrity, query
from provstamp.codec import serialize
from provstamp.model import Annotation, SPLITS
from provstamp.samples import dogs_record, tiny_png

CLASSES = ("Dog", "Cat", "Person", "Bicycle")
QUERIES = (
    'annotations[*].class == "Dog"',
    'split == "testing" and fidelity == "synthetic"',
    'dateCreated >= "2025-01-01T00:00:00Z"',
    'not exists(annotations) or annotations[*].class == "Cat"',
)


@dataclass
class BenchConfig:
    images: int = 500
    size: int = 64
    repeats: int = 5
    jobs: int = 4
    seed: int = 0


def make_record(rng: random.Random, i: int):
    base = dogs_record()
    anns = tuple(Annotation(rng.choice(CLASSES), (0, 0, 8, 8)) for _ in range(rng.randint(0, 4)))
    return dataclasses.replace(
        base,
        name=f"img_{i:05d}",
        date_created=f"202{rng.randint(3, 5)}-0{rng.randint(1, 9)}-1{rng.randint(0, 9)}T12:00:00Z",
        annotations=anns,
        split=rng.choice(SPLITS),
    )


def write_dataset(root: Path, cfg: BenchConfig) -> None:
    rng = random.Random(cfg.seed)
    for i in range(cfg.images):
        img = tiny_png(cfg.size, cfg.size, rgb=(i % 256, 40, 90))
        (root / f"{i:05d}.png").write_bytes(integrity.seal(img, make_record(rng, i)))


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(cfg: BenchConfig) -> list[tuple[str, float, str]]:
    rng = random.Random(cfg.seed)
    rows = []
    payloads = [serialize(make_record(rng, i)) for i in range(200)]
    image = tiny_png(cfg.size, cfg.size)
    sealed = [container.embed(image, p).data for p in payloads]

    t = best_of(lambda: [container.embed(image, p) for p in payloads], cfg.repeats)
    rows.append(("embed PNG", t / len(payloads) * 1e6, "us/image"))
    t = best_of(lambda: [container.extract(s) for s in sealed], cfg.repeats)
    rows.append(("extract PNG", t / len(sealed) * 1e6, "us/image"))
    t = best_of(lambda: [integrity.verify(s) for s in sealed], cfg.repeats)
    rows.append(("verify PNG", t / len(sealed) * 1e6, "us/image"))

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        write_dataset(root, cfg)
        t0 = time.perf_counter()
        data, _ = query.build_index(root, jobs=cfg.jobs)
        rows.append((f"build index ({cfg.images} images)", (time.perf_counter() - t0) * 1e3, "ms"))
        entries = query.read_index(data)
        scans, lookups = [], []
        for q in QUERIES:
            ast = query.parse_query(q)
            scans.append(best_of(lambda: query.scan(root, ast, jobs=cfg.jobs), cfg.repeats))
            lookups.append(best_of(lambda: query.query_index(entries, ast), cfg.repeats))
        rows.append(("query by scan (median)", statistics.median(scans) * 1e3, "ms"))
        rows.append(("query by index (median)", statistics.median(lookups) * 1e3, "ms"))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for f in dataclasses.fields(BenchConfig):
        ap.add_argument(f"--{f.name}", type=int, default=f.default)
    cfg = BenchConfig(**vars(ap.parse_args()))
    rows = run(cfg)
    width = max(len(r[0]) for r in rows)
    for name, value, unit in rows:
        print(f"{name:<{width}}  {value:10.2f} {unit}")


if __name__ == "__main__":
    main()
