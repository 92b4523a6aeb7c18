#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into gzipped IDX files.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main() -> None:
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        for i in range(0, len(flat), 784):
            pixels = bytes(min(255, max(0, round(x * 255))) for x in flat[i : i + 784])
            samples.append((pixels, digit))
    random.Random(20180913).shuffle(samples)
    n = len(samples)
    with gzip.GzipFile(dst / "train-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with gzip.GzipFile(dst / "train-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {dst}")


if __name__ == "__main__":
    main()
