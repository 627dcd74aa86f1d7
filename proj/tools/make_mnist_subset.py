#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the `mnist` npm package.

The npm package (MIT, Juan Cazala) ships 10k MNIST digits as JSON with pixel
values already scaled to [0,1]. We take the first N digits of every class,
shuffle them with a fixed seed and write the standard big-endian IDX files.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist 200
"""
import json
import random
import struct
import sys
from pathlib import Path


def main() -> None:
    src, dst, per_class = Path(sys.argv[1]), Path(sys.argv[2]), int(sys.argv[3])
    samples = []
    for label in range(10):
        data = json.loads((src / f"{label}.json").read_text())["data"]
        for k in range(per_class):
            pix = data[784 * k: 784 * (k + 1)]
            samples.append((bytes(min(255, max(0, round(v * 255))) for v in pix), label))
    random.Random(20240501).shuffle(samples)
    dst.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with open(dst / "subset-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for pix, _ in samples:
            f.write(pix)
    with open(dst / "subset-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(label for _, label in samples))


if __name__ == "__main__":
    main()
