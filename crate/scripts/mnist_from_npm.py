#!/usr/bin/env python3
"""Convert the 10,000-digit MNIST subset shipped in the `mnist` npm package
(src/digits/<d>.json, pixels pre-scaled to [0,1] with 3 decimals) into a
gzipped IDX image/label pair.

usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import gzip
import json
import os
import struct
import sys


def main(src, dst):
    images, labels = bytearray(), bytearray()
    count = 0
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            flat = json.load(fh)["data"]
        assert len(flat) % 784 == 0
        for v in flat:
            images.append(max(0, min(255, round(v * 255))))
        n = len(flat) // 784
        labels.extend([digit] * n)
        count += n
    os.makedirs(dst, exist_ok=True)
    with gzip.GzipFile(os.path.join(dst, "mnist10k-images-idx3-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x803, count, 28, 28))
        fh.write(images)
    with gzip.GzipFile(os.path.join(dst, "mnist10k-labels-idx1-ubyte.gz"), "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x801, count))
        fh.write(labels)
    print(count)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
