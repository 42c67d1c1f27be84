#!/usr/bin/env python3
"""Builds the stratified point-MNIST fixture (gzipped IDX files).

Input is the digits directory of the MIT-licensed `mnist` npm package
(https://github.com/cazala/mnist, v1.1.0): one `<digit>.json` per class
holding `{"data": [...]}`, a flat list of 28x28 images with pixel values
in [0, 1]. Pixels are stored as round(v * 255).

    python3 scripts/make_mnist_fixture.py path/to/mnist/src/digits crates/core/tests/data
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

SIDE = 28


def images_of(path):
    flat = json.loads(Path(path).read_text())["data"]
    n = len(flat) // (SIDE * SIDE)
    return [flat[i * SIDE * SIDE:(i + 1) * SIDE * SIDE] for i in range(n)]


def write_idx(path, images, labels):
    with gzip.GzipFile(path.with_suffix(".images.idx.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in img))
    with gzip.GzipFile(path.with_suffix(".labels.idx.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train-per-class", type=int, default=200)
    ap.add_argument("--test-per-class", type=int, default=50)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = {"train": ([], []), "test": ([], [])}
    for digit in range(10):
        imgs = images_of(Path(args.digits_dir) / f"{digit}.json")
        a, b = args.train_per_class, args.test_per_class
        if len(imgs) < a + b:
            raise SystemExit(f"digit {digit}: only {len(imgs)} images")
        for name, part in (("train", imgs[:a]), ("test", imgs[a:a + b])):
            splits[name][0].extend(part)
            splits[name][1].extend([digit] * len(part))
    for name, (images, labels) in splits.items():
        write_idx(out / f"mnist-{name}", images, labels)
        print(f"{name}: {len(images)} images")


if __name__ == "__main__":
    main()
