#!/usr/bin/env python3
# Copyright 2026 The dfq Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the `mnist-subset` dataset as IDX files.

The source is the 5000-image MNIST sample (500 per digit) that ships inside
the mlxtend wheel. Per digit the first 400 images go to the training split
and the last 100 to the test split; both splits interleave classes
round-robin. Output is deterministic, so the C++ reader pins its digests.

    python3 tools/fetch_mnist_subset.py --out data
"""

import argparse
import gzip
import hashlib
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

WHEEL = "mlxtend==0.24.0"
MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN_PER_CLASS = 400
TEST_PER_CLASS = 100


def load_csv_bytes():
    try:
        import mlxtend.data  # noqa: F401

        path = os.path.join(os.path.dirname(mlxtend.data.__file__), "data",
                            "mnist_5k.csv.gz")
        if os.path.exists(path):
            with open(path, "rb") as f:
                return f.read()
    except ImportError:
        pass
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.check_call([
            sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d",
            tmp, WHEEL
        ])
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        with zipfile.ZipFile(os.path.join(tmp, wheel)) as z:
            return z.read(MEMBER)


def parse(raw):
    by_class = {c: [] for c in range(10)}
    for line in gzip.decompress(raw).decode().strip().splitlines():
        fields = line.split(",")
        pixels = bytes(int(float(v)) for v in fields[:-1])
        label = int(float(fields[-1]))
        assert len(pixels) == 784
        by_class[label].append(pixels)
    return by_class


def interleave(by_class, lo, hi):
    images, labels = [], []
    for i in range(lo, hi):
        for c in range(10):
            images.append(by_class[c][i])
            labels.append(c)
    return images, labels


def write_idx(path_images, path_labels, images, labels):
    with open(path_images, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for im in images:
            f.write(im)
    with open(path_labels, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.environ.get("DFQ_DATA_DIR", "data"))
    ap.add_argument("--if-missing", action="store_true",
                    help="do nothing when the split files already exist")
    args = ap.parse_args()

    out = os.path.join(args.out, "mnist-subset")
    if args.if_missing and os.path.exists(os.path.join(out, "SHA256SUMS")):
        print(f"{out} already present")
        return
    os.makedirs(out, exist_ok=True)
    by_class = parse(load_csv_bytes())
    for c, ims in by_class.items():
        assert len(ims) == TRAIN_PER_CLASS + TEST_PER_CLASS, (c, len(ims))

    train = interleave(by_class, 0, TRAIN_PER_CLASS)
    test = interleave(by_class, TRAIN_PER_CLASS,
                      TRAIN_PER_CLASS + TEST_PER_CLASS)
    write_idx(os.path.join(out, "train-images-idx3-ubyte"),
              os.path.join(out, "train-labels-idx1-ubyte"), *train)
    write_idx(os.path.join(out, "t10k-images-idx3-ubyte"),
              os.path.join(out, "t10k-labels-idx1-ubyte"), *test)

    with open(os.path.join(out, "SHA256SUMS"), "w") as sums:
        for name in sorted(os.listdir(out)):
            if name == "SHA256SUMS":
                continue
            with open(os.path.join(out, name), "rb") as f:
                sums.write(f"{hashlib.sha256(f.read()).hexdigest()}  {name}\n")
    print(f"wrote {len(train[1])} train / {len(test[1])} test images to {out}")


if __name__ == "__main__":
    main()
