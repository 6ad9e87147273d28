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
"""Recompute a bn-cnn teacher's test accuracy without the C++ code path.

Reads the IDX test split directly, resizes/normalizes with NumPy and runs the
forward pass in float64 NumPy. torch is only used to open the checkpoint
archive. Exit status 0 when the count matches the manifest exactly.
"""
import argparse
import json
import os
import struct
import sys

import numpy as np
import torch


def read_idx(path):
    with open(path, "rb") as f:
        data = f.read()
    magic = struct.unpack(">I", data[:4])[0]
    ndim = magic & 0xFF
    dims = struct.unpack(">" + "I" * ndim, data[4:4 + 4 * ndim])
    return np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndim).reshape(dims)


def load_test(root, dataset, size, mean, std):
    d = os.path.join(root, dataset)
    x = read_idx(os.path.join(d, "t10k-images-idx3-ubyte")).astype(np.float64) / 255.0
    y = read_idx(os.path.join(d, "t10k-labels-idx1-ubyte")).astype(np.int64)
    x = x[:, None]
    if x.shape[-1] == 28 and size != 28:
        x = np.pad(x, ((0, 0), (0, 0), (2, 2), (2, 2)))
    if x.shape[-1] != size:
        k = x.shape[-1] // size
        n, c, h, w = x.shape
        x = x.reshape(n, c, size, k, size, k).mean(axis=(3, 5))
    return (x - mean) / std, y


def conv3x3(x, w):
    n, c, h, wd = x.shape
    p = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.stack([p[:, :, i:i + h, j:j + wd] for i in range(3) for j in range(3)],
                    axis=2)  # n, c, 9, h, w
    return np.einsum("nckhw,ock->nohw", cols, w.reshape(w.shape[0], c, 9))


def forward(x, sd, stages, eps=1e-5):
    h = x
    for i in range(stages):
        p = f"c{i + 1}"
        h = conv3x3(h, sd[p + ".weight"])
        mu = sd[p + ".bn.running_mean"][None, :, None, None]
        var = sd[p + ".bn.running_var"][None, :, None, None]
        g = sd[p + ".bn.weight"][None, :, None, None]
        b = sd[p + ".bn.bias"][None, :, None, None]
        h = np.maximum((h - mu) / np.sqrt(var + eps) * g + b, 0.0)
        if i + 1 < stages and h.shape[2] >= 2 and h.shape[3] >= 2:
            n, c, hh, ww = h.shape
            h = h[:, :, :hh // 2 * 2, :ww // 2 * 2]
            h = h.reshape(n, c, hh // 2, 2, ww // 2, 2).max(axis=(3, 5))
    h = h.mean(axis=(2, 3))
    return h @ sd["fc_weight"].T + sd["fc_bias"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("checkpoint")
    ap.add_argument("--data-dir", default=os.environ.get("DFQ_DATA_DIR", "data"))
    args = ap.parse_args()
    with open(args.checkpoint + ".json") as f:
        manifest = json.load(f)
    if manifest.get("family") != "bn-cnn":
        sys.exit("only bn-cnn teachers are supported")
    sd = {k: v.double().numpy() for k, v in
          torch.jit.load(args.checkpoint).state_dict().items()
          if v.is_floating_point()}
    norm = manifest["normalization"]
    x, y = load_test(args.data_dir, manifest["dataset"], manifest["input_shape"][1],
                     norm["mean"][0], norm["std"][0])
    correct = 0
    for i in range(0, len(y), 250):
        logits = forward(x[i:i + 250], sd, len(manifest["widths"]))
        correct += int((logits.argmax(1) == y[i:i + 250]).sum())
    acc = correct / len(y)
    recorded = manifest["accuracy"]
    print(json.dumps({"correct": correct, "total": len(y), "accuracy": acc,
                      "recorded": recorded}))
    return 0 if round(recorded * len(y)) == correct else 1


if __name__ == "__main__":
    sys.exit(main())
