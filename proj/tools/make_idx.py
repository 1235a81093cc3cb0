#!/usr/bin/env python3
"""Convert per-class digit JSON dumps into IDX image/label file pairs.

Input: a directory with files 0.json .. 9.json, each {"data": [...]} where
data is either a flat pixel array (N*784) or a nested N x 784 array with
values in [0, 1]. Output: big-endian IDX files (magic 0x803 / 0x801) with
28x28 uint8 images, classes interleaved round-robin, split into a train
and a test pair.

Usage: make_idx.py <json_dir> <out_dir> <prefix_train> <prefix_test> [test_per_class] [max_per_class]
"""

import json
import os
import struct
import sys


def load_class(path):
    with open(path) as f:
        data = json.load(f)["data"]
    if data and isinstance(data[0], list):
        imgs = data
    else:
        imgs = [data[i : i + 784] for i in range(0, len(data) - 783, 784)]
    return [bytes(min(255, max(0, round(v * 255))) for v in img) for img in imgs]


def write_idx(out_dir, prefix, items):
    n = len(items)
    with open(os.path.join(out_dir, prefix + "-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">iiii", 0x803, n, 28, 28))
        for _, img in items:
            f.write(img)
    with open(os.path.join(out_dir, prefix + "-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">ii", 0x801, n))
        f.write(bytes(lab for lab, _ in items))
    print(f"{prefix}: {n} images")


def main():
    json_dir, out_dir, ptrain, ptest = sys.argv[1:5]
    test_per_class = int(sys.argv[5]) if len(sys.argv) > 5 else 250
    max_per_class = int(sys.argv[6]) if len(sys.argv) > 6 else 10**9
    os.makedirs(out_dir, exist_ok=True)

    classes = {}
    for c in range(10):
        path = os.path.join(json_dir, f"{c}.json")
        if os.path.exists(path):
            classes[c] = load_class(path)[:max_per_class]

    train, test = [], []
    for c, imgs in sorted(classes.items()):
        split = len(imgs) - test_per_class
        for i, img in enumerate(imgs):
            (train if i < split else test).append((c, img))

    # round-robin interleave by class so any prefix of the file is balanced
    def interleave(items):
        by_class = {}
        for lab, img in items:
            by_class.setdefault(lab, []).append(img)
        out, i = [], 0
        while any(i < len(v) for v in by_class.values()):
            for c in sorted(by_class):
                if i < len(by_class[c]):
                    out.append((c, by_class[c][i]))
            i += 1
        return out

    write_idx(out_dir, ptrain, interleave(train))
    write_idx(out_dir, ptest, interleave(test))


if __name__ == "__main__":
    main()
