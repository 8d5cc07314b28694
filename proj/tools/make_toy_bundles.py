#!/usr/bin/env python3
"""Write the small bundles under tests/data.

The writer below is independent of the C++ loader on purpose: tests load
these files with the engine and compare counts and checksums.

usage: make_toy_bundles.py [out_dir]
"""

import hashlib
import json
import sys
from pathlib import Path

import numpy as np


def write_bundle(out, name, edges, features, labels, masks=None):
    out.mkdir(parents=True, exist_ok=True)
    edges = sorted({(min(a, b), max(a, b)) for a, b in edges if a != b})
    n, f_in = features.shape
    edge_bytes = "".join(f"{a},{b}\n" for a, b in edges).encode()
    feat_bytes = np.ascontiguousarray(features, dtype="<f4").tobytes()
    label_bytes = "".join(f"{int(y)}\n" for y in labels).encode()
    mask_bytes = "".join(f"{m}\n" for m in masks).encode() if masks is not None else b""

    meta = {
        "name": name,
        "n": int(n),
        "m": len(edges),
        "f_in": int(f_in),
        "classes": int(max(labels) + 1),
        "feature_dtype": "f32",
        "has_masks": masks is not None,
        "payload_sha256": hashlib.sha256(edge_bytes + feat_bytes + label_bytes + mask_bytes).hexdigest(),
    }
    (out / "edges.csv").write_bytes(edge_bytes)
    (out / "features.bin").write_bytes(feat_bytes)
    (out / "labels.csv").write_bytes(label_bytes)
    if masks is not None:
        (out / "masks.csv").write_bytes(mask_bytes)
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def separable(out):
    # Two 10-node rings joined by one edge; class 0 leans on feature 0.
    rng = np.random.default_rng(7)
    labels = np.repeat([0, 1], 10)
    features = np.zeros((20, 2), dtype=np.float32)
    features[labels == 0] = [1.0, 0.1]
    features[labels == 1] = [0.1, 1.0]
    features += rng.uniform(0.0, 0.05, size=features.shape).astype(np.float32)
    edges = [(i, (i + 1) % 10) for i in range(10)]
    edges += [(10 + i, 10 + (i + 1) % 10) for i in range(10)]
    edges.append((0, 10))
    write_bundle(out / "toy_separable", "toy_separable", edges, features, labels)


def citation(out):
    # Stochastic block model with bag-of-words features and fixed masks.
    rng = np.random.default_rng(11)
    classes, per_class, f_in = 3, 60, 24
    n = classes * per_class
    labels = np.repeat(np.arange(classes), per_class)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = 0.08 if labels[i] == labels[j] else 0.006
            if rng.random() < p:
                edges.append((i, j))
    topic = rng.random((classes, f_in)) < 0.25
    features = np.zeros((n, f_in), dtype=np.float32)
    for i in range(n):
        on = np.where(topic[labels[i]], 0.55, 0.08)
        features[i] = (rng.random(f_in) < on).astype(np.float32)
    order = rng.permutation(n)
    masks = ["none"] * n
    per_class_train = {c: 0 for c in range(classes)}
    val = test = 0
    for i in order:
        c = labels[i]
        if per_class_train[c] < 5:
            masks[i] = "train"
            per_class_train[c] += 1
        elif val < 45:
            masks[i] = "val"
            val += 1
        elif test < 90:
            masks[i] = "test"
            test += 1
    write_bundle(out / "toy_citation", "toy_citation", edges, features, labels, masks)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "tests" / "data"
    separable(out)
    citation(out)


if __name__ == "__main__":
    main()
