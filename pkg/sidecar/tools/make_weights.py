#!/usr/bin/env python3
"""Generate the pinned toy-model weight files.

Run from the sidecar directory:

    python tools/make_weights.py

Writes src/refground_sidecar/weights/<name>.npz and prints each file's sha256
for config pinning. Regenerating changes the archive bytes (zip metadata), so
the committed files are authoritative; this script documents their origin.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "refground_sidecar" / "weights"

SPECS = [
    {"name": "toy-64", "seed": 1, "dim": 32, "vocab": 512},
    {"name": "toy-48", "seed": 2, "dim": 32, "vocab": 512},
]


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for spec in SPECS:
        rng = np.random.default_rng(spec["seed"])
        d, v = spec["dim"], spec["vocab"]
        arrays = {
            "w1": rng.normal(0, 1.0, size=(d, 3)).astype(np.float32),
            "b1": rng.normal(0, 0.1, size=(d,)).astype(np.float32),
            "v": rng.normal(0, 1.0, size=(d,)).astype(np.float32),
            "w2": rng.normal(0, 1.0 / np.sqrt(d), size=(d, d)).astype(np.float32),
            "w_text": rng.normal(0, 1.0, size=(v, d)).astype(np.float32),
        }
        path = OUT_DIR / f"{spec['name']}.npz"
        np.savez(path, **arrays)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{spec['name']}: {path} sha256={digest}")


if __name__ == "__main__":
    main()
