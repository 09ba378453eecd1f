"""Self-describing ``.npz`` checkpoint container.

Layout: a ``__meta__`` entry holding JSON (architecture id, constructor
config, seed, extra fields) plus one float64 array per named tensor.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

META_KEY = "__meta__"


def save_checkpoint(path, arch: str, arrays: dict, config: dict | None = None, seed=None, **extra):
    path = Path(path)
    meta = {"arch": arch, "config": config or {}, "seed": seed, "names": list(arrays), **extra}
    payload = {META_KEY: np.array(json.dumps(meta, sort_keys=True))}
    for name, value in arrays.items():
        payload[name] = np.ascontiguousarray(value, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data[META_KEY]))
        arrays = {name: data[name].copy() for name in meta["names"]}
    return meta, arrays


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
