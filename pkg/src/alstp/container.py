"""Named-tensor checkpoint container shared by embeddings and model weights.

Layout: ``<name>.bin`` holds the tensors' little-endian float32 bytes
concatenated in manifest order; ``<name>.json`` lists each tensor's name,
shape and byte offset plus caller metadata.  Serialization is deterministic
(sorted JSON keys, no timestamps) so identical state produces identical
bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CONTAINER_FORMAT_VERSION = 1


def write_container(directory: str | Path, name: str, tensors: dict[str, np.ndarray], meta: dict) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(d / f"{name}.bin", "wb") as fh:
        for tname, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(data.tobytes())
            entries.append({"name": tname, "shape": list(arr.shape), "offset": offset})
            offset += data.nbytes
    manifest = {
        "format_version": CONTAINER_FORMAT_VERSION,
        "dtype": "<f4",
        "tensors": entries,
        "meta": meta,
    }
    with open(d / f"{name}.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_container(directory: str | Path, name: str) -> tuple[dict[str, np.ndarray], dict]:
    d = Path(directory)
    with open(d / f"{name}.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != CONTAINER_FORMAT_VERSION:
        raise ValueError(f"unsupported container format version in {d / (name + '.json')}")
    raw = (d / f"{name}.bin").read_bytes()
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=entry["offset"])
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float32)
    return tensors, manifest["meta"]
