"""Checkpoints: one flat little-endian float64 file plus a JSON sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> tuple[Path, Path]:
    path = Path(path)
    layout, offset, chunks = [], 0, []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(arr.ravel())
    bin_path = path.with_suffix(".bin")
    json_path = path.with_suffix(".json")
    flat = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f8")
    flat.astype("<f8").tofile(bin_path)
    sidecar = {"arrays": layout, "n_values": int(offset), "dtype": "float64-le", **(meta or {})}
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return bin_path, json_path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    if flat.size != meta["n_values"]:
        raise ValueError(f"checkpoint holds {flat.size} values, sidecar expects {meta['n_values']}")
    arrays = {}
    for item in meta["arrays"]:
        n = int(np.prod(item["shape"])) if item["shape"] else 1
        arrays[item["name"]] = flat[item["offset"]:item["offset"] + n].reshape(item["shape"]).astype(float)
    return arrays, meta
