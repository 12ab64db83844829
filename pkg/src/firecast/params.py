"""Parameter checkpoint serialization.

Format: a JSON manifest listing ``{name, shape, dtype}`` entries, plus one
raw little-endian 32-bit-float binary blob per entry concatenated in
manifest order in a sibling ``.bin`` file.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor


def save_params(tensors: dict[str, Tensor], json_path) -> None:
    json_path = Path(json_path)
    bin_path = json_path.with_suffix(".bin")
    manifest = []
    blobs = []
    for name, t in tensors.items():
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": "float32"})
        blobs.append(arr.tobytes())
    json_path.write_text(json.dumps(manifest, indent=1))
    bin_path.write_bytes(b"".join(blobs))


def load_params(json_path) -> dict[str, Tensor]:
    json_path = Path(json_path)
    bin_path = json_path.with_suffix(".bin")
    manifest = json.loads(json_path.read_text())
    raw = bin_path.read_bytes()
    out: dict[str, Tensor] = {}
    offset = 0
    for entry in manifest:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape)
        offset += n * 4
        out[entry["name"]] = Tensor(arr.copy(), requires_grad=True, name=entry["name"])
    if offset != len(raw):
        raise ValueError(f"blob size {len(raw)} does not match manifest ({offset} expected)")
    return out
