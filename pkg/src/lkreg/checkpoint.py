"""Parameter checkpoints: flat binary blob plus a JSON manifest.

A checkpoint is two files sharing a prefix: <prefix>.json holds the entry
table (name, shape, offset, dtype) and optional metadata; <prefix>.bin is
the concatenation of the raw little-endian float64 buffers.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Array

_DTYPE = "<f8"


def save_blob(prefix, arrays: dict[str, Array], meta: dict | None = None) -> tuple[Path, Path]:
    prefix = Path(prefix)
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        raw = arr.astype(_DTYPE).tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "dtype": _DTYPE}
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {"entries": entries, "total_bytes": offset, "meta": meta or {}}
    json_path = Path(str(prefix) + ".json")
    bin_path = Path(str(prefix) + ".bin")
    json_path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    bin_path.write_bytes(b"".join(chunks))
    return json_path, bin_path


def load_blob(prefix) -> tuple[dict[str, Array], dict]:
    prefix = Path(prefix)
    manifest = json.loads(Path(str(prefix) + ".json").read_text())
    blob = Path(str(prefix) + ".bin").read_bytes()
    arrays: dict[str, Array] = {}
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype=entry["dtype"], count=count, offset=start)
        arrays[entry["name"]] = arr.astype(np.float64).reshape(shape)
    return arrays, manifest.get("meta", {})
