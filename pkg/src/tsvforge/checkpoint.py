"""Named-tensor container shared by encoder checkpoints and fitted heads.

Layout: one line of UTF-8 JSON (the manifest) terminated by ``\\n``, then the
tensors as contiguous little-endian float64 in manifest order. Output bytes
depend only on the tensors and metadata, so identical runs give identical
files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT = "tsvforge.ckpt.v1"


def dump_tensors(tensors: dict[str, np.ndarray], meta: dict | None = None, kind: str = "tensors") -> bytes:
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        blobs.append(arr.tobytes())
    header = {"format": FORMAT, "kind": kind, "meta": meta or {}, "tensors": entries}
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    return line.encode("utf-8") + b"\n" + b"".join(blobs)


def parse_tensors(raw: bytes) -> tuple[dict[str, np.ndarray], dict, str]:
    head, sep, body = raw.partition(b"\n")
    if not sep:
        raise DataError("checkpoint has no manifest line")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable checkpoint manifest: {exc}") from exc
    if header.get("format") != FORMAT:
        raise DataError(f"unsupported checkpoint format {header.get('format')!r}")
    flat = np.frombuffer(body, dtype="<f8")
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        if start + n > flat.size:
            raise DataError(f"checkpoint truncated inside tensor {entry['name']!r}")
        tensors[entry["name"]] = flat[start:start + n].reshape(shape).astype(np.float64)
    return tensors, header["meta"], header["kind"]


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None, kind: str = "tensors") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_tensors(tensors, meta, kind))
    return path


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict, str]:
    return parse_tensors(Path(path).read_bytes())
