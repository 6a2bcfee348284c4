"""Binary checkpoint container: a JSON config block plus named float64 tensors.

Layout, all integers little-endian u32:

    magic "AFDC" | version | config byte length | config JSON (utf-8)
    | record count | records

Each record is name length | name bytes (utf-8) | ndim | dims | float64
little-endian payload. Records are written in sorted name order so that
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["CheckpointFormatError", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"AFDC"
_VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file is malformed."""


def save_checkpoint(path: str | Path, config: dict[str, Any], tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_MAGIC, struct.pack("<III", _VERSION, len(blob), len(tensors)), blob]
    for name in sorted(tensors):
        # asarray keeps 0-d shape; ascontiguousarray would promote it to 1-d
        data = np.asarray(tensors[name], dtype="<f8", order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    path.write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    view = memoryview(raw)
    pos = 0

    def take(count: int, what: str) -> memoryview:
        nonlocal pos
        if pos + count > len(view):
            raise CheckpointFormatError(f"{path.name}: truncated while reading {what}")
        chunk = view[pos : pos + count]
        pos += count
        return chunk

    if bytes(take(4, "magic")) != _MAGIC:
        raise CheckpointFormatError(f"{path.name}: bad magic, not a checkpoint file")
    version, blob_len, count = struct.unpack("<III", take(12, "header"))
    if version != _VERSION:
        raise CheckpointFormatError(f"{path.name}: unsupported version {version}")
    try:
        config = json.loads(bytes(take(blob_len, "config")).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path.name}: invalid config block: {exc}") from exc
    if not isinstance(config, dict):
        raise CheckpointFormatError(f"{path.name}: config block is not an object")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "record name length"))
        name = bytes(take(name_len, "record name")).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4, f"ndim of {name!r}"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"dims of {name!r}"))
        n_items = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        payload = take(8 * n_items, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(view):
        raise CheckpointFormatError(f"{path.name}: {len(view) - pos} trailing bytes after last record")
    return config, tensors
