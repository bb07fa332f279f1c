"""Binary model checkpoints.

Layout: magic ``USRN`` | u32 version | u32 header length | JSON header |
raw little-endian float64 parameter blocks in header-declared order.  The
header carries the architecture (enough to rebuild the model), the
parameter manifest (name + shape per tensor), and free-form training
metadata.  Loading restores predictions bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .models import build_model

CHECKPOINT_MAGIC = b"USRN"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_checkpoint(model, path, meta: dict | None = None) -> None:
    """Write the model architecture, metadata and parameters to `path`."""
    params = model.params()
    header = {
        "arch": model.arch(),
        "params": [{"name": p.name, "shape": list(p.values.shape)} for p in params],
        "meta": meta or {},
    }
    blob = json.dumps(header, default=_jsonable).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.values, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Rebuild the model stored at `path`; returns (model, meta)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointCorruptError(f"{path} is not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<I", data, 8)
    header_end = 12 + header_len
    if header_end > len(data):
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: unreadable header: {exc}") from exc
    try:
        arch = dict(header["arch"])
        manifest = header["params"]
    except (KeyError, TypeError) as exc:
        raise CheckpointCorruptError(f"{path}: incomplete header: {exc}") from exc

    declared = sum(int(np.prod(entry["shape"])) for entry in manifest)
    if len(data) != header_end + declared * 8:
        raise CheckpointCorruptError(
            f"{path}: expected {declared * 8} parameter bytes, "
            f"found {len(data) - header_end}"
        )
    model = build_model(**arch)
    params = model.params()
    if len(params) != len(manifest):
        raise CheckpointCorruptError(
            f"{path}: header declares {len(manifest)} tensors, model has {len(params)}"
        )
    offset = header_end
    for p, entry in zip(params, manifest):
        shape = tuple(entry["shape"])
        if entry["name"] != p.name or shape != p.values.shape:
            raise CheckpointCorruptError(
                f"{path}: tensor mismatch: header has {entry['name']}{shape}, "
                f"model expects {p.name}{p.values.shape}"
            )
        count = int(np.prod(shape))
        block = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        p.values[...] = block.reshape(shape)
        offset += count * 8
    return model, header.get("meta", {})
