"""Binary checkpoint format.

Layout (little-endian): b"MMPN", u32 version, then per tensor
u32 name length, UTF-8 name, u8 dtype tag, u32 rank, rank x u64 dims,
raw values.  The model config travels next to it as JSON.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import MMPN, MMPNConfig

MAGIC = b"MMPN"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAGS = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class CheckpointError(ValueError):
    pass


def _state(model: MMPN) -> dict[str, np.ndarray]:
    state = {name: p.data for name, p in model.named_parameters().items()}
    for name, buf in model.named_buffers().items():
        state[name] = buf
    return state


def config_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(path: str | Path, model: MMPN, extra: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in _state(model).items():
        encoded = name.encode("utf-8")
        tag = _TAGS[arr.dtype]
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BI", tag, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    path.write_bytes(b"".join(chunks))
    doc = {"model": model.config.to_dict()}
    if extra:
        doc.update(extra)
    config_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError(f"{path}: truncated")
        values = struct.unpack_from(fmt, blob, pos)
        pos += size
        return values

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    out = {}
    while pos < len(blob):
        (length,) = take("<I")
        if pos + length > len(blob):
            raise CheckpointError(f"{path}: truncated")
        name = blob[pos : pos + length].decode("utf-8")
        pos += length
        tag, rank = take("<BI")
        if tag not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype tag {tag} for {name}")
        dims = take(f"<{rank}Q")
        dtype = _DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated")
        out[name] = np.frombuffer(blob, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)), offset=pos).reshape(dims).copy()
        pos += nbytes
    return out


def load_checkpoint(path: str | Path) -> tuple[MMPN, dict]:
    """Return (model in eval mode, side-car document)."""
    try:
        doc = json.loads(config_path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: unreadable config: {err}") from err
    model = MMPN(MMPNConfig.from_dict(doc["model"]))
    tensors = read_tensors(path)
    expected = _state(model)
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        unexpected = sorted(set(tensors) - set(expected))
        raise CheckpointError(f"{path}: parameter mismatch; missing={missing} unexpected={unexpected}")
    params = model.named_parameters()
    for name, arr in tensors.items():
        if arr.shape != expected[name].shape:
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, expected {expected[name].shape}")
        if name in params:
            params[name].data = arr.astype(arr.dtype.newbyteorder("="))
        else:
            owner, attr = model._resolve(name)
            setattr(owner, attr, arr.astype(arr.dtype.newbyteorder("=")))
    model.eval()
    return model, doc
