"""Versioned binary checkpoint container.

Byte layout (all integers little-endian):

    magic   8 bytes  b"DCFMCKPT"
    version u32      currently 1
    then, per parameter, repeated until end of file:
        name_len u32
        name     name_len bytes, utf-8
        rank     u32
        extents  rank x u32
        payload  float64 x prod(extents), little-endian

Parameters are written in sorted-name order so identical states always
produce identical files.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import Tensor

MAGIC = b"DCFMCKPT"
VERSION = 1


class CheckpointError(IOError):
    """Raised when a checkpoint file cannot be written or understood."""


def save_checkpoint(path, params: dict) -> None:
    """Write named parameter tensors to ``path``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name in sorted(params):
            data = params[name].data if isinstance(params[name], Tensor) else params[name]
            arr = np.ascontiguousarray(data, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(arr.tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    blob = fh.read(count)
    if len(blob) != count:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return blob


def load_checkpoint(path) -> dict:
    """Read a checkpoint back into {name: float64 ndarray}."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version = struct.unpack("<I", _read_exact(fh, 4, "version"))[0]
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        params = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointError("truncated checkpoint while reading name length")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name}"))
            shape = tuple(
                struct.unpack("<I", _read_exact(fh, 4, f"extent of {name}"))[0]
                for _ in range(rank)
            )
            count = int(np.prod(shape)) if shape else 1
            payload = _read_exact(fh, count * 8, f"payload of {name}")
            params[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        return params


def restore_into(params: dict, state: dict) -> None:
    """Copy a loaded state into live parameter tensors, checking shapes."""
    missing = sorted(set(params) - set(state))
    if missing:
        raise CheckpointError(f"checkpoint is missing parameters: {', '.join(missing)}")
    extra = sorted(set(state) - set(params))
    if extra:
        raise CheckpointError(f"checkpoint has unknown parameters: {', '.join(extra)}")
    for name, tensor in params.items():
        if state[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {state[name].shape}, "
                f"model {tensor.data.shape}"
            )
        tensor.data = state[name].astype(np.float64)
