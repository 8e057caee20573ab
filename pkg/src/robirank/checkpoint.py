"""Versioned binary checkpoints for both model kinds.

The layout is little-endian and timestamp-free, so identical models
serialize to identical bytes and every load round-trips bit-exactly.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .lcr import LatentModel
from .ltr import LinearModel

_MAGIC = b"RBRKCKPT"
_VERSION = 1
_KIND_LINEAR = 1
_KIND_LATENT = 2


def atomic_write_bytes(path, payload):
    """Write to a temp file in the target directory, then rename over."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def save_checkpoint(path, model):
    """Serialize a LinearModel or LatentModel to a versioned binary file."""
    if isinstance(model, LinearModel):
        header = struct.pack("<8sHH", _MAGIC, _VERSION, _KIND_LINEAR)
        body = struct.pack("<Q", model.dim) + _row_bytes(model.omega)
    elif isinstance(model, LatentModel):
        header = struct.pack("<8sHH", _MAGIC, _VERSION, _KIND_LATENT)
        body = (
            struct.pack("<QQQ", model.dim, model.num_contexts, model.num_items)
            + _row_bytes(model.U)
            + _row_bytes(model.V)
        )
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    atomic_write_bytes(path, header + body)


def load_checkpoint(path):
    """Load a checkpoint; returns a LinearModel or LatentModel."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, kind = struct.unpack_from("<HH", blob, 8)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    if kind == _KIND_LINEAR:
        (dim,) = struct.unpack_from("<Q", blob, off)
        off += 8
        omega = _read_array(blob, off, (dim,), path)
        return LinearModel(omega)
    if kind == _KIND_LATENT:
        dim, nx, ny = struct.unpack_from("<QQQ", blob, off)
        off += 24
        U = _read_array(blob, off, (nx, dim), path)
        off += U.nbytes
        V = _read_array(blob, off, (ny, dim), path)
        return LatentModel(int(dim), U, V)
    raise ValueError(f"{path}: unknown checkpoint kind {kind}")


def _row_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _read_array(blob, off, shape, path):
    count = int(np.prod(shape))
    end = off + 8 * count
    if end > len(blob):
        raise ValueError(f"{path}: truncated checkpoint")
    return np.frombuffer(blob[off:end], dtype="<f8").reshape(shape).copy()
