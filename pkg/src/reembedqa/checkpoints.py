"""Binary parameter checkpoint files.

Layout (all integers little-endian uint32, floats little-endian float32):

    magic "RQCKPT\\n" | version | param count |
    per parameter: name length | name (utf-8) | rank | dims... | values...
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"RQCKPT\n"
VERSION = 1


class CheckpointError(IOError):
    """Malformed or truncated checkpoint file."""


def save_checkpoint(path, named_params: dict[str, "Tensor | np.ndarray"]) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(named_params)))
        for name, value in named_params.items():
            arr = value.data if isinstance(value, Tensor) else np.asarray(value)
            arr = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(
                f"{path}: truncated while reading {what} at byte {offset}")
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    if take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic; not a parameter checkpoint")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")

    params: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"name length of param {i}"))
        name = take(name_len, f"name of param {i}").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name}"))
        n_values = int(np.prod(dims)) if rank else 1
        raw = take(4 * n_values, f"values of {name}")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes after last parameter")
    return params


def restore_into(named_params: dict[str, Tensor], loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded values into existing parameter tensors by name."""
    missing = sorted(set(named_params) - set(loaded))
    extra = sorted(set(loaded) - set(named_params))
    if missing or extra:
        raise CheckpointError(
            f"parameter name mismatch: missing {missing or 'none'}, unexpected {extra or 'none'}")
    for name, p in named_params.items():
        if tuple(loaded[name].shape) != p.data.shape:
            raise CheckpointError(
                f"parameter {name}: checkpoint shape {loaded[name].shape} "
                f"!= model shape {p.data.shape}")
        p.data[...] = loaded[name].astype(p.data.dtype)
