"""Binary checkpoint container.

Layout (all little-endian)::

    b"PPGL"  u32 version  32-byte config digest  u32 array count
    per array: u16 name length, UTF-8 name, u8 rank, u32 dims..., float64 payload

Files are written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .learn import AdamState

MAGIC = b"PPGL"
VERSION = 1
DIGEST_BYTES = 32

_HEADER = struct.Struct("<4sI32sI")


class CheckpointError(Exception):
    pass


class CorruptHeaderError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    digest: bytes
    version: int = VERSION


def encode(arrays: dict[str, np.ndarray], digest: bytes = b"") -> bytes:
    digest = digest.ljust(DIGEST_BYTES, b"\0")[:DIGEST_BYTES]
    parts = [_HEADER.pack(MAGIC, VERSION, digest, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise CheckpointError(f"array {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> Checkpoint:
    if len(blob) < _HEADER.size:
        if not MAGIC.startswith(blob[:4]):
            raise CorruptHeaderError("bad magic")
        raise TruncatedCheckpointError(f"header needs {_HEADER.size} bytes, file has {len(blob)}")
    magic, version, digest, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CorruptHeaderError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    pos = _HEADER.size
    arrays: dict[str, np.ndarray] = {}

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedCheckpointError(f"need {n} bytes at offset {pos}, file has {len(blob)}")
        out = blob[pos : pos + n]
        pos += n
        return out

    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptHeaderError("array name is not UTF-8") from exc
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(8 * size)
        arrays[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    if pos != len(blob):
        raise CorruptHeaderError(f"{len(blob) - pos} trailing bytes after {count} arrays")
    return Checkpoint(arrays, digest, version)


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], digest: bytes = b"") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(arrays, digest))
    os.replace(tmp, path)
    return path


def load_arrays(path: str | Path) -> Checkpoint:
    return decode(Path(path).read_bytes())


def checkpoint_save(path, params, adam, config=None, step: int = 0, extra: dict | None = None) -> Path:
    """Write parameters, Adam moments, the update counter and any extra run state."""
    arrays: dict[str, np.ndarray] = {}
    for k, p in params.items():
        arrays[f"param/{k}"] = p.data
    for k in adam.m:
        arrays[f"adam/m/{k}"] = adam.m[k]
        arrays[f"adam/v/{k}"] = adam.v[k]
    arrays["adam/t"] = np.array([float(adam.t)])
    arrays["meta/step"] = np.array([float(step)])
    arrays.update(extra or {})
    digest = config.digest() if config is not None else b""
    return save_arrays(path, arrays, digest)


def checkpoint_load(path) -> tuple[dict[str, np.ndarray], AdamState, int, Checkpoint]:
    """Return ``(param arrays, adam state, step, raw checkpoint)``."""
    ckpt = load_arrays(path)
    arrays = ckpt.arrays
    params = {k[len("param/") :]: v for k, v in arrays.items() if k.startswith("param/")}
    if not params:
        raise CorruptHeaderError("checkpoint holds no parameters")
    adam = AdamState(
        m={k[len("adam/m/") :]: v.copy() for k, v in arrays.items() if k.startswith("adam/m/")},
        v={k[len("adam/v/") :]: v.copy() for k, v in arrays.items() if k.startswith("adam/v/")},
        t=int(arrays["adam/t"][0]) if "adam/t" in arrays else 0,
    )
    step = int(arrays["meta/step"][0]) if "meta/step" in arrays else 0
    return params, adam, step, ckpt

