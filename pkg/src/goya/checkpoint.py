"""GCKP checkpoint container and binary serialization.

Layout, all little endian:

    magic  b"GCKP"
    u32    format version (currently 1)
    u32    tensor count
    per tensor:
        u32        name length in bytes
        bytes      UTF-8 name
        u32        ndim
        u64 * ndim dims
        f32 * prod(dims) payload, C order
    u64    metadata length in bytes
    bytes  UTF-8 JSON metadata object

Tensors are stored float32 regardless of in-memory dtype. The reader is
strict: every length is bounds-checked before use, duplicate tensor names
and trailing bytes are rejected, and errors carry the byte offset at which
parsing failed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"GCKP"
VERSION = 1

_MAX_NDIM = 8
_MAX_NAME_BYTES = 65536


@dataclass
class Checkpoint:
    """Named float32 tensors plus a free-form JSON metadata dict."""

    tensors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Serialize ``ckpt`` to ``path``. Byte output is a pure function of
    the tensors (insertion order, float32 values) and the metadata."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(ckpt.tensors))
    for name, arr in ckpt.tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        name_bytes = name.encode("utf-8")
        out += struct.pack("<I", len(name_bytes))
        out += name_bytes
        out += struct.pack("<I", data.ndim)
        if data.ndim:
            out += struct.pack(f"<{data.ndim}Q", *data.shape)
        out += data.tobytes()
    meta_bytes = json.dumps(ckpt.metadata, sort_keys=True).encode("utf-8")
    out += struct.pack("<Q", len(meta_bytes))
    out += meta_bytes
    Path(path).write_bytes(bytes(out))


class _Reader:
    """Cursor over a byte buffer that raises FormatError with offsets."""

    def __init__(self, buf: bytes, origin: str) -> None:
        self.buf = buf
        self.off = 0
        self.origin = origin

    def fail(self, why: str):
        raise FormatError(f"{self.origin}: {why} at byte {self.off}")

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.off + n > len(self.buf):
            self.fail(f"truncated while reading {what} ({n} bytes needed)")
        chunk = self.buf[self.off : self.off + n]
        self.off += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def utf8(self, n: int, what: str) -> str:
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            self.fail(f"{what} is not valid UTF-8")


def load_checkpoint(path) -> Checkpoint:
    """Parse a GCKP file, validating structure exhaustively."""
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    if r.take(4, "magic") != MAGIC:
        r.off = 0
        r.fail(f"bad magic, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    count = r.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for idx in range(count):
        name_len = r.u32(f"tensor {idx} name length")
        if name_len == 0 or name_len > _MAX_NAME_BYTES:
            r.fail(f"tensor {idx} name length {name_len} out of range")
        name = r.utf8(name_len, f"tensor {idx} name")
        if name in tensors:
            r.fail(f"duplicate tensor name '{name}'")
        ndim = r.u32(f"tensor '{name}' ndim")
        if ndim > _MAX_NDIM:
            r.fail(f"tensor '{name}' ndim {ndim} exceeds limit {_MAX_NDIM}")
        dims = tuple(r.u64(f"tensor '{name}' dim {d}") for d in range(ndim))
        n_elems = 1
        for d in dims:
            n_elems *= d
        payload = r.take(4 * n_elems, f"tensor '{name}' payload")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        tensors[name] = arr
    meta_len = r.u64("metadata length")
    meta_raw = r.utf8(meta_len, "metadata")
    try:
        metadata = json.loads(meta_raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: metadata is not valid JSON ({exc})") from None
    if not isinstance(metadata, dict):
        raise FormatError(f"{path}: metadata must be a JSON object")
    if r.off != len(r.buf):
        r.fail(f"{len(r.buf) - r.off} trailing bytes after metadata")
    return Checkpoint(tensors=tensors, metadata=metadata)
