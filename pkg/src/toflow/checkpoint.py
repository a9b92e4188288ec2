"""
Binary checkpoint format.

    "TOFW"  u32 version  u32 tensor_count
    per tensor: u16 name_len, UTF-8 name, u8 rank, u32 dims[rank], f32 payload
    trailer:    u32 json_len, UTF-8 JSON (config echo; may be empty)

All integers and floats are little-endian. Tensor order is the order given
to `save_checkpoint`, so save -> load -> save is byte-identical.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .errors import FormatError

MAGIC = b"TOFW"
VERSION = 1


@dataclass
class Checkpoint:
    tensors: Dict[str, np.ndarray]
    config: dict = field(default_factory=dict)
    version: int = VERSION


def save_checkpoint(tensors: Mapping[str, np.ndarray], config: Optional[dict] = None) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    seen = set()
    for name, arr in tensors.items():
        if name in seen:
            raise FormatError(f"duplicate tensor name {name!r}")
        seen.add(name)
        a = np.asarray(getattr(arr, "data", arr))
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:40]!r}...")
        if a.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} has rank {a.ndim}")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{a.ndim}I", a.ndim, *a.shape))
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    blob = json.dumps(config or {}, sort_keys=True).encode("utf-8") if config else b""
    parts.append(struct.pack("<I", len(blob)) + blob)
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("not a TOFW checkpoint (bad magic)")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H", "name length")
        try:
            name = r.take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not valid UTF-8") from None
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        (rank,) = r.unpack("<B", f"rank of {name!r}")
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}")
        n = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(r.take(4 * n, f"payload of {name!r}"), dtype="<f4").astype(np.float32)
        tensors[name] = data.reshape(dims)
    (jlen,) = r.unpack("<I", "config length")
    blob = r.take(jlen, "config")
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after checkpoint")
    config = json.loads(blob.decode("utf-8")) if jlen else {}
    return Checkpoint(tensors, config, version)
