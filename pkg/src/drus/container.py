"""USDR binary container for datasets, images and cached factorizations.

Layout (all integers little-endian)::

    b"USDR" | u32 version | u32 section count | sections... | sha256 of all prior bytes

Each section is ``u16 name length | name (utf-8) | u8 kind | u8 ndim |
u64 dims[ndim] | u64 payload length | payload``. Kinds: 0 float64 array,
1 int64 array, 2 utf-8 text. Arrays are C-ordered little-endian.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

MAGIC = b"USDR"
VERSION = 1
KIND_F64, KIND_I64, KIND_TEXT = 0, 1, 2
_DTYPES = {KIND_F64: np.dtype("<f8"), KIND_I64: np.dtype("<i8")}


class ContainerError(ValueError):
    pass


def _encode(name: str, value) -> bytes:
    nb = name.encode("utf-8")
    if isinstance(value, str):
        payload, kind, dims = value.encode("utf-8"), KIND_TEXT, ()
    else:
        arr = np.asarray(value)
        if arr.dtype.kind in "iub":
            kind = KIND_I64
        elif arr.dtype.kind == "f":
            kind = KIND_F64
        else:
            raise ContainerError(f"section {name!r}: unsupported dtype {arr.dtype}")
        arr = np.array(arr, dtype=_DTYPES[kind], order="C")
        payload, dims = arr.tobytes(), arr.shape
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<BB", kind, len(dims))
    head += struct.pack(f"<{len(dims)}Q", *dims) if dims else b""
    return head + struct.pack("<Q", len(payload)) + payload


def dumps(sections: dict) -> bytes:
    """Serialize ``{name: array | str}`` in sorted name order."""
    body = MAGIC + struct.pack("<II", VERSION, len(sections))
    body += b"".join(_encode(k, sections[k]) for k in sorted(sections))
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ContainerError("truncated container")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(buf: bytes) -> dict:
    if len(buf) < 12 + 32:
        raise ContainerError("truncated container")
    if buf[:4] != MAGIC:
        raise ContainerError("not a USDR container (bad magic)")
    (version,) = struct.unpack("<I", buf[4:8])
    if version != VERSION:
        raise ContainerError(f"unsupported USDR version {version} (expected {VERSION})")
    body, digest = buf[:-32], buf[-32:]
    r = _Reader(body)
    r.take(8)
    (count,) = r.unpack("<I")
    out = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        kind, ndim = r.unpack("<BB")
        dims = r.unpack(f"<{ndim}Q") if ndim else ()
        (plen,) = r.unpack("<Q")
        payload = r.take(plen)
        if kind == KIND_TEXT:
            out[name] = payload.decode("utf-8")
        elif kind in _DTYPES:
            dt = _DTYPES[kind]
            if plen != dt.itemsize * int(np.prod(dims, dtype=np.int64)):
                raise ContainerError(f"section {name!r}: payload does not match shape {dims}")
            out[name] = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
        else:
            raise ContainerError(f"section {name!r}: unknown kind {kind}")
    if r.pos != len(body):
        raise ContainerError("trailing bytes after last section")
    if hashlib.sha256(body).digest() != digest:
        raise ContainerError("container hash mismatch (file corrupted)")
    return out


def save(path, sections: dict) -> None:
    Path(path).write_bytes(dumps(sections))


def load(path) -> dict:
    return loads(Path(path).read_bytes())


def from_receiver_major(raw, n_receivers: int, n_samples: int) -> np.ndarray:
    """Convert an external flat float64 channel record to ``(L, K)``.

    The record must hold receiver 0's ``K`` samples first, then receiver 1's,
    and so on, in little-endian float64. Anything else (interleaved samples,
    other dtypes, multiple transmits) must be converted before calling this.
    """
    a = np.frombuffer(raw, dtype="<f8") if isinstance(raw, (bytes, bytearray)) else np.asarray(raw, "<f8")
    if a.size != n_receivers * n_samples:
        raise ContainerError(f"record has {a.size} values, expected {n_receivers}*{n_samples}")
    return a.reshape(n_receivers, n_samples).astype(np.float64)
