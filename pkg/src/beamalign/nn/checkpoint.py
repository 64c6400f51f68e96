"""Binary checkpoint files for parameter stores.

Layout (all integers little-endian):

    magic    8 bytes  b"BEAMCKPT"
    version  u32      currently 1
    step     u64      Adam step counter
    count    u32      number of table entries
    entry*   kind u8 (0 param / 1 adam-m / 2 adam-v / 3 buffer),
             name (u16 length + utf-8), ndim u8, dims u32 each,
             values as raw little-endian float64
    crc32    u32      checksum of everything above

Round-trips are bit-exact: load(save(store)) reproduces parameters,
moments, buffers, and the step counter.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .optim import ParameterStore

__all__ = ["CheckpointError", "checkpoint_save", "checkpoint_load", "load_into_store"]

MAGIC = b"BEAMCKPT"
VERSION = 1

_KIND_PARAM = 0
_KIND_M = 1
_KIND_V = 2
_KIND_BUFFER = 3


class CheckpointError(RuntimeError):
    pass


def _pack_entry(kind: int, name: str, arr: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    arr = np.asarray(arr, dtype=np.float64)
    head = struct.pack("<BH", kind, len(raw_name)) + raw_name
    head += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype("<f8").tobytes()


def checkpoint_save(store: ParameterStore, path) -> None:
    entries: list[bytes] = []
    for name, t in store.params.items():
        entries.append(_pack_entry(_KIND_PARAM, name, t.value))
    for name, m in store.m.items():
        entries.append(_pack_entry(_KIND_M, name, m))
    for name, v in store.v.items():
        entries.append(_pack_entry(_KIND_V, name, v))
    for name, b in store.buffers.items():
        entries.append(_pack_entry(_KIND_BUFFER, name, b))
    body = MAGIC + struct.pack("<IQI", VERSION, store.step, len(entries)) + b"".join(entries)
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint file")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_load(path) -> tuple[int, dict[int, dict[str, np.ndarray]]]:
    """Return (step, tables) with tables keyed by entry kind."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 20:
        raise CheckpointError("truncated checkpoint file")
    body, (crc_stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    r = _Reader(body)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointError(
            f"bad magic bytes {magic!r}; expected {MAGIC!r} (format version {VERSION})"
        )
    version, step, count = r.unpack("<IQI")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (reader supports {VERSION})")
    tables: dict[int, dict[str, np.ndarray]] = {
        _KIND_PARAM: {},
        _KIND_M: {},
        _KIND_V: {},
        _KIND_BUFFER: {},
    }
    for _ in range(count):
        kind, name_len = r.unpack("<BH")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        if kind not in tables:
            raise CheckpointError(f"unknown entry kind {kind}")
        tables[kind][name] = arr
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after checkpoint table")
    return step, tables


def load_into_store(store: ParameterStore, path) -> None:
    """Strictly load a checkpoint into an already-built store (names must match)."""
    step, tables = checkpoint_load(path)
    params = tables[_KIND_PARAM]
    missing = sorted(set(store.params) - set(params))
    extra = sorted(set(params) - set(store.params))
    if missing or extra:
        raise CheckpointError(
            f"parameter table mismatch: missing={missing[:4]} unexpected={extra[:4]}"
        )
    for name, t in store.params.items():
        if params[name].shape != t.value.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file {params[name].shape} vs store {t.value.shape}"
            )
        t.value[...] = params[name]
    for name, b in store.buffers.items():
        if name in tables[_KIND_BUFFER]:
            b[...] = tables[_KIND_BUFFER][name]
    store.m = {k: v.copy() for k, v in tables[_KIND_M].items()}
    store.v = {k: v.copy() for k, v in tables[_KIND_V].items()}
    store.step = step
