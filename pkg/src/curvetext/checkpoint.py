"""Binary checkpoint format: named float64 arrays plus the training step.

Layout (all integers little-endian):

    magic   4 bytes  "FRBN"
    version u32      1
    count   u32      number of entries
    entry   repeated: u16 name length, UTF-8 name, u8 rank,
                      u32 dims[rank], float64 little-endian payload
    step    u64      trailing training step

Entries whose names start with ``meta.`` carry model configuration and
bookkeeping; everything else is a learnable parameter.  Writes are
byte-deterministic given the same entries, so save/load/save round-trips
are identical files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import ParameterStore

MAGIC = b"FRBN"
VERSION = 1
META_PREFIX = "meta."


class CheckpointFormatError(ValueError):
    """Raised for unreadable or truncated checkpoint files."""


class CheckpointMismatchError(ValueError):
    """Raised when entries do not match the receiving architecture."""


def save_checkpoint(path: str | Path, entries: dict[str, np.ndarray], step: int) -> None:
    """Write named arrays in insertion order plus the training step."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr, dtype=np.float64)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ValueError(f"rank {arr.ndim} too large for {name!r}")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    chunks.append(struct.pack("<Q", step))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    """Read a checkpoint back into (ordered entries, training step)."""
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    entries: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + name_len].decode("utf-8")
            if len(buf) < pos + name_len:
                raise CheckpointFormatError(f"{path}: truncated entry name")
            pos += name_len
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            payload = buf[pos : pos + 8 * n]
            if len(payload) != 8 * n:
                raise CheckpointFormatError(f"{path}: truncated payload for {name!r}")
            pos += 8 * n
            entries[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
        (step,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
    except struct.error as exc:
        raise CheckpointFormatError(f"{path}: truncated checkpoint ({exc})") from None
    if pos != len(buf):
        raise CheckpointFormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return entries, int(step)


def store_entries(store: ParameterStore, meta: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Assemble checkpoint entries: meta first, then every parameter."""
    entries: dict[str, np.ndarray] = {}
    for key, val in (meta or {}).items():
        entries[META_PREFIX + key] = np.asarray(val, dtype=np.float64)
    for name, t in store.items():
        entries[name] = t.data
    return entries


def apply_entries(store: ParameterStore, entries: dict[str, np.ndarray]) -> None:
    """Copy parameter entries into a store; any mismatch fails loudly."""
    params = {k: v for k, v in entries.items() if not k.startswith(META_PREFIX)}
    for name, tensor in store.items():
        if name not in params:
            raise CheckpointMismatchError(f"checkpoint is missing parameter {name!r}")
        arr = params.pop(name)
        if arr.shape != tensor.data.shape:
            raise CheckpointMismatchError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape} vs model {tensor.data.shape}"
            )
        tensor.data = np.ascontiguousarray(arr)
    if params:
        extra = next(iter(params))
        raise CheckpointMismatchError(f"checkpoint has unknown parameter {extra!r}")


def meta_entries(entries: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k[len(META_PREFIX) :]: v for k, v in entries.items() if k.startswith(META_PREFIX)}
