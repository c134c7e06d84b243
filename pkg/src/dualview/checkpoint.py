"""Binary model checkpoints.

Layout (all integers little-endian, all floats IEEE-754 binary64 LE):

    magic            4 bytes  b"DVMM"
    version          u32      currently 1
    arch_json_len    u32      followed by that many UTF-8 bytes (canonical
                              architecture JSON; the fingerprint is the
                              sha256 of exactly these bytes)
    fingerprint_len  u32      followed by the hex fingerprint bytes
    seed             u64      RNG seed of the run that produced the weights
    n_tensors        u32
    per tensor:
        name_len     u32      followed by UTF-8 name bytes
        ndim         u32
        dims         u32 * ndim
        payload      f64 * prod(dims), row-major

Tensors are written sorted by name, so save -> load -> save round-trips to
identical bytes.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointMismatchError, FormatError
from .model import ArchConfig, MatchModel
from .tensor import Tensor

MAGIC = b"DVMM"
VERSION = 1


def save_checkpoint(model: MatchModel, path, seed: int | None = None) -> None:
    path = Path(path)
    seed = model.seed if seed is None else int(seed)
    arch_json = model.arch.to_json().encode("utf-8")
    fingerprint = model.arch.fingerprint().encode("ascii")

    chunks = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(arch_json)),
        arch_json,
        struct.pack("<I", len(fingerprint)),
        fingerprint,
        struct.pack("<Q", seed),
        struct.pack("<I", len(model.params)),
    ]
    for name in sorted(model.params):
        data = np.ascontiguousarray(model.params[name].data, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    path.write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise FormatError(
                f"truncated checkpoint: needed {n} bytes at offset {self.offset}, "
                f"only {len(self.blob) - self.offset} remain"
            )
        out = self.blob[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path, expected_fingerprint: str | None = None) -> MatchModel:
    """Rebuild a model from disk.

    ``expected_fingerprint`` (e.g. from a config the caller wants to train
    with) rejects a checkpoint for a different architecture before any
    tensor is read.
    """
    path = Path(path)
    r = _Reader(path.read_bytes())
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a checkpoint")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    arch_json = r.take(r.u32())
    fingerprint = r.take(r.u32()).decode("ascii")
    if hashlib.sha256(arch_json).hexdigest() != fingerprint:
        raise FormatError(f"{path}: fingerprint does not match architecture payload")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise CheckpointMismatchError(
            f"{path}: checkpoint fingerprint {fingerprint[:12]}... does not match "
            f"expected {expected_fingerprint[:12]}..."
        )
    arch = ArchConfig.from_json(arch_json.decode("utf-8"))
    seed = r.u64()

    params: dict[str, Tensor] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(dims)) if ndim else 1
        payload = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims)
        params[name] = Tensor(payload.copy(), requires_grad=True, name=name)
    if r.offset != len(r.blob):
        raise FormatError(f"{path}: {len(r.blob) - r.offset} trailing bytes at offset {r.offset}")

    expected = MatchModel.parameter_shapes(arch)
    found = {n: p.shape for n, p in params.items()}
    if expected != found:
        missing = sorted(set(expected) - set(found))
        extra = sorted(set(found) - set(expected))
        raise FormatError(
            f"{path}: tensor table does not match architecture "
            f"(missing {missing}, unexpected {extra})"
        )
    ordered = {name: params[name] for name in expected}
    return MatchModel(arch, ordered, seed)
