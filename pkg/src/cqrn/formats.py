"""Bit-stream container and canonical on-disk artifact formats.

The binary bit-stream layout is: 4-byte magic "CQRN", one version byte
(currently 1), an 8-byte little-endian bit count, then the bits packed
most-significant-bit-first within each byte. JSON artifacts are written
with sorted keys and no insignificant whitespace so byte-identical reruns
are possible; all file writes go through a temp-file-plus-rename step.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

MAGIC = b"CQRN"
STREAM_VERSION = 1
_HEADER = struct.Struct("<4sBQ")


@dataclass(frozen=True, eq=False)
class BitStream:
    """Immutable sequence of bits stored as a uint8 array of 0/1 values."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("bit array must be one dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("bit array may only contain 0 and 1")
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitStream):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def concat(self, other: BitStream) -> BitStream:
        return BitStream(np.concatenate([self.bits, other.bits]))

    def ones_fraction(self) -> float:
        return float(self.bits.mean()) if self.bits.size else 0.0

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, STREAM_VERSION, self.bits.size)
        return header + np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> BitStream:
        if len(raw) < _HEADER.size:
            raise ValueError("truncated bit-stream header")
        magic, version, n_bits = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != STREAM_VERSION:
            raise ValueError(f"unsupported bit-stream version {version}")
        body = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
        if body.size * 8 < n_bits:
            raise ValueError("bit count exceeds payload size")
        return cls(np.unpackbits(body, count=n_bits))

    def write(self, path: str | os.PathLike) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def read(cls, path: str | os.PathLike) -> BitStream:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def canonical_json(obj: object) -> str:
    """Deterministic JSON: sorted keys, compact separators, no NaN, newline end."""
    return (
        json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
        + "\n"
    )


def write_json(path: str | os.PathLike, obj: object) -> None:
    atomic_write_text(path, canonical_json(obj))


def write_jsonl(path: str | os.PathLike, records: list[dict]) -> None:
    lines = [
        json.dumps(rec, sort_keys=True, separators=(",", ":"), allow_nan=False)
        for rec in records
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def write_csv(path: str | os.PathLike, header: list[str], rows: list[list[str]]) -> None:
    """Plain comma-joined CSV; callers pre-format every cell as a string."""
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row width does not match header")
    lines = [",".join(header)] + [",".join(row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
