"""Versioned binary checkpoint container.

Layout (all integers unsigned 32-bit little-endian)::

    b"CM3M" | version | config digest (32 bytes) | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | float32 LE data
    CRC-32 of every preceding byte

Every tensor payload is a sequence of 32-bit words.  Arrays that are not
float32 are stored bit-for-bit: their raw little-endian bytes are viewed
as float32 words, the original dtype is recorded as a ``@dtype`` suffix on
the name, and a trailing axis counts the words per element.  Nothing is
ever converted numerically, so a roundtrip is exact.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

MAGIC = b"CM3M"
VERSION = 1
DIGEST_LEN = 32


class CheckpointError(Exception):
    pass


class FormatError(CheckpointError):
    """Not a checkpoint file (bad magic bytes)."""


class VersionError(CheckpointError):
    pass


class DigestError(CheckpointError):
    """The embedded configuration does not match the recorded digest."""


class TruncatedError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


_WORD_DTYPES = {"f64": np.float64, "i64": np.int64, "u64": np.uint64, "i32": np.int32,
                "u32": np.uint32}


def _encode(name: str, arr: np.ndarray) -> tuple[str, np.ndarray]:
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        return name, arr.astype("<f4", copy=False)
    if arr.dtype in (np.int8, np.int16, np.bool_, np.uint8):
        arr = arr.astype(np.int32)
    for tag, dt in _WORD_DTYPES.items():
        if arr.dtype == dt:
            le = np.ascontiguousarray(arr.astype(np.dtype(dt).newbyteorder("<"), copy=False))
            words = le.view("<f4").reshape(*arr.shape, np.dtype(dt).itemsize // 4)
            return f"{name}@{tag}", words
    raise TypeError(f"cannot store dtype {arr.dtype} for tensor {name}")


def _decode(name: str, words: np.ndarray) -> tuple[str, np.ndarray]:
    if "@" not in name:
        return name, words.astype(np.float32)
    base, tag = name.rsplit("@", 1)
    dt = np.dtype(_WORD_DTYPES[tag]).newbyteorder("<")
    raw = np.ascontiguousarray(words).view(dt).reshape(words.shape[:-1])
    return base, raw.astype(_WORD_DTYPES[tag])


def encode_text(text: str) -> np.ndarray:
    """UTF-8 text as uint32 words (space padded to a multiple of four bytes)."""
    data = text.encode("utf-8")
    data += b" " * (-len(data) % 4)
    return np.frombuffer(data, dtype="<u4").astype(np.uint32)


def decode_text(words: np.ndarray) -> str:
    return np.asarray(words, dtype="<u4").tobytes().decode("utf-8").rstrip(" ")


def dumps(tensors: dict, digest: bytes) -> bytes:
    if len(digest) != DIGEST_LEN:
        raise ValueError("digest must be 32 bytes")
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += digest
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        stored_name, words = _encode(name, arr)
        b = stored_name.encode("utf-8")
        out += struct.pack("<I", len(b)) + b
        out += struct.pack("<I", words.ndim)
        out += struct.pack(f"<{words.ndim}I", *words.shape)
        out += np.ascontiguousarray(words, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def loads(data: bytes) -> tuple[dict, bytes]:
    """Parse a checkpoint; returns (tensors, digest)."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic bytes: not a checkpoint file")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedError(f"file truncated at byte {len(data)} (needed {pos + n})")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise VersionError(f"checkpoint version {version}, expected {VERSION}")
    digest = take(DIGEST_LEN)
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        words = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
        key, arr = _decode(name, words)
        tensors[key] = arr
    (crc,) = struct.unpack("<I", take(4))
    if pos != len(data):
        raise ChecksumError(f"{len(data) - pos} unexpected trailing bytes")
    if crc != zlib.crc32(data[:pos - 4]) & 0xFFFFFFFF:
        raise ChecksumError("checksum mismatch: file is corrupted")
    return tensors, digest


def write(path, tensors: dict, digest: bytes):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors, digest))


def read(path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        return loads(fh.read())
