"""IVIT tensor files and 8-bit binary PGM/PPM images.

IVIT layout (all little-endian)::

    b"IVIT"                magic
    u8                     format version (1)
    u32                    rank (>= 1)
    u32 * rank             dims
    f32 * prod(dims)       payload, row-major
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, BadVersionError, FormatError, ShapeError, TruncatedError

MAGIC = b"IVIT"
VERSION = 1


def encode_tensor(tensor) -> bytes:
    arr = np.asarray(tensor)
    if arr.ndim < 1:
        raise ShapeError("IVIT tensors need rank >= 1")
    head = MAGIC + struct.pack("<BI", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 9:
        raise TruncatedError(9, len(data))
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    version, rank = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise BadVersionError(f"unsupported IVIT version {version}")
    if rank < 1:
        raise FormatError("IVIT rank must be >= 1")
    head = 9 + 4 * rank
    if len(data) < head:
        raise TruncatedError(head, len(data))
    dims = struct.unpack_from(f"<{rank}I", data, 9)
    expected = head + 4 * int(np.prod(dims, dtype=np.int64))
    if len(data) < expected:
        raise TruncatedError(expected, len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload")
    payload = np.frombuffer(data, dtype="<f4", offset=head)
    return payload.astype(np.float64).reshape(dims)


def write_tensor(path, tensor) -> None:
    Path(path).write_bytes(encode_tensor(tensor))


def _read(path, decode) -> np.ndarray:
    try:
        return decode(Path(path).read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    return _read(path, decode_tensor)


def to_bytes8(values) -> np.ndarray:
    """Map ``[-1, 1]`` to ``0..255``, rounding half away from zero."""
    v = (np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5
    return np.floor(v + 0.5).astype(np.uint8)


def from_bytes8(b) -> np.ndarray:
    return np.asarray(b, dtype=np.float64) / 255.0 * 2.0 - 1.0


def encode_image(tensor) -> bytes:
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ShapeError(f"image must be (1|3, H, W), got {arr.shape}")
    C, H, W = arr.shape
    magic = b"P5" if C == 1 else b"P6"
    pix = to_bytes8(arr).transpose(1, 2, 0)
    return magic + f"\n{W} {H}\n255\n".encode("ascii") + pix.tobytes()


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        tokens.append(data[start:pos])
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("PNM header must end with a single whitespace byte")
    return tokens, pos + 1


def decode_image(data: bytes) -> np.ndarray:
    tokens, pos = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported PNM magic {magic!r}")
    try:
        W, H, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"non-integer PNM header field: {exc}") from None
    if maxval != 255 or W < 1 or H < 1:
        raise FormatError(f"unsupported PNM header W={W} H={H} maxval={maxval}")
    C = 1 if magic == b"P5" else 3
    need = W * H * C
    if len(data) - pos < need:
        raise TruncatedError(pos + need, len(data))
    pix = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(H, W, C)
    return from_bytes8(pix.transpose(2, 0, 1))


def write_image(path, tensor) -> None:
    Path(path).write_bytes(encode_image(tensor))


def read_image(path) -> np.ndarray:
    return _read(path, decode_image)


def load_array(path) -> np.ndarray:
    """Read an IVIT tensor or a PGM/PPM image, chosen by extension."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".pgm", ".ppm", ".pnm"):
        return read_image(path)
    return read_tensor(path)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
