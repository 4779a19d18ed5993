"""Minimal deterministic 8-bit grayscale PNG writer for crop blobs."""

from __future__ import annotations

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, body: bytes) -> bytes:
    crc = zlib.crc32(tag + body) & 0xFFFFFFFF
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", crc)


def encode_png_gray(arr: np.ndarray) -> bytes:
    """Encode a 2D uint8 array as a grayscale PNG (filter 0, fixed zlib level)."""
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("expected a 2D uint8 array")
    h, w = arr.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)  # 8-bit grayscale
    raw = b"".join(b"\x00" + arr[r].tobytes() for r in range(h))
    idat = zlib.compress(raw, 6)
    return _SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")
