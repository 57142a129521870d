"""Lossless binary container for complex images ("CIMG v1").

Layout: 8-byte magic ``CIMG0001``, three little-endian uint32 (K, H, W),
then K*H*W little-endian float64 pairs (re, im) in channel-major, row-major
order.  Reading back a written file reproduces the input bit for bit.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import ComplexImage

MAGIC = b"CIMG0001"

__all__ = ["read_cimg", "write_cimg", "MAGIC"]


def write_cimg(path, image) -> None:
    """Write a complex image (or any 1-3D complex array) to ``path``."""
    if not isinstance(image, ComplexImage):
        image = ComplexImage(image)
    k, h, w = image.shape
    payload = np.ascontiguousarray(image.data, dtype="<c16").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", k, h, w))
        f.write(payload)


def read_cimg(path) -> ComplexImage:
    """Read a CIMG v1 file back into a :class:`ComplexImage`."""
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a CIMG v1 file")
    k, h, w = struct.unpack("<III", raw[8:20])
    expected = 20 + 16 * k * h * w
    if len(raw) != expected:
        raise ValueError(
            f"{path}: truncated CIMG payload ({len(raw)} bytes, expected {expected})"
        )
    data = np.frombuffer(raw[20:], dtype="<c16").reshape(k, h, w)
    return ComplexImage(data.astype(np.complex128))
