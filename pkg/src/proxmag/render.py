"""Image export: dB-scaled magnitude previews and cyclic phase maps.

PGM (binary P5) is the mandatory lossless preview format and is written
byte-exactly by this module; color phase maps go to PNG.  The default dB
display window clips between -31 and -6 dB relative to the peak magnitude.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from PIL import Image

DEFAULT_DB_WINDOW = (-31.0, -6.0)

__all__ = [
    "DEFAULT_DB_WINDOW",
    "magnitude_db_u8",
    "phase_rgb",
    "write_pgm",
    "write_image",
]


def magnitude_db_u8(mag: np.ndarray, window: Tuple[float, float] = DEFAULT_DB_WINDOW) -> np.ndarray:
    """Map magnitudes to 8-bit gray: ``20 log10(|z|/peak)`` clipped to ``window``.

    The window top maps to 255 and the bottom to 0; an all-constant image
    renders uniform at the window top.  Zero peak renders black.
    """
    mag = np.abs(np.asarray(mag, dtype=np.float64))
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError("window must satisfy lo < hi")
    peak = float(mag.max(initial=0.0))
    if peak == 0.0:
        return np.zeros(mag.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / peak)
    db = np.clip(db, lo, hi)
    scaled = (db - lo) / (hi - lo)
    return np.round(scaled * 255.0).astype(np.uint8)


def phase_rgb(angles: np.ndarray) -> np.ndarray:
    """Cyclic RGB colormap of phase angles in [-pi, pi); wraps seamlessly."""
    t = np.asarray(angles, dtype=np.float64)
    r = 0.5 * (1.0 + np.cos(t))
    g = 0.5 * (1.0 + np.cos(t - 2.0 * np.pi / 3.0))
    b = 0.5 * (1.0 + np.cos(t + 2.0 * np.pi / 3.0))
    return np.round(np.stack([r, g, b], axis=-1) * 255.0).astype(np.uint8)


def write_pgm(path, gray: np.ndarray) -> None:
    """Binary P5 PGM with maxval 255; byte-exact and dependency-free."""
    gray = np.asarray(gray)
    if gray.dtype != np.uint8 or gray.ndim != 2:
        raise ValueError("write_pgm expects a 2-D uint8 array")
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def write_image(path, array: np.ndarray) -> None:
    """Write gray (2-D) or RGB (3-D) uint8 data; format chosen by extension."""
    path = str(path)
    array = np.asarray(array)
    if path.endswith(".pgm"):
        write_pgm(path, array)
        return
    Image.fromarray(array).save(path)
