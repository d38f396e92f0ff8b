"""Adaptive average pooling over variable-size feature grids.

Output cell ``(i, j)`` of an ``out_h x out_w`` pooling averages input rows
``floor(i*H/out_h) .. ceil((i+1)*H/out_h) - 1`` and the matching column
range. Neighbouring bins overlap when the sizes do not divide evenly.

Bin sums are exactly rounded (``math.fsum``), so the result does not depend
on summation order.

Grids also load from a binary sidecar: a little-endian header of three
uint32 values ``(height, width, channels)`` followed by ``height*width*channels``
float32 values in row-major (height, width, channel) order.
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np

_HEADER = struct.Struct("<3I")


class InvalidGridError(ValueError):
    pass


def as_grid(values) -> np.ndarray:
    """Coerce to a float64 ``(H, W, C)`` array; 2-D input gets one channel."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise InvalidGridError(f"feature grid must be 2-D or 3-D, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise InvalidGridError(f"empty feature grid of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidGridError("feature grid contains non-finite values")
    return arr


def bin_edges(size: int, out: int) -> list[tuple[int, int]]:
    # integer floor/ceil keeps the edges exact for any size
    return [((i * size) // out, -((-(i + 1) * size) // out)) for i in range(out)]


def adaptive_avg_pool(grid, out_h: int = 7, out_w: int = 7) -> np.ndarray:
    """Pool an ``(H, W, C)`` grid to ``(out_h, out_w, C)``."""
    arr = as_grid(grid)
    if out_h < 1 or out_w < 1:
        raise InvalidGridError(f"output size must be positive, got {out_h}x{out_w}")
    H, W, C = arr.shape
    rows, cols = bin_edges(H, out_h), bin_edges(W, out_w)
    out = np.empty((out_h, out_w, C), dtype=np.float64)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            block = arr[r0:r1, c0:c1, :].reshape(-1, C)
            n = block.shape[0]
            for c in range(C):
                out[i, j, c] = math.fsum(block[:, c]) / n
    return out


def save_grid(grid, path: str | os.PathLike) -> None:
    arr = as_grid(grid)
    H, W, C = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(H, W, C))
        fh.write(arr.astype("<f4", order="C").tobytes())


def load_grid(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise InvalidGridError(f"{path}: truncated header")
    H, W, C = _HEADER.unpack_from(data)
    expected = _HEADER.size + 4 * H * W * C
    if H < 1 or W < 1 or C < 1:
        raise InvalidGridError(f"{path}: empty grid {H}x{W}x{C}")
    if len(data) != expected:
        raise InvalidGridError(f"{path}: expected {expected} bytes for {H}x{W}x{C}, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(H, W, C)
    return as_grid(arr)
