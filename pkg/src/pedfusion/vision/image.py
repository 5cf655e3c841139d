"""Grayscale frames and binary PGM (P5) IO."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

NOMINAL_WIDTH = 640
NOMINAL_HEIGHT = 480


@dataclass(frozen=True, eq=False)
class GrayFrame:
    """8-bit single-channel image, row-major, with a capture timestamp.

    The pixel array is made read-only on construction.
    """

    pixels: np.ndarray
    t_s: float = 0.0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("frame must be 2-D")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def mean_intensity(self) -> float:
        return float(self.pixels.mean()) if self.pixels.size else 0.0

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayFrame):
            return NotImplemented
        return self.t_s == other.t_s and np.array_equal(self.pixels, other.pixels)


def write_pgm(path: str | Path, frame: GrayFrame) -> None:
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.tobytes())


def _tokens(data: bytes):
    """Yield (token, end_offset) for whitespace-separated header tokens, skipping comments."""
    i, n = 0, len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path: str | Path, t_s: float = 0.0) -> GrayFrame:
    data = Path(path).read_bytes()
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        w, _ = next(toks)
        h, _ = next(toks)
        maxval, end = next(toks)
    except StopIteration:
        raise ValueError(f"{path}: truncated PGM header") from None
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    width, height, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    start = end + 1  # single whitespace byte after maxval
    raster = data[start:start + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, got {len(raster)}")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayFrame(px.copy(), t_s=t_s)
