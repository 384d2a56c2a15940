"""Image container and the on-disk formats shared by every other module.

Tensors live on disk in a tiny little-endian container::

    b"BRSTNSR1" | u32 height | u32 width | u32 channels
                | f32 range_min | f32 range_max | f32 data[h*w*c]

The data block is row-major (height, width, channels).  Previews are written
as 8-bit binary PGM (P5) with an explicit display window.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"BRSTNSR1"
_HEADER = struct.Struct("<8s3I2f")


class TensorError(ValueError):
    """Base class for tensor container problems."""


class NonFiniteError(TensorError):
    pass


class BadMagicError(TensorError):
    pass


class TruncatedError(TensorError):
    pass


class ZeroDimensionError(TensorError):
    pass


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """A 2-D float32 image with ``channels`` planes and a nominal intensity range.

    ``data`` always has shape ``(height, width, channels)`` and is read-only.
    """

    data: np.ndarray
    range_min: float = -1.0
    range_max: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise TensorError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
        if 0 in arr.shape:
            raise ZeroDimensionError(f"zero-sized dimension in shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("image contains NaN or Inf")
        if not float(self.range_min) < float(self.range_max):
            raise TensorError(f"range_min {self.range_min} must be < range_max {self.range_max}")
        arr = np.array(arr, dtype=np.float32, order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        # range metadata is f32 on disk; keep it f32-exact so round trips are bit-exact
        object.__setattr__(self, "range_min", float(np.float32(self.range_min)))
        object.__setattr__(self, "range_max", float(np.float32(self.range_max)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def plane(self) -> np.ndarray:
        """First channel as a 2-D array (the only channel in every restoration task here)."""
        return self.data[:, :, 0]

    def with_data(self, data) -> "ImageTensor":
        """New tensor with the same range metadata and different pixel values."""
        return ImageTensor(np.reshape(np.asarray(data), self.shape), self.range_min, self.range_max)

    def __eq__(self, other):
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.range_min == other.range_min
            and self.range_max == other.range_max
            and np.array_equal(self.data.view(np.uint32), other.data.view(np.uint32))
        )

    __hash__ = None


def as_array(x) -> np.ndarray:
    """Float64 view of an ImageTensor, array or scalar for numerical work."""
    if isinstance(x, ImageTensor):
        return x.data.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def write_tensor(t: ImageTensor, path) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NonFiniteError(f"refusing to write non-finite tensor to {path}")
    header = _HEADER.pack(MAGIC, t.height, t.width, t.channels, t.range_min, t.range_max)
    payload = t.data.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_tensor(path) -> ImageTensor:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a BRSTNSR1 file")
    if len(raw) < _HEADER.size:
        raise TruncatedError(f"{path}: header truncated ({len(raw)} bytes)")
    _, h, w, c, lo, hi = _HEADER.unpack_from(raw)
    if h == 0 or w == 0 or c == 0:
        raise ZeroDimensionError(f"{path}: zero dimension in header ({h}, {w}, {c})")
    expected = _HEADER.size + 4 * h * w * c
    if len(raw) < expected:
        raise TruncatedError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise TensorError(f"{path}: {len(raw) - expected} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=_HEADER.size)
    return ImageTensor(data.reshape(h, w, c).astype(np.float32), lo, hi)


def pgm_levels(values, display_min: float, display_max: float) -> np.ndarray:
    """Map intensities to 0..255 with round-half-up inside the display window."""
    if not display_min < display_max:
        raise ValueError("display_min must be < display_max")
    scaled = (np.asarray(values, dtype=np.float64) - display_min) / (display_max - display_min)
    return np.floor(255.0 * np.clip(scaled, 0.0, 1.0) + 0.5).astype(np.uint8)


def export_pgm(t: ImageTensor, path, display_min: float, display_max: float) -> None:
    if t.channels != 1:
        raise TensorError(f"PGM export needs a single channel, got {t.channels}")
    pixels = pgm_levels(t.plane, display_min, display_max)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{t.width} {t.height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes(order="C"))


def read_pgm(path) -> np.ndarray:
    """Read back an 8-bit P5 file written by :func:`export_pgm`."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise TensorError(f"{path}: not a binary PGM")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise TensorError(f"{path}: only 8-bit PGM supported")
    body = raw[m.end():]
    if len(body) < width * height:
        raise TruncatedError(f"{path}: PGM payload truncated")
    return np.frombuffer(body[: width * height], dtype=np.uint8).reshape(height, width)
