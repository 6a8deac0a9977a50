"""In-memory frame representation and the PSNR quality metric.

Every pipeline stage exchanges RawFrame values: 8-bit interleaved RGB,
row-major, no alpha. Frames are immutable once constructed and safe to
hand between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DimensionError, ValidationError

__all__ = ["StreamId", "RawFrame", "make_frame", "psnr", "INFINITE_PSNR"]

#: Distinguished PSNR value for byte-identical frames (MSE = 0).
INFINITE_PSNR = math.inf


class StreamId(IntEnum):
    SCENE = 0
    COMPOSITE = 1
    HAND = 2


@dataclass(frozen=True)
class RawFrame:
    """One decoded RGB image plus its stream identity and timing metadata.

    ``pixels`` is row-major, 3 bytes per pixel in R,G,B order and its
    length is exactly ``width * height * 3``. ``seq`` is a per-source
    monotone counter starting at 0; ``capture_ts`` is integer milliseconds
    since the Unix epoch.
    """

    width: int
    height: int
    pixels: bytes
    seq: int
    capture_ts: int
    stream_id: StreamId

    def to_array(self) -> np.ndarray:
        """Pixels as an (height, width, 3) uint8 array (read-only view)."""
        arr = np.frombuffer(self.pixels, dtype=np.uint8)
        return arr.reshape(self.height, self.width, 3)

    def with_meta(self, seq: int | None = None, capture_ts: int | None = None,
                  stream_id: StreamId | None = None) -> "RawFrame":
        """Copy of this frame with some metadata fields replaced."""
        return RawFrame(
            self.width, self.height, self.pixels,
            self.seq if seq is None else seq,
            self.capture_ts if capture_ts is None else capture_ts,
            self.stream_id if stream_id is None else StreamId(stream_id),
        )


def make_frame(width: int, height: int, pixels: bytes, seq: int,
               capture_ts: int, stream_id: StreamId | int) -> RawFrame:
    """Construct a validated RawFrame.

    Raises ValidationError when the pixel buffer length disagrees with
    ``width * height * 3`` or a dimension is not positive.
    """
    if width <= 0 or height <= 0:
        raise ValidationError(f"dimensions must be positive, got {width}x{height}")
    expected = width * height * 3
    if len(pixels) != expected:
        raise ValidationError(
            f"pixel buffer length mismatch for {width}x{height}: "
            f"expected {expected}, got {len(pixels)}")
    return RawFrame(width, height, bytes(pixels), seq, capture_ts, StreamId(stream_id))


def frame_from_array(arr: np.ndarray, seq: int, capture_ts: int,
                     stream_id: StreamId | int) -> RawFrame:
    """Build a frame from an (h, w, 3) uint8 array."""
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected (h, w, 3) array, got shape {arr.shape}")
    h, w = arr.shape[:2]
    return make_frame(w, h, np.ascontiguousarray(arr, dtype=np.uint8).tobytes(),
                      seq, capture_ts, stream_id)


def psnr(a: RawFrame, b: RawFrame) -> float:
    """Peak signal-to-noise ratio in dB over raw RGB byte channels.

    Returns INFINITE_PSNR (math.inf) when the frames are byte-identical.
    Raises DimensionError when the frames differ in size.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionError(
            f"psnr requires equal dimensions, got {a.width}x{a.height} "
            f"vs {b.width}x{b.height}")
    da = a.to_array().astype(np.float64)
    db = b.to_array().astype(np.float64)
    mse = float(np.mean((da - db) ** 2))
    if mse == 0.0:
        return INFINITE_PSNR
    return 10.0 * math.log10(255.0 ** 2 / mse)
