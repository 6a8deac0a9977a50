"""JPEG compression of frames for transport.

Baseline sequential JPEG with 4:2:0 chroma subsampling; payloads are
plain JFIF files, decodable by any image viewer or browser. Sequence
numbers and timestamps never travel inside the JPEG: the wire envelope
carries them, and ``decode_jpeg`` reattaches them to the pixels.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from PIL import Image

from .errors import ConfigError, DecodeError, ResourceError
from .frames import RawFrame, StreamId, make_frame

__all__ = ["EncodedFrame", "encode_jpeg", "decode_jpeg",
           "MAX_DECODE_DIM", "DEFAULT_QUALITY"]

DEFAULT_QUALITY = 80

#: Largest width or height decode_jpeg will accept (decompression-bomb cap).
MAX_DECODE_DIM = 4096

_SOI = b"\xff\xd8"
_EOI = b"\xff\xd9"


@dataclass(frozen=True)
class EncodedFrame:
    """A JPEG payload plus the dimensions and quality used at encode time."""

    payload: bytes
    width: int
    height: int
    quality: int


def encode_jpeg(frame: RawFrame, quality: int = DEFAULT_QUALITY) -> EncodedFrame:
    """Encode a frame as baseline JPEG at the given quality (1-100)."""
    if not isinstance(quality, int) or not (1 <= quality <= 100):
        raise ConfigError(f"jpeg quality must be an integer in 1..100, got {quality!r}")
    img = Image.frombytes("RGB", (frame.width, frame.height), frame.pixels)
    buf = io.BytesIO()
    # subsampling=2 selects 4:2:0; PIL writes baseline sequential by default
    img.save(buf, format="JPEG", quality=quality, subsampling=2)
    return EncodedFrame(payload=buf.getvalue(), width=frame.width,
                        height=frame.height, quality=quality)


def decode_jpeg(payload: bytes, seq: int, capture_ts: int,
                stream_id: StreamId | int,
                max_dim: int = MAX_DECODE_DIM) -> RawFrame:
    """Decode a JPEG payload and attach the envelope's metadata.

    Any malformed input raises DecodeError, never a crash. Payloads must
    be complete JFIF files (SOI prefix, EOI suffix); image dimensions
    beyond ``max_dim`` raise ResourceError before pixel decode.
    """
    if len(payload) < 4 or not payload.startswith(_SOI) or not payload.endswith(_EOI):
        raise DecodeError("payload is not a complete JPEG (missing SOI/EOI markers)")
    try:
        img = Image.open(io.BytesIO(payload))
        if img.format != "JPEG":
            raise DecodeError(f"payload decodes as {img.format}, not JPEG")
        w, h = img.size
        if w > max_dim or h > max_dim:
            raise ResourceError(f"decoded dimensions {w}x{h} exceed cap {max_dim}")
        rgb = img.convert("RGB")
        pixels = rgb.tobytes()
    except (DecodeError, ResourceError):
        raise
    except Exception as exc:
        raise DecodeError(f"jpeg decode failed: {exc}") from exc
    return make_frame(w, h, pixels, seq, capture_ts, stream_id)
