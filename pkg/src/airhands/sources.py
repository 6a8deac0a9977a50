"""Frame producers and sinks.

Synthetic generators stand in for the helper's hand camera and the
worker's scene camera: they are pure functions of (spec, index,
resolution), byte-identical across platforms, and the hand generator
returns its own ground-truth mask so segmentation can be scored
exactly. Directory sinks/sources persist frames losslessly as binary
PPM (P6) plus an index of (seq, capture_ts, stream_id) lines.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SourceError
from .frames import RawFrame, StreamId, frame_from_array, make_frame
from .skin import Mask
from .slots import LatestSlot

__all__ = [
    "SyntheticHandSpec", "synthetic_hand_frame", "synthetic_scene_frame",
    "SyntheticHandSource", "SyntheticSceneSource", "UIHandSource",
    "CameraSource", "DirSource", "DirSink", "NullSink",
    "read_ppm", "write_ppm", "build_source", "build_sink",
]


@dataclass(frozen=True)
class SyntheticHandSpec:
    """Solid skin-colored ellipse moving along a circular path.

    The default skin tone RGB(200,120,90) has hue ~16.4 degrees, inside
    the detector's bootstrap range. ``orbit_radius`` 0 keeps the ellipse
    fixed at the frame center. ``orbit_period`` is frames per revolution.
    """

    skin_rgb: tuple[int, int, int] = (200, 120, 90)
    background_rgb: tuple[int, int, int] = (0, 0, 255)
    radii: tuple[int, int] = (10, 8)
    orbit_radius: float = 12.0
    orbit_period: int = 100

    def center(self, index: int, width: int, height: int) -> tuple[float, float]:
        theta = 2.0 * math.pi * index / self.orbit_period
        return (width / 2.0 + self.orbit_radius * math.cos(theta),
                height / 2.0 + self.orbit_radius * math.sin(theta))


def _ellipse_bits(cx: float, cy: float, rx: int, ry: int,
                  width: int, height: int) -> np.ndarray:
    # Center-of-pixel inclusion on the integer grid:
    # (x-cx)^2/rx^2 + (y-cy)^2/ry^2 <= 1
    rx = max(rx, 1)
    ry = max(ry, 1)
    ys, xs = np.ogrid[0:height, 0:width]
    return ((xs - cx) ** 2 / rx ** 2 + (ys - cy) ** 2 / ry ** 2) <= 1.0


def synthetic_hand_frame(spec: SyntheticHandSpec, index: int, width: int,
                         height: int, capture_ts: int = 0
                         ) -> tuple[RawFrame, Mask]:
    """Hand frame at path(index) plus the exact ground-truth mask."""
    cx, cy = spec.center(index, width, height)
    rx, ry = max(spec.radii[0], 1), max(spec.radii[1], 1)
    if cx - rx < 0 or cx + rx > width - 1 or cy - ry < 0 or cy + ry > height - 1:
        raise ConfigError(
            f"ellipse at ({cx:.1f},{cy:.1f}) radii ({rx},{ry}) leaves the "
            f"{width}x{height} frame")
    bits = _ellipse_bits(cx, cy, rx, ry, width, height)
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :] = spec.background_rgb
    arr[bits] = spec.skin_rgb
    frame = frame_from_array(arr, index, capture_ts, StreamId.HAND)
    return frame, Mask.from_bits(bits)


def synthetic_scene_frame(index: int, width: int, height: int,
                          capture_ts: int = 0) -> RawFrame:
    """Moving checkerboard-plus-gradient workspace pattern.

    Pixel values are a pure function of (x, y, index). The palette keeps
    red at 0, so every hue lands in 120..240 degrees and nothing
    classifies as skin under the default detector.
    """
    ys, xs = np.ogrid[0:height, 0:width]
    cell = ((xs + 3 * index) // 16 + (ys + 2 * index) // 16) % 2
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :, 0] = 0
    arr[:, :, 1] = (64 + (xs * 96) // max(width - 1, 1)).astype(np.uint8)
    arr[:, :, 2] = (150 + 24 * cell + (ys * 30) // max(height - 1, 1)
                    + (5 * index) % 32).astype(np.uint8)
    return frame_from_array(arr, index, capture_ts, StreamId.SCENE)


class SyntheticHandSource:
    def __init__(self, spec: SyntheticHandSpec, width: int, height: int):
        self.spec = spec
        self.width = width
        self.height = height
        self._index = 0
        self.last_truth: Mask | None = None

    def next_frame(self, capture_ts: int) -> RawFrame:
        frame, truth = synthetic_hand_frame(self.spec, self._index, self.width,
                                            self.height, capture_ts)
        self._index += 1
        self.last_truth = truth
        return frame


class SyntheticSceneSource:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._index = 0

    def next_frame(self, capture_ts: int) -> RawFrame:
        frame = synthetic_scene_frame(self._index, self.width, self.height,
                                      capture_ts)
        self._index += 1
        return frame


class UIHandSource:
    """Hand frames injected by the browser console via the gateway.

    Sticky: between injections the newest injected frame keeps being
    served, so the helper preview stays live.
    """

    def __init__(self, slot: LatestSlot):
        self.slot = slot

    def next_frame(self, capture_ts: int) -> RawFrame | None:
        return self.slot.peek()


class CameraSource:
    """Optional webcam adapter (requires opencv). Not used by any test."""

    def __init__(self, width: int, height: int, device: int = 0,
                 stream_id: StreamId = StreamId.SCENE):
        try:
            import cv2
        except ImportError as exc:
            raise SourceError("camera source requires opencv-python") from exc
        self._cv2 = cv2
        self._cap = cv2.VideoCapture(device)
        if not self._cap.isOpened():
            raise SourceError(f"cannot open camera device {device}")
        self.width = width
        self.height = height
        self.stream_id = stream_id
        self._seq = 0

    def next_frame(self, capture_ts: int) -> RawFrame | None:
        ok, bgr = self._cap.read()
        if not ok:
            return None
        cv2 = self._cv2
        if bgr.shape[1] != self.width or bgr.shape[0] != self.height:
            bgr = cv2.resize(bgr, (self.width, self.height))
        rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
        frame = frame_from_array(rgb, self._seq, capture_ts, self.stream_id)
        self._seq += 1
        return frame

    def close(self):
        self._cap.release()


# --- PPM persistence ---------------------------------------------------

def write_ppm(path: str | Path, frame: RawFrame) -> None:
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.pixels)


def read_ppm(path: str | Path) -> tuple[int, int, bytes]:
    """Parse a binary P6 file; returns (width, height, pixels)."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise SourceError(f"{path}: not a binary PPM (P6) file")
    # header: magic, width, height, maxval, separated by whitespace/comments
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        if start == pos:
            raise SourceError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise SourceError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise SourceError(f"{path}: PPM maxval must be 255, got {maxval}")
    pixels = data[pos:pos + width * height * 3]
    if len(pixels) != width * height * 3:
        raise SourceError(f"{path}: PPM pixel data truncated")
    return width, height, pixels


class DirSink:
    """Writes frame_<seq>.ppm files plus an index.txt of metadata lines."""

    def __init__(self, path: str | Path):
        self.dir = Path(path)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._index = open(self.dir / "index.txt", "a", encoding="ascii")

    def write(self, frame: RawFrame) -> None:
        write_ppm(self.dir / f"frame_{frame.seq:08d}.ppm", frame)
        self._index.write(f"{frame.seq} {frame.capture_ts} {int(frame.stream_id)}\n")
        self._index.flush()

    def close(self) -> None:
        self._index.close()


_INDEX_LINE = re.compile(r"^(\d+) (\d+) ([0-2])$")


class DirSource:
    """Replays a DirSink directory in seq order."""

    def __init__(self, path: str | Path):
        self.dir = Path(path)
        index_path = self.dir / "index.txt"
        if not index_path.exists():
            raise SourceError(f"{index_path}: missing index file")
        self._entries: list[tuple[int, int, int]] = []
        with open(index_path, encoding="ascii") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                m = _INDEX_LINE.match(line)
                if not m:
                    raise SourceError(f"{index_path}:{lineno}: corrupt index line {line!r}")
                self._entries.append((int(m.group(1)), int(m.group(2)), int(m.group(3))))
        self._entries.sort(key=lambda e: e[0])
        self._pos = 0

    def __len__(self) -> int:
        return len(self._entries)

    def next_frame(self, capture_ts: int = 0) -> RawFrame | None:
        """Next frame in seq order, or None when exhausted.

        capture_ts comes from the index, not the argument: replay
        preserves recorded timing metadata exactly.
        """
        if self._pos >= len(self._entries):
            return None
        seq, ts, stream_id = self._entries[self._pos]
        self._pos += 1
        path = self.dir / f"frame_{seq:08d}.ppm"
        if not path.exists():
            raise SourceError(f"{path}: frame file missing")
        width, height, pixels = read_ppm(path)
        return make_frame(width, height, pixels, seq, ts, StreamId(stream_id))


class NullSink:
    def write(self, frame: RawFrame) -> None:
        pass

    def close(self) -> None:
        pass


def build_source(cfg, inject_slot: LatestSlot | None = None):
    """Instantiate the configured frame producer for a node."""
    from .wire import Role  # local import keeps module deps one-way

    spec, _, arg = cfg.source.partition(":")
    if spec == "synthetic":
        if cfg.role is Role.HELPER:
            return SyntheticHandSource(_fitted_hand_spec(cfg.width, cfg.height),
                                       cfg.width, cfg.height)
        return SyntheticSceneSource(cfg.width, cfg.height)
    if spec == "dir":
        return DirSource(arg)
    if spec == "camera":
        stream = StreamId.HAND if cfg.role is Role.HELPER else StreamId.SCENE
        return CameraSource(cfg.width, cfg.height,
                            device=int(arg) if arg else 0, stream_id=stream)
    if spec == "ui":
        if inject_slot is None:
            raise ConfigError("source=ui requires the gateway to be enabled")
        return UIHandSource(inject_slot)
    raise ConfigError(f"unknown source spec {cfg.source!r}")


def build_sink(cfg):
    spec, _, arg = cfg.sink.partition(":")
    if spec == "dir":
        return DirSink(arg)
    # "ui" display happens through the gateway push; nothing extra to persist
    return NullSink()


def _fitted_hand_spec(width: int, height: int) -> SyntheticHandSpec:
    """Default hand spec scaled so the orbit stays inside the frame."""
    base = min(width, height)
    return SyntheticHandSpec(
        radii=(max(base // 6, 3), max(base // 8, 3)),
        orbit_radius=base / 5.0,
    )
