"""Pixel compositing of extracted hand pixels over the workspace scene."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .frames import RawFrame, StreamId, frame_from_array
from .skin import Mask

__all__ = ["composite"]


def composite(scene: RawFrame, hand: RawFrame, mask: Mask) -> RawFrame:
    """Hard binary overlay: hand pixel where the mask is set, scene otherwise.

    The result carries the scene's seq and capture_ts (worker-perceived
    latency is scene round-trip age) and stream id COMPOSITE.
    """
    shapes = {(scene.width, scene.height), (hand.width, hand.height),
              (mask.width, mask.height)}
    if len(shapes) != 1:
        raise DimensionError(
            f"scene {scene.width}x{scene.height}, hand {hand.width}x{hand.height}, "
            f"mask {mask.width}x{mask.height} must all match")
    out = np.where(mask.bits[:, :, None], hand.to_array(), scene.to_array())
    return frame_from_array(out, scene.seq, scene.capture_ts, StreamId.COMPOSITE)
