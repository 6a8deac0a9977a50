"""Adaptive skin detector for extracting hand pixels from the hand camera.

The classifier keeps a 64-bin hue histogram (bin width 5.625 degrees)
with fixed saturation/value gates. Before the first adaptation it falls
back to a bootstrap hue range; afterwards a pixel is skin when its hue
bin carries at least ``tau`` of the histogram mass. Adaptation blends a
fresh histogram of detected pixels into the model with rate ``alpha``,
so the model tracks lighting drift while the gates stay fixed.

Models are values: ``adapt`` returns a new model instead of mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError
from .frames import RawFrame

__all__ = [
    "HUE_BINS", "HUE_BIN_WIDTH", "SkinModel", "Mask",
    "default_model", "rgb_to_hsv", "hue_bin", "classify_pixel",
    "segment", "adapt",
]

HUE_BINS = 64
HUE_BIN_WIDTH = 360.0 / HUE_BINS  # 5.625 degrees


@dataclass(frozen=True, eq=False)
class SkinModel:
    """Classifier state. ``hue_hist`` sums to 1 once bootstrapped."""

    hue_hist: np.ndarray
    bootstrap_lo: float = 0.0
    bootstrap_hi: float = 50.0
    s_min: float = 0.20
    v_min: float = 0.15
    tau: float = 0.5 / HUE_BINS
    alpha: float = 0.05
    adapt_min_pixels: int = 200
    bootstrapped: bool = False

    def __post_init__(self):
        hist = np.asarray(self.hue_hist, dtype=np.float64)
        if hist.shape != (HUE_BINS,):
            raise ValueError(f"hue_hist must have shape ({HUE_BINS},), got {hist.shape}")
        if np.any(hist < 0):
            raise ValueError("hue_hist weights must be non-negative")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        for name in ("s_min", "v_min"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {val}")
        hist = hist.copy()
        hist.flags.writeable = False
        object.__setattr__(self, "hue_hist", hist)

    def with_params(self, **kwargs) -> "SkinModel":
        """Copy with some threshold fields replaced (live tuning)."""
        return replace(self, **kwargs)


@dataclass(frozen=True, eq=False)
class Mask:
    """Per-pixel binary skin map aligned to a companion RawFrame."""

    width: int
    height: int
    bits: np.ndarray  # bool, shape (height, width), read-only
    skin_count: int

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "Mask":
        bits = np.array(bits, dtype=bool)
        bits.flags.writeable = False
        h, w = bits.shape
        return cls(width=w, height=h, bits=bits, skin_count=int(bits.sum()))


def default_model(**overrides) -> SkinModel:
    """Fresh un-bootstrapped model with the default thresholds."""
    return SkinModel(hue_hist=np.zeros(HUE_BINS), **overrides)


def rgb_to_hsv(r: int, g: int, b: int) -> tuple[float, float, float]:
    """Standard HSV from 8-bit RGB: h in [0, 360), s and v in [0, 1].

    h is defined as 0 for achromatic pixels (max == min).
    """
    mx = max(r, g, b)
    mn = min(r, g, b)
    v = mx / 255.0
    s = 0.0 if mx == 0 else (mx - mn) / mx
    if mx == mn:
        h = 0.0
    elif mx == r:
        h = 60.0 * (((g - b) / (mx - mn)) % 6.0)
    elif mx == g:
        h = 60.0 * ((b - r) / (mx - mn) + 2.0)
    else:
        h = 60.0 * ((r - g) / (mx - mn) + 4.0)
    return h, s, v


def hue_bin(h: float) -> int:
    """Histogram bin index for a hue in [0, 360)."""
    return min(int(h / HUE_BIN_WIDTH), HUE_BINS - 1)


def classify_pixel(model: SkinModel, h: float, s: float, v: float) -> bool:
    """Skin decision for one pixel's HSV triple."""
    if s < model.s_min or v < model.v_min:
        return False
    if not model.bootstrapped:
        return model.bootstrap_lo <= h <= model.bootstrap_hi
    return bool(model.hue_hist[hue_bin(h)] >= model.tau)


def _hsv_arrays(frame: RawFrame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized rgb_to_hsv over a whole frame.

    Matches the scalar formula bit-exactly: same float64 operations in
    the same order, same branch priority (achromatic, then r, g, b).
    """
    rgb = frame.to_array().astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn

    v = mx / 255.0
    s = np.where(mx == 0, 0.0, delta / np.where(mx == 0, 1.0, mx))

    safe = np.where(delta == 0, 1.0, delta)
    h = np.select(
        [delta == 0, mx == r, mx == g],
        [0.0,
         60.0 * (((g - b) / safe) % 6.0),
         60.0 * ((b - r) / safe + 2.0)],
        default=60.0 * ((r - g) / safe + 4.0),
    )
    return h, s, v


def _classify_arrays(model: SkinModel, h: np.ndarray, s: np.ndarray,
                     v: np.ndarray) -> np.ndarray:
    gate = (s >= model.s_min) & (v >= model.v_min)
    if not model.bootstrapped:
        rule = (h >= model.bootstrap_lo) & (h <= model.bootstrap_hi)
    else:
        bins = np.minimum((h / HUE_BIN_WIDTH).astype(np.int64), HUE_BINS - 1)
        rule = model.hue_hist[bins] >= model.tau
    return gate & rule


def _erode(m: np.ndarray) -> np.ndarray:
    """Binary erosion, 3x3 cross, out-of-frame treated as background."""
    h, w = m.shape
    p = np.zeros((h + 2, w + 2), dtype=bool)
    p[1:-1, 1:-1] = m
    return (p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1]
            & p[1:-1, :-2] & p[1:-1, 2:])


def _dilate(m: np.ndarray) -> np.ndarray:
    """Binary dilation, 3x3 cross, out-of-frame treated as background."""
    h, w = m.shape
    p = np.zeros((h + 2, w + 2), dtype=bool)
    p[1:-1, 1:-1] = m
    return (p[1:-1, 1:-1] | p[:-2, 1:-1] | p[2:, 1:-1]
            | p[1:-1, :-2] | p[1:-1, 2:])


def segment(frame: RawFrame, model: SkinModel) -> Mask:
    """Per-pixel classification then morphological open and close.

    Open (erode + dilate) removes isolated speckle, close (dilate +
    erode) fills pinholes; both use a 3x3 cross, one iteration each.
    Deterministic for fixed inputs.
    """
    h, s, v = _hsv_arrays(frame)
    raw = _classify_arrays(model, h, s, v)
    opened = _dilate(_erode(raw))
    closed = _erode(_dilate(opened))
    return Mask.from_bits(closed)


def adapt(model: SkinModel, frame: RawFrame, mask: Mask) -> SkinModel:
    """Blend a histogram of the masked pixels' hues into the model.

    Returns the model unchanged when fewer than ``adapt_min_pixels``
    pixels are masked. On the first adaptation the fresh histogram
    replaces the (empty) prior outright.
    """
    if (mask.width, mask.height) != (frame.width, frame.height):
        raise DimensionError(
            f"mask {mask.width}x{mask.height} does not match frame "
            f"{frame.width}x{frame.height}")
    if mask.skin_count < model.adapt_min_pixels:
        return model

    h, _, _ = _hsv_arrays(frame)
    hues = h[mask.bits]
    bins = np.minimum((hues / HUE_BIN_WIDTH).astype(np.int64), HUE_BINS - 1)
    fresh = np.bincount(bins, minlength=HUE_BINS).astype(np.float64)
    fresh /= float(mask.skin_count)

    if not model.bootstrapped:
        new_hist = fresh
    else:
        new_hist = (1.0 - model.alpha) * model.hue_hist + model.alpha * fresh
    return replace(model, hue_hist=new_hist, bootstrapped=True)
