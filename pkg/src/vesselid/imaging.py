"""Pixel-level primitives: color conversion, cropping, masking and hue histograms.

All operations are pure functions; image buffers are immutable after
construction so they can be shared freely between worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from PIL import Image

from .errors import BinMismatch, EmptyCrop, InsufficientPixels

# BT.601 luma weights; fixed so grayscale (and hence descriptors) reproduce.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

DEFAULT_HUE_BINS = 36


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit RGB image with an optional 8-bit alpha plane."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8, read-only
    alpha: Optional[np.ndarray] = None  # (height, width) uint8, read-only

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        if (self.width, self.height) != (other.width, other.height):
            return False
        if not np.array_equal(self.pixels, other.pixels):
            return False
        if (self.alpha is None) != (other.alpha is None):
            return False
        return self.alpha is None or np.array_equal(self.alpha, other.alpha)

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel array {px.shape} does not match {self.height}x{self.width}x3"
            )
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.alpha is not None:
            al = np.ascontiguousarray(self.alpha, dtype=np.uint8)
            if al.shape != (self.height, self.width):
                raise ValueError("alpha dimensions do not match image")
            al.setflags(write=False)
            object.__setattr__(self, "alpha", al)

    @classmethod
    def from_array(cls, pixels: np.ndarray, alpha: Optional[np.ndarray] = None) -> "ImageBuffer":
        h, w = pixels.shape[:2]
        return cls(width=w, height=h, pixels=pixels, alpha=alpha)

    @classmethod
    def load_png(cls, path) -> "ImageBuffer":
        with Image.open(path) as im:
            if im.mode == "RGBA":
                arr = np.asarray(im, dtype=np.uint8)
                return cls.from_array(arr[:, :, :3], arr[:, :, 3])
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            return cls.from_array(arr)

    def save_png(self, path) -> None:
        if self.alpha is not None:
            rgba = np.dstack([self.pixels, self.alpha])
            Image.fromarray(rgba, mode="RGBA").save(path, format="PNG")
        else:
            Image.fromarray(np.asarray(self.pixels), mode="RGB").save(path, format="PNG")


class HsvPixel(NamedTuple):
    hue: float        # degrees in [0, 360)
    saturation: float  # [0, 1]
    value: float       # [0, 1]


@dataclass(frozen=True, eq=False)
class PixelMask:
    """Per-pixel retain/discard bits; dimensions match the masked image."""

    width: int
    height: int
    bits: np.ndarray  # (height, width) bool

    def __eq__(self, other):
        return (
            isinstance(other, PixelMask)
            and (self.width, self.height) == (other.width, other.height)
            and np.array_equal(self.bits, other.bits)
        )

    def __post_init__(self):
        b = np.ascontiguousarray(self.bits, dtype=bool)
        if b.shape != (self.height, self.width):
            raise ValueError("mask dimensions do not match bits array")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def full(cls, width: int, height: int) -> "PixelMask":
        return cls(width, height, np.ones((height, width), dtype=bool))


@dataclass(frozen=True, eq=False)
class HueHistogram:
    """L1-normalized hue distribution over contributing foreground pixels."""

    bins: np.ndarray  # (num_bins,) float64, sums to 1
    pixel_count: int

    def __eq__(self, other):
        return (
            isinstance(other, HueHistogram)
            and self.pixel_count == other.pixel_count
            and np.array_equal(self.bins, other.bins)
        )

    def __post_init__(self):
        b = np.ascontiguousarray(self.bins, dtype=np.float64)
        b.setflags(write=False)
        object.__setattr__(self, "bins", b)

    @property
    def num_bins(self) -> int:
        return int(self.bins.shape[0])


@dataclass(frozen=True)
class MaskConfig:
    """Blue/white background classification thresholds (hue in degrees)."""

    blue_hue_lo: float = 180.0
    blue_hue_hi: float = 260.0
    blue_sat_min: float = 0.2
    white_sat_max: float = 0.15
    white_val_min: float = 0.7
    disabled: bool = False  # set when the target itself is blue or white


@dataclass(frozen=True)
class HistogramConfig:
    num_bins: int = DEFAULT_HUE_BINS
    chroma_floor: float = 0.1  # hue of near-gray pixels is noise
    min_pixels: int = 50


def rgb_to_hsv(r: int, g: int, b: int) -> HsvPixel:
    """Convert one 8-bit RGB pixel to HSV; hue is 0 when saturation is 0."""
    rf, gf, bf = r / 255.0, g / 255.0, b / 255.0
    mx = max(rf, gf, bf)
    mn = min(rf, gf, bf)
    delta = mx - mn
    value = mx
    saturation = 0.0 if mx == 0.0 else delta / mx
    if delta == 0.0:
        hue = 0.0
    elif mx == rf:
        hue = 60.0 * (((gf - bf) / delta) % 6.0)
    elif mx == gf:
        hue = 60.0 * ((bf - rf) / delta + 2.0)
    else:
        hue = 60.0 * ((rf - gf) / delta + 4.0)
    if hue >= 360.0:
        hue -= 360.0
    return HsvPixel(hue, saturation, value)


def rgb_array_to_hsv(pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB->HSV over a (H, W, 3) uint8 array.

    Returns (hue_degrees, saturation, value) float64 planes with the same
    conventions as rgb_to_hsv.
    """
    rgb = pixels.astype(np.float64) / 255.0
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    delta = mx - mn
    value = mx
    saturation = np.zeros_like(mx)
    nonzero = mx > 0.0
    saturation[nonzero] = delta[nonzero] / mx[nonzero]

    hue = np.zeros_like(mx)
    chrom = delta > 0.0
    safe = np.where(chrom, delta, 1.0)
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    r_max = chrom & (mx == r)
    g_max = chrom & (mx == g) & ~r_max
    b_max = chrom & ~r_max & ~g_max
    hue = np.where(r_max, 60.0 * (((g - b) / safe) % 6.0), hue)
    hue = np.where(g_max, 60.0 * ((b - r) / safe + 2.0), hue)
    hue = np.where(b_max, 60.0 * ((r - g) / safe + 4.0), hue)
    hue = np.where(hue >= 360.0, hue - 360.0, hue)
    return hue, saturation, value


def to_grayscale(img: ImageBuffer) -> np.ndarray:
    """BT.601 luma as a (H, W) uint8 array."""
    px = img.pixels.astype(np.float64)
    luma = _LUMA_R * px[:, :, 0] + _LUMA_G * px[:, :, 1] + _LUMA_B * px[:, :, 2]
    return np.floor(luma + 0.5).astype(np.uint8)


def _bilinear_upscale(plane: np.ndarray, factor: int) -> np.ndarray:
    """Upscale a 2D uint8 plane by an integer factor with bilinear sampling."""
    h, w = plane.shape
    out_h, out_w = h * factor, w * factor
    # Pixel-center mapping keeps the result independent of image content scale.
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) / factor - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) / factor - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    p = plane.astype(np.float64)
    top = p[y0[:, None], x0[None, :]] * (1 - wx) + p[y0[:, None], x1[None, :]] * wx
    bot = p[y1[:, None], x0[None, :]] * (1 - wx) + p[y1[:, None], x1[None, :]] * wx
    out = top * (1 - wy) + bot * wy
    return np.floor(out + 0.5).astype(np.uint8)


def crop_and_upscale(
    img: ImageBuffer, box: Tuple[float, float, float, float], min_side: int
) -> ImageBuffer:
    """Crop a normalized (cx, cy, w, h) box and upscale small crops.

    The crop is rounded to integer pixel bounds. If its smaller side is below
    ``min_side`` the crop is upscaled bilinearly by the smallest integer
    factor that brings it to ``min_side`` or more; aspect ratio is preserved.
    Raises EmptyCrop when the rounded crop has zero area.
    """
    cx, cy, w, h = box
    x0 = int(round((cx - w / 2.0) * img.width))
    x1 = int(round((cx + w / 2.0) * img.width))
    y0 = int(round((cy - h / 2.0) * img.height))
    y1 = int(round((cy + h / 2.0) * img.height))
    x0, x1 = max(0, x0), min(img.width, x1)
    y0, y1 = max(0, y0), min(img.height, y1)
    if x1 <= x0 or y1 <= y0:
        raise EmptyCrop(f"box {box} rounds to an empty pixel region")

    crop = img.pixels[y0:y1, x0:x1]
    alpha = img.alpha[y0:y1, x0:x1] if img.alpha is not None else None
    ch, cw = crop.shape[:2]
    short = min(cw, ch)
    if short >= min_side:
        return ImageBuffer.from_array(crop.copy(), None if alpha is None else alpha.copy())

    factor = -(-min_side // short)  # ceil division
    planes = [_bilinear_upscale(crop[:, :, c], factor) for c in range(3)]
    up = np.dstack(planes)
    up_alpha = None if alpha is None else _bilinear_upscale(alpha, factor)
    return ImageBuffer.from_array(up, up_alpha)


def background_mask(img: ImageBuffer, cfg: MaskConfig) -> Tuple[PixelMask, float]:
    """Mask out sea-blue and white pixels; returns (mask, retained_ratio)."""
    if cfg.disabled:
        mask = PixelMask.full(img.width, img.height)
        return mask, 1.0
    hue, sat, val = rgb_array_to_hsv(img.pixels)
    blue = (hue >= cfg.blue_hue_lo) & (hue <= cfg.blue_hue_hi) & (sat >= cfg.blue_sat_min)
    white = (sat <= cfg.white_sat_max) & (val >= cfg.white_val_min)
    bits = ~(blue | white)
    retained = float(np.count_nonzero(bits)) / float(bits.size)
    return PixelMask(img.width, img.height, bits), retained


def hue_histogram(img: ImageBuffer, mask: PixelMask, cfg: HistogramConfig) -> HueHistogram:
    """Normalized hue histogram over retained pixels with stable chroma.

    Pixels below ``cfg.chroma_floor`` saturation are skipped. Raises
    InsufficientPixels when fewer than ``cfg.min_pixels`` pixels contribute.
    """
    if (mask.width, mask.height) != (img.width, img.height):
        raise ValueError("mask dimensions do not match image")
    hue, sat, _ = rgb_array_to_hsv(img.pixels)
    contributing = mask.bits & (sat >= cfg.chroma_floor)
    count = int(np.count_nonzero(contributing))
    if count < cfg.min_pixels:
        raise InsufficientPixels(
            f"{count} contributing pixels, need at least {cfg.min_pixels}"
        )
    bin_width = 360.0 / cfg.num_bins
    idx = np.floor(hue[contributing] / bin_width).astype(np.intp)
    idx = np.minimum(idx, cfg.num_bins - 1)
    counts = np.bincount(idx, minlength=cfg.num_bins).astype(np.float64)
    return HueHistogram(bins=counts / counts.sum(), pixel_count=count)


def bhattacharyya(a: HueHistogram, b: HueHistogram) -> float:
    """Hellinger-form Bhattacharyya distance between normalized histograms.

    D = sqrt(max(0, 1 - sum_i sqrt(a_i * b_i))), in [0, 1]; 0 for identical
    distributions, 1 for disjoint support.
    """
    if a.num_bins != b.num_bins:
        raise BinMismatch(f"{a.num_bins} bins vs {b.num_bins} bins")
    coeff = float(np.sum(np.sqrt(a.bins * b.bins)))
    return min(1.0, math.sqrt(max(0.0, 1.0 - coeff)))
