"""Preprocessing chain: pad to square, contrast stretch, unit normalization,
bilinear resize, laterality-normalizing flip; plus training-time augmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GrayImage, Laterality


class NotSquare(Exception):
    pass


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: int = 256
    stretch_lo_percentile: float = 1.0
    stretch_hi_percentile: float = 99.0
    border_frac: float = 0.02

    def __post_init__(self):
        if not (0.0 <= self.stretch_lo_percentile < self.stretch_hi_percentile <= 100.0):
            raise ValueError("require 0 <= lo < hi <= 100")
        if self.target_size < 8:
            raise ValueError("target_size must be >= 8")
        if not (0.0 < self.border_frac <= 0.25):
            raise ValueError("border_frac must be in (0, 0.25]")


@dataclass(frozen=True)
class AugmentConfig:
    shift_frac: float = 0.10
    zoom_frac: float = 0.10
    rot_deg: float = 15.0

    def __post_init__(self):
        if min(self.shift_frac, self.zoom_frac, self.rot_deg) < 0:
            raise ValueError("augmentation ranges must be non-negative")


def border_mean(arr: np.ndarray, border_frac: float) -> float:
    """Mean intensity over the outer frame of width ceil(border_frac * min(h, w))."""
    h, w = arr.shape
    band = max(1, math.ceil(border_frac * min(h, w)))
    if 2 * band >= min(h, w):
        return float(arr.mean())
    mask = np.zeros((h, w), dtype=bool)
    mask[:band, :] = mask[-band:, :] = True
    mask[:, :band] = mask[:, -band:] = True
    return float(arr[mask].mean())


def pad_square(img: GrayImage, cfg: PreprocessConfig = PreprocessConfig()) -> GrayImage:
    a = img.pixels
    h, w = a.shape
    if h == w:
        return img
    fill = border_mean(a, cfg.border_frac)
    side = max(h, w)
    out = np.full((side, side), fill)
    top = (side - h) // 2  # extra pixel goes to the trailing side
    left = (side - w) // 2
    out[top:top + h, left:left + w] = a
    return GrayImage(out, normalized=img.normalized and 0.0 <= fill <= 1.0)


def contrast_stretch(img: GrayImage, cfg: PreprocessConfig = PreprocessConfig()) -> GrayImage:
    a = img.pixels
    lo = float(np.percentile(a, cfg.stretch_lo_percentile))
    hi = float(np.percentile(a, cfg.stretch_hi_percentile))
    if hi <= lo:
        return img
    out = np.clip((a - lo) / (hi - lo), 0.0, 1.0) * float(a.max())
    return GrayImage(out, normalized=img.normalized)


def normalize_unit(img: GrayImage) -> GrayImage:
    if img.normalized:
        return img
    a = img.pixels
    if a.min() < 0.0:
        raise ValueError("normalize_unit requires non-negative intensities")
    m = float(a.max())
    if m == 0.0:
        return GrayImage(a, normalized=True)
    return GrayImage(a / m, normalized=True)


def resize_bilinear(img: GrayImage, side: int) -> GrayImage:
    if img.width != img.height:
        raise NotSquare(f"resize_bilinear requires a square image, got "
                        f"{img.width}x{img.height}")
    a = img.pixels
    n = a.shape[0]
    if side == n:
        return img
    src = np.clip((np.arange(side) + 0.5) * (n / side) - 0.5, 0.0, n - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    f = src - i0
    rows = a[i0, :] * (1.0 - f)[:, None] + a[i1, :] * f[:, None]
    out = rows[:, i0] * (1.0 - f)[None, :] + rows[:, i1] * f[None, :]
    return GrayImage(out, normalized=img.normalized)


def flip_to_right(img: GrayImage, lat: Laterality) -> GrayImage:
    if lat is Laterality.RIGHT:
        return img
    return GrayImage(np.fliplr(img.pixels), normalized=img.normalized)


def preprocess(img: GrayImage, lat: Laterality,
               cfg: PreprocessConfig = PreprocessConfig()) -> GrayImage:
    out = pad_square(img, cfg)
    out = contrast_stretch(out, cfg)
    out = normalize_unit(out)
    out = resize_bilinear(out, cfg.target_size)
    return flip_to_right(out, lat)


def augment(img: GrayImage, cfg: AugmentConfig, rng: np.random.Generator,
            fill_border_frac: float = 0.02) -> GrayImage:
    """One random shift/zoom/rotation with bilinear resampling.

    Out-of-frame samples are filled with the input's border-band mean.
    The draw order (dx, dy, zoom, angle) is fixed so outputs are a pure
    function of the rng state.
    """
    a = img.pixels
    h, w = a.shape
    dx = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * w
    dy = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * h
    zoom = rng.uniform(1.0 - cfg.zoom_frac, 1.0 + cfg.zoom_frac)
    theta = math.radians(rng.uniform(-cfg.rot_deg, cfg.rot_deg))

    if dx == 0.0 and dy == 0.0 and zoom == 1.0 and theta == 0.0:
        return img

    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # Invert (rotate -> zoom -> shift): subtract shift, unscale, unrotate.
    ux = (xs - dx) - cx
    uy = (ys - dy) - cy
    ux /= zoom
    uy /= zoom
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    sx = cos_t * ux + sin_t * uy + cx
    sy = -sin_t * ux + cos_t * uy + cy

    fill = border_mean(a, fill_border_frac)
    inside = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)
    sxc = np.clip(sx, 0.0, w - 1.0)
    syc = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sxc).astype(int)
    y0 = np.floor(syc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sxc - x0
    fy = syc - y0
    top = a[y0, x0] * (1.0 - fx) + a[y0, x1] * fx
    bot = a[y1, x0] * (1.0 - fx) + a[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    out = np.where(inside, out, fill)
    if img.normalized:
        out = np.clip(out, 0.0, 1.0)
    return GrayImage(out, normalized=img.normalized)
