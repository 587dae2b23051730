"""View-specific synthetic-CESM generators and generation-quality metrics."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import GrayImage, Laterality, View
from . import raster


class GeneratorError(Exception):
    pass


class MissingExternalImage(GeneratorError):
    pass


class ShapeMismatch(Exception):
    pass


class UndefinedMax(Exception):
    pass


class IdentityGenerator:
    """Passes the FFDM image through unchanged."""

    def generate(self, img_f: GrayImage, key=None) -> GrayImage:
        return img_f


@dataclass(frozen=True)
class LinearGenerator:
    """Per-image affine intensity map a*x + b, clipped to [0, 1]."""

    a: float = 1.0
    b: float = 0.0

    @classmethod
    def fit(cls, source: GrayImage, target: GrayImage) -> "LinearGenerator":
        """Least-squares fit of (a, b) on a paired (FFDM, CESM) example."""
        if source.pixels.shape != target.pixels.shape:
            raise ShapeMismatch("fit pair must have equal dimensions")
        x = source.pixels.ravel()
        y = target.pixels.ravel()
        var = float(np.var(x))
        if var == 0.0:
            return cls(0.0, float(y.mean()))
        a = float(np.cov(x, y, bias=True)[0, 1]) / var
        b = float(y.mean() - a * x.mean())
        return cls(a, b)

    def generate(self, img_f: GrayImage, key=None) -> GrayImage:
        out = np.clip(self.a * img_f.pixels + self.b, 0.0, 1.0)
        return GrayImage(out, normalized=True)


@dataclass(frozen=True)
class NoisyIdentityGenerator:
    """Identity degraded by additive Gaussian noise, clipped to [0, 1].

    The noise stream is derived from the input's pixel bytes plus a fixed
    seed, so generation stays a pure function of (generator, image).
    """

    sigma: float = 0.05
    seed: int = 0

    def generate(self, img_f: GrayImage, key=None) -> GrayImage:
        digest = hashlib.sha256(img_f.pixels.tobytes()).digest()
        words = [self.seed & 0xFFFFFFFF]
        words.extend(int.from_bytes(digest[i:i + 4], "big") for i in range(0, 16, 4))
        rng = np.random.default_rng(np.random.SeedSequence(words))
        noise = rng.normal(0.0, self.sigma, size=img_f.pixels.shape)
        return GrayImage(np.clip(img_f.pixels + noise, 0.0, 1.0), normalized=True)


@dataclass(frozen=True)
class ExternalGenerator:
    """Loads pre-generated rasters via a path pattern with {patient_id},
    {laterality}, and {view} placeholders."""

    pattern: str
    view: Optional[View] = None

    def generate(self, img_f: GrayImage, key=None) -> GrayImage:
        if key is None:
            raise GeneratorError("external generator needs (patient_id, laterality, view)")
        pid, lat, view = key
        path = Path(self.pattern.format(
            patient_id=pid,
            laterality=lat.value if isinstance(lat, Laterality) else lat,
            view=view.value if isinstance(view, View) else view,
        ))
        if not path.is_file():
            raise MissingExternalImage(str(path))
        img = raster.read_image(path)
        if img.pixels.shape != img_f.pixels.shape:
            raise ShapeMismatch(f"{path}: {img.pixels.shape} vs expected "
                                f"{img_f.pixels.shape}")
        m = img.pixels.max()
        out = img.pixels / m if m > 0 else img.pixels
        return GrayImage(out, normalized=True)


def generator_from_spec(spec: dict):
    kind = spec.get("kind")
    if kind == "identity":
        return IdentityGenerator()
    if kind == "linear":
        return LinearGenerator(float(spec.get("a", 1.0)), float(spec.get("b", 0.0)))
    if kind == "noisy_identity":
        return NoisyIdentityGenerator(float(spec.get("sigma", 0.05)),
                                      int(spec.get("seed", 0)))
    if kind == "external":
        return ExternalGenerator(spec["pattern"])
    raise GeneratorError(f"unknown generator kind {kind!r}")


@dataclass(frozen=True)
class GenQuality:
    mse: float
    psnr: float  # math.inf when MSE is 0
    ssim: float

    def as_dict(self) -> dict:
        return {"mse": self.mse,
                "psnr": "inf" if math.isinf(self.psnr) else self.psnr,
                "ssim": self.ssim}


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_B1 = 0.01 ** 2
SSIM_B2 = 0.03 ** 2


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def mse(target: GrayImage, synth: GrayImage) -> float:
    if target.pixels.shape != synth.pixels.shape:
        raise ShapeMismatch("images must have equal dimensions")
    return float(np.mean((target.pixels - synth.pixels) ** 2))


def psnr(target: GrayImage, synth: GrayImage) -> float:
    err = mse(target, synth)
    if err == 0.0:
        return math.inf
    peak = float(target.pixels.max())
    if peak == 0.0:
        raise UndefinedMax("PSNR undefined: target maximum is 0 with nonzero MSE")
    return 10.0 * math.log10(peak ** 2 / err)


def ssim(target: GrayImage, synth: GrayImage) -> float:
    """Mean SSIM over 11x11 Gaussian windows (sigma 1.5), unit dynamic range."""
    if target.pixels.shape != synth.pixels.shape:
        raise ShapeMismatch("images must have equal dimensions")
    x = target.pixels
    y = synth.pixels
    if min(x.shape) < SSIM_WINDOW:
        raise ShapeMismatch(f"images must be at least {SSIM_WINDOW} pixels per side")
    k = _gaussian_kernel()
    win_x = np.lib.stride_tricks.sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
    win_y = np.lib.stride_tricks.sliding_window_view(y, (SSIM_WINDOW, SSIM_WINDOW))
    mu_x = np.tensordot(win_x, k, axes=([2, 3], [0, 1]))
    mu_y = np.tensordot(win_y, k, axes=([2, 3], [0, 1]))
    exx = np.tensordot(win_x * win_x, k, axes=([2, 3], [0, 1]))
    eyy = np.tensordot(win_y * win_y, k, axes=([2, 3], [0, 1]))
    exy = np.tensordot(win_x * win_y, k, axes=([2, 3], [0, 1]))
    var_x = exx - mu_x * mu_x
    var_y = eyy - mu_y * mu_y
    cov = exy - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_B1) * (2.0 * cov + SSIM_B2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_B1) * (var_x + var_y + SSIM_B2)
    return float(np.mean(num / den))


def eval_generation(synth: GrayImage, target: GrayImage) -> GenQuality:
    return GenQuality(mse(target, synth), psnr(target, synth), ssim(target, synth))
