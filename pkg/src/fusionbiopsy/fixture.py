"""Synthetic desk-scale dataset synthesis.

Each fixture record is one breast with four raster images. The class
signal is a centered bright patch whose separability per channel is
controlled by a margin (amplitude / channel-offset-noise ratio); CESM
channels get a larger margin. FFDM images optionally carry a distractor
patch with label-independent intensity, mimicking confounding background
tissue that contrast imaging suppresses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (AcrCategory, BiopsyLabel, GrayImage, Laterality, Modality,
                   Phase, SeedPath, View, CHANNELS, derive_rng)
from . import raster


@dataclass(frozen=True)
class FixtureSpec:
    patients: int = 40
    malignant_frac: float = 0.6
    image_height: int = 64
    image_width: int = 72  # non-square so padding is exercised
    margins: dict = field(default_factory=lambda: {"F": 1.0, "C": 3.0})
    separation: float = 0.25  # malignant patch amplitude above benign
    patch_base: float = 0.45
    background: float = 0.10
    pixel_noise: float = 0.02
    patient_noise: float = 0.05  # latent per-patient intensity offset
    distractor: bool = True  # FFDM-only label-independent patch
    missing_cesm_frac: float = 0.0
    late_frac: float = 0.0
    seed: int = 0

    @classmethod
    def from_json(cls, obj: dict) -> "FixtureSpec":
        return cls(**obj)


def _channel_sigma(spec: FixtureSpec, m: Modality) -> float:
    margin = spec.margins[m.value]
    if margin <= 0:
        return 10.0 * spec.separation  # margin 0: signal drowned in noise
    return spec.separation / margin


def _render(spec: FixtureSpec, patch_value: float, distractor_value,
            rng: np.random.Generator) -> np.ndarray:
    h, w = spec.image_height, spec.image_width
    img = np.full((h, w), spec.background)
    img += rng.normal(0.0, spec.pixel_noise, size=(h, w))
    # lesion patch: centered square covering ~1/3 of each dimension
    ph, pw = h // 3, w // 3
    y0, x0 = (h - ph) // 2, (w - pw) // 2
    img[y0:y0 + ph, x0:x0 + pw] = patch_value + rng.normal(
        0.0, spec.pixel_noise, size=(ph, pw))
    if distractor_value is not None:
        dh, dw = h // 4, w // 4
        img[1:1 + dh, 1:1 + dw] = distractor_value + rng.normal(
            0.0, spec.pixel_noise, size=(dh, dw))
    return np.clip(img, 0.0, 1.0)


ACR_CYCLE = [AcrCategory.A, AcrCategory.B, AcrCategory.B, AcrCategory.C,
             AcrCategory.C, AcrCategory.D]


def build_fixture(out_dir, spec: FixtureSpec) -> Path:
    """Write PGM images plus manifest.json; returns the manifest path."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    root = SeedPath(spec.seed)
    n_mal = round(spec.patients * spec.malignant_frac)

    records = []
    for i in range(spec.patients):
        pid = f"p{i:03d}"
        prng = derive_rng(root.child("patient", i))
        label = BiopsyLabel.MALIGNANT if i < n_mal else BiopsyLabel.BENIGN
        lat = Laterality.LEFT if prng.uniform() < 0.5 else Laterality.RIGHT
        acr = ACR_CYCLE[i % len(ACR_CYCLE)]
        phase = Phase.LATE if prng.uniform() < spec.late_frac else Phase.EARLY
        has_cesm = prng.uniform() >= spec.missing_cesm_frac
        latent = prng.normal(0.0, spec.patient_noise)

        images = {}
        for m, v in CHANNELS:
            if m is Modality.C and not has_cesm:
                continue
            crng = derive_rng(root.child("patient", i)
                              .child("channel", CHANNELS.index((m, v))))
            patch = (spec.patch_base + spec.separation * label.value + latent
                     + crng.normal(0.0, _channel_sigma(spec, m)))
            distract = None
            if spec.distractor and m is Modality.F:
                distract = spec.patch_base + crng.normal(0.0, 0.15)
            pixels = _render(spec, patch, distract, crng)
            name = f"{pid}_{lat.value}_{m.value}_{v.value}.pgm"
            raster.write_pgm(images_dir / name,
                             GrayImage(np.clip(pixels, 0.0, 1.0), normalized=True))
            images[f"{m.value}_{v.value}"] = f"images/{name}"
        records.append({
            "patient_id": pid,
            "laterality": lat.value,
            "label": "malignant" if label is BiopsyLabel.MALIGNANT else "benign",
            "acr": None if acr is AcrCategory.NOT_REPORTED else acr.value,
            "phase": phase.value,
            "images": images,
        })

    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(records, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest_path
