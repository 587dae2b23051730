"""Domain model, manifest ingestion, and deterministic RNG derivation."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np


class Modality(str, Enum):
    F = "F"
    C = "C"


class View(str, Enum):
    CC = "CC"
    MLO = "MLO"


class Laterality(str, Enum):
    LEFT = "L"
    RIGHT = "R"


class BiopsyLabel(int, Enum):
    BENIGN = 0
    MALIGNANT = 1


class AcrCategory(str, Enum):
    A = "a"
    B = "b"
    C = "c"
    D = "d"
    NOT_REPORTED = "not_reported"


class Phase(str, Enum):
    EARLY = "early"
    LATE = "late"


CHANNELS = [(m, v) for m in Modality for v in View]


class ManifestError(Exception):
    pass


class MissingField(ManifestError):
    pass


class UnresolvablePath(ManifestError):
    pass


class DuplicateRecord(ManifestError):
    pass


class InvalidEnum(ManifestError):
    pass


class GrayImage:
    """2-D grayscale raster with finite, non-negative-or-normalized intensities.

    Pixels are held as a read-only float64 array of shape (height, width);
    instances are immutable and safe to share across workers.
    """

    __slots__ = ("pixels", "normalized")

    def __init__(self, pixels: np.ndarray, normalized: bool = False):
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected non-empty 2-D pixel array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pixel values must be finite")
        if normalized and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("normalized image must have values in [0, 1]")
        arr = arr.copy()
        arr.setflags(write=False)
        self.pixels = arr
        self.normalized = normalized

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, GrayImage)
            and self.normalized == other.normalized
            and self.pixels.shape == other.pixels.shape
            and bool(np.all(self.pixels == other.pixels))
        )

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height}, normalized={self.normalized})"


RecordKey = tuple  # (patient_id, Laterality)


@dataclass(frozen=True)
class StudyRecord:
    """One breast-lesion case: a patient's breast with up to four images."""

    patient_id: str
    laterality: Laterality
    label: BiopsyLabel
    acr: AcrCategory
    phase: Phase
    images: dict  # (Modality, View) -> Path

    @property
    def key(self) -> RecordKey:
        return (self.patient_id, self.laterality)

    def has_cesm(self) -> bool:
        return (Modality.C, View.CC) in self.images


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple
    root: Path

    def biopsy_records(self):
        """Records admitted to the classification task (early phase only)."""
        return [r for r in self.records if r.phase is Phase.EARLY]

    def label_histogram(self) -> dict:
        hist = {BiopsyLabel.MALIGNANT: 0, BiopsyLabel.BENIGN: 0}
        for r in self.records:
            hist[r.label] += 1
        return hist


_LABEL_CODES = {"malignant": BiopsyLabel.MALIGNANT, "benign": BiopsyLabel.BENIGN}
_LAT_CODES = {"L": Laterality.LEFT, "R": Laterality.RIGHT}
_PHASE_CODES = {"early": Phase.EARLY, "late": Phase.LATE}
_ACR_CODES = {"a": AcrCategory.A, "b": AcrCategory.B, "c": AcrCategory.C, "d": AcrCategory.D}
_IMAGE_KEYS = {
    "F_CC": (Modality.F, View.CC),
    "F_MLO": (Modality.F, View.MLO),
    "C_CC": (Modality.C, View.CC),
    "C_MLO": (Modality.C, View.MLO),
}


def _parse_record(obj: dict, index: int, root: Path) -> StudyRecord:
    where = f"record #{index}"
    for req in ("patient_id", "laterality", "label", "phase", "images"):
        if req not in obj:
            raise MissingField(f"{where}: missing field '{req}'")
    pid = obj["patient_id"]
    if not isinstance(pid, str) or not pid:
        raise MissingField(f"{where}: patient_id must be a non-empty string")
    where = f"record #{index} (patient {pid})"
    try:
        lat = _LAT_CODES[obj["laterality"]]
        label = _LABEL_CODES[obj["label"]]
        phase = _PHASE_CODES[obj["phase"]]
    except KeyError as exc:
        raise InvalidEnum(f"{where}: invalid value {exc}") from None
    acr_raw = obj.get("acr")
    if acr_raw is None:
        acr = AcrCategory.NOT_REPORTED
    elif acr_raw in _ACR_CODES:
        acr = _ACR_CODES[acr_raw]
    else:
        raise InvalidEnum(f"{where}: invalid ACR category {acr_raw!r}")

    images = {}
    raw_images = obj["images"]
    for key, chan in _IMAGE_KEYS.items():
        path = raw_images.get(key)
        if path is not None:
            images[chan] = root / path
    for v in View:
        if (Modality.F, v) not in images:
            raise MissingField(f"{where}: missing FFDM {v.value} image")
    # Partial CESM (one view only) is rejected rather than guessed at.
    c_views = [v for v in View if (Modality.C, v) in images]
    if len(c_views) == 1:
        raise MissingField(f"{where}: CESM present for only one view ({c_views[0].value})")
    for chan, path in images.items():
        if not path.is_file():
            raise UnresolvablePath(f"{where}: {chan[0].value}_{chan[1].value} -> {path}")
    return StudyRecord(pid, lat, label, acr, phase, images)


def load_manifest(path) -> DatasetManifest:
    """Load a JSON manifest; image paths are resolved relative to its directory."""
    path = Path(path)
    if not path.is_file():
        raise UnresolvablePath(f"manifest not found: {path}")
    root = path.parent
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise MissingField("manifest must be a JSON array of records")
    records = []
    seen = set()
    for i, obj in enumerate(data):
        rec = _parse_record(obj, i, root)
        if rec.key in seen:
            raise DuplicateRecord(f"duplicate record for patient {rec.patient_id} "
                                  f"laterality {rec.laterality.value}")
        seen.add(rec.key)
        records.append(rec)
    return DatasetManifest(tuple(records), root)


def manifest_to_json(manifest: DatasetManifest) -> list:
    """Inverse of load_manifest's parse step, for round-trip serialization."""
    out = []
    for r in manifest.records:
        images = {}
        for key, chan in _IMAGE_KEYS.items():
            p = r.images.get(chan)
            images[key] = os.path.relpath(p, manifest.root) if p is not None else None
        out.append({
            "patient_id": r.patient_id,
            "laterality": r.laterality.value,
            "label": "malignant" if r.label is BiopsyLabel.MALIGNANT else "benign",
            "acr": None if r.acr is AcrCategory.NOT_REPORTED else r.acr.value,
            "phase": r.phase.value,
            "images": images,
        })
    return out


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_to_json(manifest), fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class SeedPath:
    """Hierarchical RNG derivation: a root seed plus (label, index) steps.

    Distinct paths yield statistically independent streams; the derived
    stream is a pure function of (root_seed, path).
    """

    root_seed: int
    path: tuple = field(default_factory=tuple)

    def child(self, label: str, index: int = 0) -> "SeedPath":
        return SeedPath(self.root_seed, self.path + ((label, index),))


def derive_rng(seed: SeedPath) -> np.random.Generator:
    words = [seed.root_seed & 0xFFFFFFFF, (seed.root_seed >> 32) & 0xFFFFFFFF]
    for label, index in seed.path:
        digest = hashlib.sha256(f"{label}\x1f{index}".encode()).digest()
        words.extend(int.from_bytes(digest[i:i + 4], "big") for i in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence(words))
