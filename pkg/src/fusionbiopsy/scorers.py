"""Per-channel malignancy scorers: a replay backend for external score
tables and a trainable pooled-pixel logistic reference scorer."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BiopsyLabel, GrayImage, Laterality, Modality, View


class ScoreTableError(Exception):
    pass


class OutOfRangeProbability(ScoreTableError):
    pass


class DuplicateKey(ScoreTableError):
    pass


class ShapeMismatch(Exception):
    pass


class EmptyTrainingSet(Exception):
    pass


class SingleClassTrainingSet(Exception):
    pass


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    max_epochs: int = 300
    patience: int = 50
    warmup: int = 50
    lr_drop_factor: float = 0.1
    lr_drop_patience: int = 10
    feature_side: int = 16

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be >= 0")
        if min(self.max_epochs, self.patience, self.warmup,
               self.lr_drop_patience, self.feature_side) < 1:
            raise ValueError("schedule parameters must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


def pool_features(img: GrayImage, feature_side: int) -> np.ndarray:
    """Mean-pool a square image down to feature_side x feature_side."""
    a = img.pixels
    n = a.shape[0]
    if a.shape[0] != a.shape[1] or n % feature_side != 0:
        raise ShapeMismatch(f"image {a.shape} cannot be pooled to "
                            f"{feature_side}x{feature_side}")
    block = n // feature_side
    pooled = a.reshape(feature_side, block, feature_side, block).mean(axis=(1, 3))
    return pooled.ravel()


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                  weight_decay: float):
    """Mean cross-entropy plus L2 on the weights (bias excluded)."""
    z = X @ w + b
    # log(1 + e^z) - y*z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    loss += 0.5 * weight_decay * float(w @ w)
    r = _sigmoid(z) - y
    grad_w = X.T @ r / len(y) + weight_decay * w
    grad_b = float(r.mean())
    return loss, grad_w, grad_b


@dataclass(frozen=True)
class ReferenceScorer:
    weights: np.ndarray
    bias: float
    feature_side: int

    def to_json(self) -> dict:
        return {"weights": list(self.weights), "bias": self.bias,
                "feature_side": self.feature_side}

    @classmethod
    def from_json(cls, obj: dict) -> "ReferenceScorer":
        return cls(np.asarray(obj["weights"], dtype=np.float64),
                   float(obj["bias"]), int(obj["feature_side"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "ReferenceScorer":
        return cls.from_json(json.loads(Path(path).read_text()))


def score(scorer: ReferenceScorer, img: GrayImage) -> float:
    x = pool_features(img, scorer.feature_side)
    if x.size != scorer.weights.size:
        raise ShapeMismatch(f"{x.size} features vs {scorer.weights.size} weights")
    return float(_sigmoid(x @ scorer.weights + scorer.bias))


def train_reference(train, val, hyper: TrainHyper,
                    rng: np.random.Generator) -> ReferenceScorer:
    """Full-batch gradient descent on cross-entropy with L2 weight decay.

    Early stopping tracks validation loss with a warmup phase before the
    patience counter starts; the learning rate drops by lr_drop_factor on
    plateau. The best-validation parameters are returned.
    """
    if not train:
        raise EmptyTrainingSet("no training samples")
    y_train = np.array([float(lbl is BiopsyLabel.MALIGNANT) for _, lbl in train])
    if y_train.min() == y_train.max():
        raise SingleClassTrainingSet("training set contains a single class")
    X_train = np.stack([pool_features(img, hyper.feature_side) for img, _ in train])
    if val:
        X_val = np.stack([pool_features(img, hyper.feature_side) for img, _ in val])
        y_val = np.array([float(lbl is BiopsyLabel.MALIGNANT) for _, lbl in val])
    else:
        X_val, y_val = X_train, y_train

    d = X_train.shape[1]
    w = rng.normal(0.0, 0.01, size=d)
    b = 0.0
    lr = hyper.learning_rate
    best = (np.inf, w.copy(), b)
    epochs_since_best = 0
    plateau = 0
    for epoch in range(1, hyper.max_epochs + 1):
        _, gw, gb = loss_and_grad(w, b, X_train, y_train, hyper.weight_decay)
        w = w - lr * gw
        b = b - lr * gb
        val_loss, _, _ = loss_and_grad(w, b, X_val, y_val, hyper.weight_decay)
        if val_loss < best[0]:
            best = (val_loss, w.copy(), b)
            epochs_since_best = 0
            plateau = 0
        else:
            epochs_since_best += 1
            plateau += 1
        if plateau >= hyper.lr_drop_patience:
            lr *= hyper.lr_drop_factor
            plateau = 0
        if epoch > hyper.warmup and epochs_since_best >= hyper.patience:
            break
    return ReferenceScorer(best[1], best[2], hyper.feature_side)


_MODALITY = {"F": Modality.F, "C": Modality.C}
_VIEW = {"CC": View.CC, "MLO": View.MLO}
_LAT = {"L": Laterality.LEFT, "R": Laterality.RIGHT}

SCORE_TABLE_HEADER = ["patient_id", "laterality", "modality", "view", "p_malignant"]


def load_score_table(path) -> dict:
    """CSV -> {(patient_id, Laterality, Modality, View): probability}."""
    entries = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORE_TABLE_HEADER:
            raise ScoreTableError(f"bad header {header!r}, expected {SCORE_TABLE_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ScoreTableError(f"line {lineno}: expected 5 fields, got {len(row)}")
            pid, lat_s, mod_s, view_s, p_s = row
            try:
                lat, mod, view = _LAT[lat_s], _MODALITY[mod_s], _VIEW[view_s]
            except KeyError as exc:
                raise ScoreTableError(f"line {lineno}: invalid value {exc}") from None
            try:
                p = float(p_s)
            except ValueError:
                raise ScoreTableError(f"line {lineno}: bad probability {p_s!r}") from None
            if not (0.0 <= p <= 1.0):
                raise OutOfRangeProbability(f"line {lineno}: p={p} outside [0, 1]")
            key = (pid, lat, mod, view)
            if key in entries:
                raise DuplicateKey(f"line {lineno}: duplicate key "
                                   f"({pid}, {lat.value}, {mod.value}, {view.value})")
            entries[key] = p
    return entries
