"""MCC-weighted late fusion across views and modalities."""

from __future__ import annotations

from dataclasses import dataclass

from .core import BiopsyLabel, Modality, View, CHANNELS
from .metrics import confusion, mcc


class EmptyValidation(Exception):
    pass


class MissingChannel(Exception):
    pass


DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True)
class FusionWeights:
    """Raw validation MCC values per channel and per modality.

    Weights may be <= 0 (a constant validation predictor yields MCC 0);
    the floor is applied only inside the fusion average so the operation
    stays total without distorting the stored diagnostics.
    """

    view_mcc: dict  # (Modality, View) -> float
    modality_mcc: dict  # Modality -> float
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if set(self.view_mcc) != set(CHANNELS):
            raise MissingChannel("view_mcc must cover all four (modality, view) channels")
        if set(self.modality_mcc) != set(Modality):
            raise MissingChannel("modality_mcc must cover both modalities")
        if self.floor <= 0:
            raise ValueError("floor must be positive")

    def floored(self) -> bool:
        """True when any weight was clamped, for flagging in reports."""
        values = list(self.view_mcc.values()) + list(self.modality_mcc.values())
        return any(w < self.floor for w in values)

    def as_dict(self) -> dict:
        return {
            "view_mcc": {f"{m.value}_{v.value}": self.view_mcc[(m, v)] for m, v in CHANNELS},
            "modality_mcc": {m.value: self.modality_mcc[m] for m in Modality},
            "floor": self.floor,
        }


def _weighted_pair(p_a: float, p_b: float, w_a: float, w_b: float, floor: float) -> float:
    wa = max(w_a, floor)
    wb = max(w_b, floor)
    return (p_a * wa + p_b * wb) / (wa + wb)


def fuse_views(p_cc: float, p_mlo: float, w_cc: float, w_mlo: float,
               floor: float = DEFAULT_FLOOR) -> float:
    return _weighted_pair(p_cc, p_mlo, w_cc, w_mlo, floor)


def fuse_modalities(p_f: float, p_c: float, w_f: float, w_c: float,
                    floor: float = DEFAULT_FLOOR) -> float:
    return _weighted_pair(p_f, p_c, w_f, w_c, floor)


def predict_class(p: float) -> BiopsyLabel:
    """Max membership rule; the tie at 0.5 classifies as malignant."""
    return BiopsyLabel.MALIGNANT if p >= 0.5 else BiopsyLabel.BENIGN


def fuse_modality(scores_for_record: dict, m: Modality, weights: FusionWeights) -> float:
    try:
        p_cc = scores_for_record[(m, View.CC)]
        p_mlo = scores_for_record[(m, View.MLO)]
    except KeyError as exc:
        raise MissingChannel(f"missing probability for channel {exc}") from None
    return fuse_views(p_cc, p_mlo, weights.view_mcc[(m, View.CC)],
                      weights.view_mcc[(m, View.MLO)], weights.floor)


def classify_record(scores_for_record: dict, weights: FusionWeights):
    """Full two-stage fusion for one record.

    Returns (p, c, p_F, p_C) where p is the multimodal probability and c
    the predicted class.
    """
    p_f = fuse_modality(scores_for_record, Modality.F, weights)
    p_c = fuse_modality(scores_for_record, Modality.C, weights)
    p = fuse_modalities(p_f, p_c, weights.modality_mcc[Modality.F],
                        weights.modality_mcc[Modality.C], weights.floor)
    return p, predict_class(p), p_f, p_c


def compute_weights(val_scores: dict, val_labels: dict,
                    floor: float = DEFAULT_FLOOR) -> FusionWeights:
    """Validation-set MCC weights.

    ``val_scores`` maps record key -> {(Modality, View): probability};
    ``val_labels`` maps record key -> BiopsyLabel. Modality-level weights
    come from the view-fused unimodal predictions, not from averaging the
    view MCCs.
    """
    if not val_labels:
        raise EmptyValidation("validation set is empty")
    keys = sorted(val_labels)
    truth = [val_labels[k] for k in keys]

    view_mcc = {}
    for chan in CHANNELS:
        preds = []
        for k in keys:
            try:
                p = val_scores[k][chan]
            except KeyError:
                raise MissingChannel(
                    f"record {k}: no validation score for {chan[0].value}_{chan[1].value}"
                ) from None
            preds.append(predict_class(p))
        view_mcc[chan] = mcc(confusion(preds, truth))

    modality_mcc = {}
    partial = FusionWeights(view_mcc, {Modality.F: 0.0, Modality.C: 0.0}, floor)
    for m in Modality:
        preds = [predict_class(fuse_modality(val_scores[k], m, partial)) for k in keys]
        modality_mcc[m] = mcc(confusion(preds, truth))
    return FusionWeights(view_mcc, modality_mcc, floor)
