"""Cross-validation protocol, per-setting pipeline execution, and the
missing-modality robustness sweep."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (BiopsyLabel, DatasetManifest, Modality, SeedPath,
                   StudyRecord, View, CHANNELS, derive_rng)
from .fusion import (FusionWeights, MissingChannel, classify_record,
                     compute_weights, fuse_modality, predict_class,
                     DEFAULT_FLOOR)
from .metrics import MetricsTriple, triple
from .preprocess import AugmentConfig, PreprocessConfig, augment, preprocess
from .scorers import TrainHyper, score, train_reference
from . import raster

THREADS_ENV = "FUSIONBIOPSY_THREADS"

BASE_SETTINGS = ("F", "C", "Chat", "FplusC", "FplusChat")
STAR_SETTINGS = ("Cstar", "FplusCstar")


class TooFewPatients(Exception):
    pass


class UntrainedScorer(Exception):
    pass


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train: tuple  # record keys (patient_id, Laterality)
    val: tuple
    test: tuple


@dataclass(frozen=True)
class RobustnessConfig:
    percentages: tuple = tuple(range(10, 101, 10))
    repetitions: int = 10

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(not (0 <= n <= 100) for n in self.percentages):
            raise ValueError("percentages must lie in [0, 100]")


def stratified_group_kfold(records, k: int, rng: np.random.Generator):
    """Greedy label-balancing assignment of patient groups to k folds.

    Largest groups are placed first into the fold that minimizes
    per-class imbalance (ties: smaller fold, then rng). Fold i's test set
    is fold i, validation is fold i+1 (mod k), train is the rest, which
    realizes 80/10/10 at k=5.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    groups = {}
    for r in records:
        groups.setdefault(r.patient_id, []).append(r)
    for label in BiopsyLabel:
        n = sum(1 for recs in groups.values() if any(r.label is label for r in recs))
        if n < k:
            raise TooFewPatients(f"only {n} patients with label {label.name} "
                                 f"for k={k}")

    def label_counts(recs):
        c = np.zeros(2)
        for r in recs:
            c[r.label.value] += 1
        return c

    items = sorted(groups.items())
    rng.shuffle(items)
    items.sort(key=lambda kv: -len(kv[1]))  # stable: rng order breaks size ties

    totals = label_counts(records)
    totals[totals == 0] = 1.0
    fold_counts = np.zeros((k, 2))
    fold_sizes = np.zeros(k, dtype=int)
    assignment = {}
    for pid, recs in items:
        g = label_counts(recs)
        best_f, best_score = None, None
        for f in range(k):
            trial = fold_counts.copy()
            trial[f] += g
            imbalance = float(np.std(trial / totals, axis=0).sum())
            cand = (imbalance, fold_sizes[f], rng.uniform())
            if best_score is None or cand < best_score:
                best_f, best_score = f, cand
        assignment[pid] = best_f
        fold_counts[best_f] += g
        fold_sizes[best_f] += len(recs)

    folds = [[] for _ in range(k)]
    for r in records:
        folds[assignment[r.patient_id]].append(r.key)
    folds = [tuple(sorted(f)) for f in folds]

    splits = []
    for i in range(k):
        test = folds[i]
        val = folds[(i + 1) % k]
        train = tuple(key for j in range(k) if j not in (i, (i + 1) % k)
                      for key in folds[j])
        splits.append(FoldSplit(i, train, val, test))
    return splits


@dataclass(frozen=True)
class ExperimentConfig:
    k: int = 5
    settings: tuple = BASE_SETTINGS
    robustness: Optional[RobustnessConfig] = None
    scorer_hyper: TrainHyper = TrainHyper()
    score_table: Optional[dict] = None  # replay backend; replaces training
    generators: dict = field(default_factory=dict)  # View -> generator
    preprocess: PreprocessConfig = PreprocessConfig()
    augment: AugmentConfig = AugmentConfig()
    augment_copies: int = 0
    floor: float = DEFAULT_FLOOR
    root_seed: int = 0


def key_str(key) -> str:
    pid, lat = key
    return f"{pid}:{lat.value}"


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


class Experiment:
    """Runs the full pipeline over one manifest and configuration.

    All randomness is derived from SeedPaths under the config root seed,
    so the output is a pure function of (manifest, config, root_seed) and
    independent of execution order.
    """

    def __init__(self, manifest: DatasetManifest, config: ExperimentConfig):
        self.manifest = manifest
        self.config = config
        self.records = {r.key: r for r in manifest.biopsy_records()}
        self._image_cache = {}

    # -- image plumbing ----------------------------------------------------

    def _preprocessed(self, record: StudyRecord, m: Modality, v: View):
        cache_key = (record.key, m, v)
        cached = self._image_cache.get(cache_key)
        if cached is not None:
            return cached
        raw = raster.read_image(record.images[(m, v)])
        img = preprocess(raw, record.laterality, self.config.preprocess)
        self._image_cache[cache_key] = img
        return img

    def channel_image(self, record: StudyRecord, m: Modality, v: View,
                      synthetic: bool = False):
        """Algorithm step: real image when available and not designated
        missing, otherwise the view's generator imputes it from FFDM."""
        if m is Modality.F or (not synthetic and record.has_cesm()):
            return self._preprocessed(record, m, v)
        gen = self.config.generators.get(v)
        if gen is None:
            raise MissingChannel(f"record {key_str(record.key)}: CESM {v.value} "
                                 "missing and no generator configured")
        return gen.generate(self._preprocessed(record, Modality.F, v),
                            key=(record.patient_id, record.laterality, v))

    # -- per-fold pipeline -------------------------------------------------

    def _train_scorers(self, split: FoldSplit):
        if self.config.score_table is not None:
            return None
        seed = SeedPath(self.config.root_seed).child("fold", split.fold_index)
        scorers = {}
        for ci, (m, v) in enumerate(CHANNELS):
            train_set = []
            arng = derive_rng(seed.child("augment", ci))
            for key in split.train:
                rec = self.records[key]
                if m is Modality.C and not rec.has_cesm():
                    continue
                img = self._preprocessed(rec, m, v)
                train_set.append((img, rec.label))
                for _ in range(self.config.augment_copies):
                    train_set.append((augment(img, self.config.augment, arng),
                                      rec.label))
            val_set = []
            for key in split.val:
                rec = self.records[key]
                if m is Modality.C and not rec.has_cesm():
                    continue
                val_set.append((self._preprocessed(rec, m, v), rec.label))
            scorers[(m, v)] = train_reference(
                train_set, val_set, self.config.scorer_hyper,
                derive_rng(seed.child("scorer", ci)))
        return scorers

    def _score_channel(self, scorers, record: StudyRecord, m: Modality, v: View,
                       synthetic: bool = False) -> float:
        if self.config.score_table is not None:
            table_key = (record.patient_id, record.laterality, m, v)
            try:
                return self.config.score_table[table_key]
            except KeyError:
                raise MissingChannel(
                    f"score table has no entry for ({record.patient_id}, "
                    f"{m.value}, {v.value})") from None
        if scorers is None:
            raise UntrainedScorer("scorers were not trained for this fold")
        return score(scorers[(m, v)], self.channel_image(record, m, v, synthetic))

    def _record_scores(self, scorers, keys, synth_keys=frozenset()) -> dict:
        out = {}
        for key in keys:
            rec = self.records[key]
            out[key] = {
                (m, v): self._score_channel(scorers, rec, m, v,
                                            synthetic=key in synth_keys)
                for m, v in CHANNELS
            }
        return out

    def _fold_weights(self, scorers, split: FoldSplit) -> FusionWeights:
        val_scores = self._record_scores(scorers, split.val)
        val_labels = {k: self.records[k].label for k in split.val}
        return compute_weights(val_scores, val_labels, self.config.floor)

    # -- settings ----------------------------------------------------------

    def run_setting(self, split: FoldSplit, setting: str, scorers,
                    weights: FusionWeights, synth_keys=frozenset()):
        """Evaluate one experimental setting on the fold's test records.

        Returns (per-record results, MetricsTriple). synth_keys designates
        the test patients whose CESM is replaced by generated images (used
        by the hat and starred settings).
        """
        if setting in ("Chat", "FplusChat"):
            synth_keys = frozenset(split.test)
        test_scores = self._record_scores(scorers, split.test, synth_keys)
        truth = [self.records[k].label for k in sorted(split.test)]

        per_record = {}
        scores_list, preds = [], []
        for key in sorted(split.test):
            ch = test_scores[key]
            if setting in ("F", "C", "Chat", "Cstar"):
                m = Modality.F if setting == "F" else Modality.C
                p = fuse_modality(ch, m, weights)
                c = predict_class(p)
                per_record[key_str(key)] = {"p": p, "c": c.value}
            else:
                p, c, p_f, p_c = classify_record(ch, weights)
                per_record[key_str(key)] = {"p": p, "c": c.value,
                                            "p_F": p_f, "p_C": p_c}
            scores_list.append(p)
            preds.append(c)
        return per_record, triple(scores_list, preds, truth)

    def sample_synthetic(self, split: FoldSplit, n_percent: int, rep: int):
        """Patients (both views) designated to receive synthetic CESM, via
        the rng path (fold, robust n, rep); shared by Cstar and FplusCstar."""
        patients = sorted({key[0] for key in split.test})
        count = math.ceil(n_percent / 100.0 * len(patients))
        if count >= len(patients):
            chosen = set(patients)
        else:
            rng = derive_rng(SeedPath(self.config.root_seed)
                             .child("fold", split.fold_index)
                             .child("robust", n_percent).child("rep", rep))
            chosen = set(rng.choice(patients, size=count, replace=False))
        return frozenset(k for k in split.test if k[0] in chosen)

    # -- drivers -----------------------------------------------------------

    def run_fold(self, split: FoldSplit) -> dict:
        scorers = self._train_scorers(split)
        weights = self._fold_weights(scorers, split)
        out = {"fold": split.fold_index, "weights": weights.as_dict(),
               "weights_floored": weights.floored(), "settings": {}, "robustness": {}}
        for setting in self.config.settings:
            records, m = self.run_setting(split, setting, scorers, weights)
            out["settings"][setting] = {"records": records, "metrics": m.as_dict()}
        rb = self.config.robustness
        if rb is not None:
            for star in STAR_SETTINGS:
                out["robustness"][star] = {}
                for n in rb.percentages:
                    reps = []
                    for rep in range(rb.repetitions):
                        synth = self.sample_synthetic(split, n, rep)
                        records, m = self.run_setting(split, star, scorers,
                                                      weights, synth)
                        reps.append({
                            "rep": rep,
                            "synthetic_patients": sorted({k[0] for k in synth}),
                            "records": records,
                            "metrics": m.as_dict(),
                        })
                    out["robustness"][star][str(n)] = reps
        return out

    def run(self) -> dict:
        split_rng = derive_rng(SeedPath(self.config.root_seed).child("split"))
        splits = stratified_group_kfold(sorted(self.records.values(),
                                               key=lambda r: r.key),
                                        self.config.k, split_rng)
        workers = _thread_count()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                fold_results = list(pool.map(self.run_fold, splits))
        else:
            fold_results = [self.run_fold(s) for s in splits]
        return {"splits": splits, "folds": fold_results}


def aggregate(values):
    """(mean, standard error) over defined values; SE = sample std / sqrt(n),
    0 when n <= 1. Undefined (None) inputs are excluded and counted."""
    defined = [v for v in values if v is not None]
    undefined = len(values) - len(defined)
    if not defined:
        return {"mean": None, "se": None, "n": 0, "undefined": undefined}
    mean = float(np.mean(defined))
    se = float(np.std(defined, ddof=1) / math.sqrt(len(defined))) \
        if len(defined) > 1 else 0.0
    return {"mean": mean, "se": se, "n": len(defined), "undefined": undefined}


def acr_stratified_report(fold_results, splits, records,
                          settings=("F", "FplusC", "FplusChat")) -> dict:
    """Per-ACR-category metrics for the given settings, aggregated across
    folds. Single-class cells report G-mean only (AUC and MCC null)."""
    from .core import AcrCategory

    categories = [c for c in AcrCategory if c is not AcrCategory.NOT_REPORTED]
    out = {}
    for cat in categories:
        cat_out = {}
        for setting in settings:
            per_fold = []
            for split, fr in zip(splits, fold_results):
                if setting not in fr["settings"]:
                    continue
                rec_results = fr["settings"][setting]["records"]
                keys = [k for k in sorted(split.test) if records[k].acr is cat]
                if not keys:
                    continue
                scores_list = [rec_results[key_str(k)]["p"] for k in keys]
                preds = [BiopsyLabel(rec_results[key_str(k)]["c"]) for k in keys]
                truth = [records[k].label for k in keys]
                per_fold.append(triple(scores_list, preds, truth))
            if not per_fold:
                cat_out[setting] = {"empty": True}
                continue
            cat_out[setting] = {
                "folds_with_data": len(per_fold),
                "auc": aggregate([m.auc for m in per_fold]),
                "gmean": aggregate([m.gmean for m in per_fold]),
                "mcc": aggregate([m.mcc for m in per_fold]),
            }
        out[cat.value] = cat_out
    return out
