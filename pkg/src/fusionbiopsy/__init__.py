"""Multimodal multi-view breast-lesion classification with MCC-weighted
late fusion and missing-modality imputation."""

from .core import (AcrCategory, BiopsyLabel, DatasetManifest, GrayImage,
                   Laterality, Modality, Phase, SeedPath, StudyRecord, View,
                   CHANNELS, derive_rng, load_manifest, save_manifest)
from .fusion import (FusionWeights, classify_record, compute_weights,
                     fuse_modalities, fuse_views, predict_class)
from .generators import (ExternalGenerator, GenQuality, IdentityGenerator,
                         LinearGenerator, NoisyIdentityGenerator,
                         eval_generation, generator_from_spec, mse, psnr, ssim)
from .harness import (Experiment, ExperimentConfig, FoldSplit,
                      RobustnessConfig, aggregate, stratified_group_kfold)
from .metrics import ConfusionCounts, MetricsTriple, auc, confusion, gmean, mcc, triple
from .preprocess import (AugmentConfig, PreprocessConfig, augment, preprocess,
                         resize_bilinear)
from .report import build_report, write_report
from .scorers import (ReferenceScorer, TrainHyper, load_score_table,
                      pool_features, score, train_reference)
from .fixture import FixtureSpec, build_fixture

__version__ = "0.1.0"

__all__ = [
    "AcrCategory", "BiopsyLabel", "DatasetManifest", "GrayImage", "Laterality",
    "Modality", "Phase", "SeedPath", "StudyRecord", "View", "CHANNELS",
    "derive_rng", "load_manifest", "save_manifest",
    "FusionWeights", "classify_record", "compute_weights", "fuse_modalities",
    "fuse_views", "predict_class",
    "ExternalGenerator", "GenQuality", "IdentityGenerator", "LinearGenerator",
    "NoisyIdentityGenerator", "eval_generation", "generator_from_spec",
    "mse", "psnr", "ssim",
    "Experiment", "ExperimentConfig", "FoldSplit", "RobustnessConfig",
    "aggregate", "stratified_group_kfold",
    "ConfusionCounts", "MetricsTriple", "auc", "confusion", "gmean", "mcc",
    "triple",
    "AugmentConfig", "PreprocessConfig", "augment", "preprocess",
    "resize_bilinear",
    "build_report", "write_report",
    "ReferenceScorer", "TrainHyper", "load_score_table", "pool_features",
    "score", "train_reference",
    "FixtureSpec", "build_fixture",
]
