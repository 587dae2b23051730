"""Command-line entry point.

Subcommands:
  run         full cross-validated experiment from a JSON config
  evaluate    replay precomputed channel scores through fusion and metrics
  generate    synthesize CESM images and report generation quality
  robustness  the missing-modality sweep only (plus the FFDM baseline)
  fixture     build a synthetic desk-scale dataset

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
error. Failures print a single JSON object describing the error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import core, generators, raster
from .core import DatasetManifest, ManifestError, Modality, View, load_manifest
from .fixture import FixtureSpec, build_fixture
from .fusion import DEFAULT_FLOOR, MissingChannel
from .generators import GeneratorError, ShapeMismatch, eval_generation, generator_from_spec
from .harness import (BASE_SETTINGS, STAR_SETTINGS, Experiment,
                      ExperimentConfig, RobustnessConfig, TooFewPatients)
from .preprocess import AugmentConfig, PreprocessConfig, preprocess
from .report import build_report, write_report
from .scorers import ScoreTableError, TrainHyper, load_score_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class ConfigError(Exception):
    pass


def _fail(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({
        "error": {"kind": kind, "type": type(exc).__name__, "message": str(exc)}
    }) + "\n")
    return code


def _dataclass_from(cls, obj: dict, what: str):
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from None


def _parse_generators(spec) -> dict:
    if spec is None:
        return {}
    if "kind" in spec:
        gen = generator_from_spec(spec)
        return {v: gen for v in View}
    out = {}
    for key, sub in spec.items():
        try:
            view = View(key)
        except ValueError:
            raise ConfigError(f"unknown view {key!r} in generators") from None
        out[view] = generator_from_spec(sub)
    return out


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return obj


def _build_experiment_config(cfg: dict, args, settings=None,
                             score_table=None) -> ExperimentConfig:
    if settings is None:
        settings = tuple(cfg.get("settings", BASE_SETTINGS))
    for s in settings:
        if s not in BASE_SETTINGS:
            raise ConfigError(f"unknown setting {s!r}; choose from {BASE_SETTINGS}")
    rb = cfg.get("robustness")
    robustness = None
    if rb is not None:
        robustness = _dataclass_from(
            RobustnessConfig,
            {"percentages": tuple(rb.get("percentages", range(10, 101, 10))),
             "repetitions": int(rb.get("repetitions", 10))},
            "robustness block")
    k = args.folds if args.folds is not None else int(cfg.get("k", 5))
    seed = args.seed if args.seed is not None else int(cfg.get("root_seed", 0))
    try:
        gens = _parse_generators(cfg.get("generators"))
    except GeneratorError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        k=k,
        settings=settings,
        robustness=robustness,
        scorer_hyper=_dataclass_from(TrainHyper, cfg.get("scorer", {}), "scorer block"),
        score_table=score_table,
        generators=gens,
        preprocess=_dataclass_from(PreprocessConfig, cfg.get("preprocess", {}),
                                   "preprocess block"),
        augment=_dataclass_from(AugmentConfig, cfg.get("augment", {}),
                                "augment block"),
        augment_copies=int(cfg.get("augment_copies", 0)),
        floor=float(cfg.get("floor", DEFAULT_FLOOR)),
        root_seed=seed,
    )


def _manifest_path(cfg: dict, args) -> Path:
    path = getattr(args, "manifest", None) or cfg.get("manifest")
    if path is None:
        raise ConfigError("no manifest given (flag --manifest or config key 'manifest')")
    return Path(path)


def _config_echo(config: ExperimentConfig, manifest_path: Path) -> dict:
    return {
        "manifest": str(manifest_path),
        "k": config.k,
        "settings": list(config.settings),
        "robustness": None if config.robustness is None else {
            "percentages": list(config.robustness.percentages),
            "repetitions": config.robustness.repetitions,
        },
        "root_seed": config.root_seed,
        "floor": config.floor,
        "augment_copies": config.augment_copies,
    }


def _run_and_write(manifest: DatasetManifest, config: ExperimentConfig,
                   manifest_path: Path, out_dir: Path) -> None:
    exp = Experiment(manifest, config)
    result = exp.run()
    report = build_report(result, _config_echo(config, manifest_path), exp.records)
    write_report(out_dir, report)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    config = _build_experiment_config(cfg, args)
    manifest = load_manifest(_manifest_path(cfg, args))
    _run_and_write(manifest, config, _manifest_path(cfg, args), Path(args.out))
    return EXIT_OK


def cmd_robustness(args) -> int:
    cfg = _load_config(args)
    if "robustness" not in cfg:
        cfg["robustness"] = {}
    config = _build_experiment_config(cfg, args, settings=("F",))
    manifest = load_manifest(_manifest_path(cfg, args))
    _run_and_write(manifest, config, _manifest_path(cfg, args), Path(args.out))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    table = load_score_table(args.scores)
    settings = tuple(cfg.get("settings", ("F", "C", "FplusC")))
    for s in settings:
        if s in ("Chat", "FplusChat"):
            raise ConfigError("synthetic settings need trained scorers; "
                              "they cannot be replayed from a score table")
    config = _build_experiment_config(cfg, args, settings=settings,
                                      score_table=table)
    manifest = load_manifest(_manifest_path(cfg, args))
    _run_and_write(manifest, config, _manifest_path(cfg, args), Path(args.out))
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    gens = _parse_generators(cfg.get("generators"))
    if not gens:
        raise ConfigError("the generate command needs a 'generators' config block")
    pre = _dataclass_from(PreprocessConfig, cfg.get("preprocess", {}),
                          "preprocess block")
    manifest = load_manifest(_manifest_path(cfg, args))
    out_dir = Path(args.out)
    images_dir = out_dir / "synthetic"
    images_dir.mkdir(parents=True, exist_ok=True)

    rows = {}
    for rec in manifest.biopsy_records():
        for view in View:
            img_f = preprocess(raster.read_image(rec.images[(Modality.F, view)]),
                               rec.laterality, pre)
            synth = gens[view].generate(
                img_f, key=(rec.patient_id, rec.laterality, view))
            name = f"{rec.patient_id}_{rec.laterality.value}_{view.value}.pgm"
            raster.write_pgm(images_dir / name, synth)
            entry = {"image": f"synthetic/{name}"}
            if rec.has_cesm():
                target = preprocess(
                    raster.read_image(rec.images[(Modality.C, view)]),
                    rec.laterality, pre)
                entry["quality"] = eval_generation(synth, target).as_dict()
            key = f"{rec.patient_id}:{rec.laterality.value}:{view.value}"
            rows[key] = entry
    (out_dir / "generation.json").write_text(
        json.dumps(rows, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def cmd_fixture(args) -> int:
    cfg = _load_config(args)
    spec_obj = dict(cfg.get("fixture", {}))
    if args.seed is not None:
        spec_obj["seed"] = args.seed
    spec = _dataclass_from(FixtureSpec, spec_obj, "fixture block")
    build_fixture(Path(args.out), spec)
    return EXIT_OK


def _add_common(p, manifest_flag=True):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, default=None, help="root RNG seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--folds", type=int, default=None,
                   help="number of cross-validation folds")
    if manifest_flag:
        p.add_argument("--manifest", help="dataset manifest JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusionbiopsy",
        description="Multimodal multi-view lesion classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full cross-validated experiment")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="replay a channel score table")
    _add_common(p)
    p.add_argument("--scores", required=True, help="channel score CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="synthesize CESM images")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("robustness", help="missing-modality sweep")
    _add_common(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("fixture", help="build a synthetic dataset")
    _add_common(p, manifest_flag=False)
    p.set_defaults(func=cmd_fixture)
    return parser


_CONFIG_ERRORS = (ConfigError, GeneratorError, ValueError)
_DATA_ERRORS = (ManifestError, ScoreTableError, MissingChannel, ShapeMismatch,
                TooFewPatients, raster.RasterError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except _DATA_ERRORS as exc:
        return _fail("data", exc, EXIT_DATA)
    except Exception as exc:  # pragma: no cover - defensive
        return _fail("internal", exc, EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
