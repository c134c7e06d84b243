"""Command-line front end.

Subcommands: synth, train, finetune, eval, ncc, pipeline, gradcheck.

Options can come from a JSON config file (--config) and/or flags; flags
override the file.  Every command writes its effective configuration to
<out>/config.json, and all randomness flows from the one --seed through
named streams, so re-running a command reproduces its outputs byte for byte
(timestamps live only in run.log).  Log verbosity comes from the
DUALVIEW_LOG environment variable (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import evaluation, pipeline
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import (
    load_candidates,
    load_image,
    load_lesions,
    load_matcher_corpus,
    make_training_pairs,
    split_by_patient,
)
from .errors import (
    CheckpointMismatchError,
    FormatError,
    NumericError,
    SingleClassError,
    TrainingDiverged,
    ValidationError,
)
from .gradcheck import check_model_gradients
from .model import ARCH_PRESETS
from .ncc import ncc_score_dataset
from .synth import SynthConfig, generate_dataset
from .training import (
    Ensemble,
    TrainConfig,
    score_pairs_with_ensemble,
    train_ensemble,
)

logger = logging.getLogger("dualview")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MISSING_FILE = 3
EXIT_CHECKPOINT_MISMATCH = 4
EXIT_SINGLE_CLASS = 5
EXIT_NUMERIC = 6
EXIT_VALIDATION = 7
EXIT_FORMAT = 8

_ERROR_CATEGORIES = [
    (FileNotFoundError, "missing-file", EXIT_MISSING_FILE),
    (CheckpointMismatchError, "checkpoint-mismatch", EXIT_CHECKPOINT_MISMATCH),
    (SingleClassError, "single-class", EXIT_SINGLE_CLASS),
    (TrainingDiverged, "numeric", EXIT_NUMERIC),
    (NumericError, "numeric", EXIT_NUMERIC),
    (FormatError, "format", EXIT_FORMAT),
    (ValidationError, "validation", EXIT_VALIDATION),
]


def _setup_logging(out_dir: Path | None) -> None:
    level = getattr(logging, os.environ.get("DUALVIEW_LOG", "INFO").upper(), logging.INFO)
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if out_dir is not None:
        file_handler = logging.FileHandler(out_dir / "run.log")
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        handlers.append(file_handler)
    logging.basicConfig(level=level, handlers=handlers, force=True)


def _merge_config(args: argparse.Namespace, keys: dict[str, object]) -> dict:
    """Effective options: defaults, overridden by config file, then flags."""
    file_values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} does not exist")
        file_values = json.loads(path.read_text())
    merged = {}
    for key, default in keys.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in file_values:
            merged[key] = file_values[key]
        else:
            merged[key] = default
    return merged


def _require(merged: dict, *keys: str) -> None:
    for key in keys:
        if merged[key] is None:
            raise ValidationError(f"--{key.replace('_', '-')} is required (flag or config file)")


def _prepare_out(merged: dict) -> Path:
    out = Path(merged["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config_snapshot(out: Path, merged: dict) -> None:
    # the output path is where the run lives, not part of what it computes;
    # leaving it out keeps re-runs byte-identical across directories
    snapshot = {k: v for k, v in merged.items() if k not in ("config", "out")}
    (out / "config.json").write_text(json.dumps(snapshot, sort_keys=True, indent=1) + "\n")


def _dataset_pairs(merged: dict, split: str, augment: bool):
    """Labeled PatchPairs for one split of a dataset directory."""
    data_dir = Path(merged["data"])
    if not data_dir.exists():
        raise FileNotFoundError(f"dataset directory {data_dir} does not exist")
    lesions = load_lesions(data_dir / "lesions.jsonl")
    manifest = split_by_patient(
        [l.patient for l in lesions], ratio=merged["split_ratio"], seed=merged["seed"]
    )
    patients = None if split == "all" else set(manifest.patients(split))
    corpus = load_matcher_corpus(data_dir, patients=patients, delta=merged["delta"])
    pairs = make_training_pairs(
        corpus.positives,
        corpus.false_detections,
        corpus.annotated,
        augment_pairs=augment,
        same_study_only=True,
    )
    return pairs, manifest, corpus


def _load_ensemble(paths: list[str]) -> Ensemble:
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(f"checkpoint {p} does not exist")
    return Ensemble([load_checkpoint(p) for p in paths])


def _eval_outputs(out: Path, scored, merged: dict, label: str) -> dict:
    curve = evaluation.roc(scored)
    evaluation.save_roc_csv(curve, out / "roc.csv")
    evaluation.save_roc_svg([(label, curve)], out / "roc.svg")
    thr, sens, spec = evaluation.operating_point(curve, merged["sensitivity_target"])
    summary = {
        "auc": curve.auc,
        "n_scores": len(scored),
        "operating_point": {
            "target_sensitivity": merged["sensitivity_target"],
            "threshold": thr,
            "sensitivity": sens,
            "specificity": spec,
        },
    }
    evaluation.save_summary(out / "summary.json", summary)
    return summary


# -- commands ---------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    # defaults come straight from the dataclass so the CLI cannot drift
    synth_defaults = {
        f.name: (None if f.name == "seed" else f.default) for f in fields(SynthConfig)
    }
    merged = _merge_config(args, {"out": None, **synth_defaults})
    _require(merged, "out", "seed")
    out = _prepare_out(merged)
    _setup_logging(out)
    _write_config_snapshot(out, merged)
    config = SynthConfig(**{k: v for k, v in merged.items() if k != "out"})
    summary = generate_dataset(config, out)
    logger.info(
        "wrote %d studies, %d lesion records, %d candidates to %s",
        summary["patients"],
        summary["lesion_records"],
        summary["candidates"],
        out,
    )
    return EXIT_OK


_TRAIN_DEFAULTS = TrainConfig()
_TRAIN_KEYS = {
    "data": None,
    "out": None,
    "seed": None,
    "arch": "desk",
    "epochs": _TRAIN_DEFAULTS.epochs,
    "batch_size": _TRAIN_DEFAULTS.batch_size,
    "lr": _TRAIN_DEFAULTS.lr,
    "ensemble_size": _TRAIN_DEFAULTS.ensemble_size,
    "augment": True,
    "split_ratio": 0.8,
    "delta": 0.1,
    "freeze_preset": "none",
    "checkpoints": None,
}


def _run_training(args: argparse.Namespace, finetune: bool) -> int:
    merged = _merge_config(args, dict(_TRAIN_KEYS))
    if finetune and merged["freeze_preset"] == "none" and args.freeze_preset is None:
        merged["freeze_preset"] = "fine-tune"
    _require(merged, "data", "out", "seed")
    if finetune:
        _require(merged, "checkpoints")
    out = _prepare_out(merged)
    _setup_logging(out)
    _write_config_snapshot(out, merged)

    arch = ARCH_PRESETS[merged["arch"]]
    pairs, manifest, _ = _dataset_pairs(merged, "train", merged["augment"])
    manifest.save(out / "split.json")
    positives = [p for p in pairs if p.label == 1]
    negatives = [p for p in pairs if p.label == 0]
    logger.info("training on %d positives / %d negatives", len(positives), len(negatives))

    config = TrainConfig(
        lr=merged["lr"],
        batch_size=merged["batch_size"],
        epochs=merged["epochs"],
        seed=merged["seed"],
        ensemble_size=merged["ensemble_size"],
        freeze_preset=merged["freeze_preset"],
    )
    initial = None
    if finetune:
        ckpts = merged["checkpoints"]
        initial = [
            load_checkpoint(ckpts[i % len(ckpts)], expected_fingerprint=arch.fingerprint())
            for i in range(config.ensemble_size)
        ]
    ensemble, _ = train_ensemble(
        positives, negatives, config, arch, run_dir=out, initial_models=initial
    )
    for index, member in enumerate(ensemble.members):
        save_checkpoint(member, out / f"member_{index}.ckpt", seed=merged["seed"])
    logger.info("saved %d member checkpoints to %s", len(ensemble.members), out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    return _run_training(args, finetune=False)


def cmd_finetune(args: argparse.Namespace) -> int:
    return _run_training(args, finetune=True)


_EVAL_KEYS = {
    "data": None,
    "out": None,
    "seed": 0,
    "checkpoints": None,
    "split": "test",
    "split_ratio": 0.8,
    "delta": 0.1,
    "sensitivity_target": 0.99,
}


def cmd_eval(args: argparse.Namespace) -> int:
    merged = _merge_config(args, dict(_EVAL_KEYS))
    _require(merged, "data", "out", "checkpoints")
    out = _prepare_out(merged)
    _setup_logging(out)
    _write_config_snapshot(out, merged)
    ensemble = _load_ensemble(merged["checkpoints"])
    pairs, _, _ = _dataset_pairs(merged, merged["split"], augment=False)
    scored = score_pairs_with_ensemble(ensemble, pairs)
    summary = _eval_outputs(out, scored, merged, "ensemble")
    logger.info("ensemble AUC %.4f over %d pairs", summary["auc"], len(scored))
    return EXIT_OK


def cmd_ncc(args: argparse.Namespace) -> int:
    keys = dict(_EVAL_KEYS)
    keys.pop("checkpoints")
    merged = _merge_config(args, keys)
    _require(merged, "data", "out")
    out = _prepare_out(merged)
    _setup_logging(out)
    _write_config_snapshot(out, merged)
    pairs, _, _ = _dataset_pairs(merged, merged["split"], augment=False)
    scored = ncc_score_dataset(pairs)
    summary = _eval_outputs(out, scored, merged, "ncc")
    logger.info("ncc AUC %.4f over %d pairs", summary["auc"], len(scored))
    return EXIT_OK


_PIPELINE_KEYS = {
    "data": None,
    "out": None,
    "seed": 0,
    "scorer": "ensemble",
    "checkpoints": None,
    "standalone_mode": "include",
    "split": "test",
    "split_ratio": 0.8,
    "delta": 0.1,
    "sensitivity_target": 0.99,
}


def cmd_pipeline(args: argparse.Namespace) -> int:
    merged = _merge_config(args, dict(_PIPELINE_KEYS))
    _require(merged, "data", "out")
    if merged["scorer"] == "ensemble":
        _require(merged, "checkpoints")
    out = _prepare_out(merged)
    _setup_logging(out)
    _write_config_snapshot(out, merged)
    result = run_pipeline_dir(merged)

    pipeline.save_pair_records(result["records"], out / "pair_records.csv")
    pipeline.save_adjusted(result["adjusted"], out / "adjusted.csv")
    curves = []
    for mode in ("include", "exclude"):
        curve = result["curves"][mode]
        evaluation.save_roc_csv(curve, out / f"roc_{mode}.csv")
        curves.append((mode, curve))
    evaluation.save_roc_svg(curves, out / "roc.svg", title="pair matching ROC")
    evaluation.save_summary(out / "summary.json", result["summary"])
    logger.info(
        "pipeline AUC include %.4f / exclude %.4f; fp removed %d of %d",
        result["summary"]["auc_include"],
        result["summary"]["auc_exclude"],
        result["summary"]["fp_report"]["removed_false"],
        result["summary"]["fp_report"]["total_false"],
    )
    return EXIT_OK


def run_pipeline_dir(merged: dict) -> dict:
    """Run the dual-view pipeline over a dataset directory; pure of the CLI."""
    data_dir = Path(merged["data"])
    if not data_dir.exists():
        raise FileNotFoundError(f"dataset directory {data_dir} does not exist")
    lesions = load_lesions(data_dir / "lesions.jsonl")
    candidates = load_candidates(data_dir / "candidates.jsonl")
    split = merged["split"]
    if split != "all":
        manifest = split_by_patient(
            [l.patient for l in lesions], ratio=merged["split_ratio"], seed=merged["seed"]
        )
        chosen = set(manifest.patients(split))
        lesions = [l for l in lesions if l.patient in chosen]
        studies = {l.study for l in lesions}
        candidates = [c for c in candidates if c.study in studies]

    images = {}
    for rel in {c.image for c in candidates} | {l.image for l in lesions}:
        images[rel] = load_image(data_dir / rel)
    gt_by_image: dict[str, list] = {}
    for lesion in lesions:
        gt_by_image.setdefault(lesion.image, []).append(lesion.polygon)
    dims = {rel: img.shape for rel, img in images.items()}
    labels = pipeline.label_candidates(candidates, gt_by_image, dims, delta=merged["delta"])

    if merged["scorer"] == "ncc":
        scorer = pipeline.NccScorer()
    elif merged["scorer"] == "ensemble":
        scorer = pipeline.EnsembleScorer(_load_ensemble(merged["checkpoints"]))
    elif merged["scorer"] == "oracle":
        scorer = None  # probabilities come straight from the pair labels
    else:
        raise ValidationError(f"unknown scorer {merged['scorer']!r}")

    by_study: dict[str, dict[str, list]] = {}
    for cand in candidates:
        by_study.setdefault(cand.study, {"CC": [], "MLO": []})[cand.view].append(cand)

    records: list[pipeline.PairRecord] = []
    standalones: list[pipeline.StandaloneDetection] = []
    adjusted: list[pipeline.AdjustedDetection] = []
    total_pairs = 0
    skipped = 0
    for study in sorted(by_study):
        p_cc, p_mlo = by_study[study]["CC"], by_study[study]["MLO"]
        pairs, alone = pipeline.enumerate_pairs(p_cc, p_mlo)
        total_pairs += len(pairs)
        if scorer is None:
            study_records = [
                pipeline.PairRecord(
                    cc.id, mlo.id, float(labels[cc.id] and labels[mlo.id]),
                    int(labels[cc.id] and labels[mlo.id]),
                )
                for cc, mlo in pairs
            ]
        else:
            study_records, study_skipped = pipeline.score_pairs(pairs, scorer, images, labels)
            skipped += study_skipped
        records.extend(study_records)
        standalones.extend(
            pipeline.StandaloneDetection(c.id, c.view, c.score, labels[c.id]) for c in alone
        )
        adjusted.extend(
            pipeline.adjust_scores(p_cc, p_mlo, study_records, merged["standalone_mode"], labels)
        )

    curves = {
        mode: pipeline.evaluate_pipeline(records, mode, standalones)
        for mode in ("include", "exclude")
    }
    detection_scores = [(a.adjusted, a.label) for a in adjusted]
    detection_curve = evaluation.roc(detection_scores)
    thr, _, _ = evaluation.operating_point(detection_curve, merged["sensitivity_target"])
    report = pipeline.fp_reduction_report(adjusted, thr)

    summary = {
        "auc_include": curves["include"].auc,
        "auc_exclude": curves["exclude"].auc,
        "n_pair_records": len(records),
        "n_standalone": len(standalones),
        "n_pairs_enumerated": total_pairs,
        "n_pairs_skipped": skipped,
        "scorer": merged["scorer"],
        "standalone_mode": merged["standalone_mode"],
        "fp_report": {
            "threshold": report.threshold,
            "sensitivity": report.sensitivity,
            "specificity": report.specificity,
            "total_true": report.total_true,
            "total_false": report.total_false,
            "retained_true": report.retained_true,
            "removed_false": report.removed_false,
        },
    }
    return {
        "records": records,
        "standalones": standalones,
        "adjusted": adjusted,
        "curves": curves,
        "summary": summary,
        "labels": labels,
    }


def cmd_gradcheck(args: argparse.Namespace) -> int:
    merged = _merge_config(
        args, {"arch": "desk", "seed": 0, "out": None, "tolerance": 1e-4}
    )
    out = _prepare_out(merged) if merged["out"] else None
    _setup_logging(out)
    if out:
        _write_config_snapshot(out, merged)
    report = check_model_gradients(
        ARCH_PRESETS[merged["arch"]], seed=merged["seed"], tolerance=merged["tolerance"]
    )
    rows = report.by_layer()
    width = max(len(layer) for layer, _, _ in rows)
    print(f"{'layer'.ljust(width)}  max rel err  result")
    for layer, err, ok in rows:
        print(f"{layer.ljust(width)}  {err:11.3e}  {'pass' if ok else 'FAIL'}")
    if out:
        with open(out / "gradcheck.csv", "w") as fh:
            fh.write("layer,max_rel_err,passed\n")
            for layer, err, ok in rows:
                fh.write(f"{layer},{err!r},{int(ok)}\n")
    return EXIT_OK if report.passed else EXIT_FAILURE


# -- parser -----------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--seed", type=int, default=None, help="root random seed")
    sub.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualview",
        description="dual-view patch matching: synth data, training, baselines, pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dual-view dataset")
    _add_common(p)
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--lesions-per-patient", dest="lesions_per_patient", type=int, default=None)
    p.add_argument("--image-size", dest="image_size", type=int, default=None)
    p.add_argument("--false-per-view", dest="false_per_view", type=int, default=None)
    p.add_argument("--drop-view-prob", dest="drop_view_prob", type=float, default=None)
    p.add_argument("--rotation-deg", dest="rotation_deg", type=float, default=None)
    p.add_argument("--stretch", type=float, default=None)
    p.add_argument("--intensity-shift", dest="intensity_shift", type=float, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--texture-amp", dest="texture_amp", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    for name, func, finetune in (("train", cmd_train, False), ("finetune", cmd_finetune, True)):
        p = sub.add_parser(name, help=f"{name} the matcher ensemble")
        _add_common(p)
        p.add_argument("--data", default=None, help="dataset directory from synth")
        p.add_argument("--arch", choices=sorted(ARCH_PRESETS), default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--ensemble-size", dest="ensemble_size", type=int, default=None)
        p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--split-ratio", dest="split_ratio", type=float, default=None)
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--freeze-preset", dest="freeze_preset", choices=["none", "fine-tune"], default=None)
        p.add_argument("--checkpoints", nargs="+", default=None, help="starting checkpoints (finetune)")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score matcher pairs and write ROC/AUC")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoints", nargs="+", default=None)
    p.add_argument("--split", choices=["train", "test", "all"], default=None)
    p.add_argument("--split-ratio", dest="split_ratio", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--sensitivity-target", dest="sensitivity_target", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ncc", help="score matcher pairs with the NCC baseline")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--split", choices=["train", "test", "all"], default=None)
    p.add_argument("--split-ratio", dest="split_ratio", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--sensitivity-target", dest="sensitivity_target", type=float, default=None)
    p.set_defaults(func=cmd_ncc)

    p = sub.add_parser("pipeline", help="dual-view candidate filtering over a dataset")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--scorer", choices=["ensemble", "ncc", "oracle"], default=None)
    p.add_argument("--checkpoints", nargs="+", default=None)
    p.add_argument("--standalone-mode", dest="standalone_mode", choices=["include", "exclude"], default=None)
    p.add_argument("--split", choices=["train", "test", "all"], default=None)
    p.add_argument("--split-ratio", dest="split_ratio", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--sensitivity-target", dest="sensitivity_target", type=float, default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the gradients")
    _add_common(p)
    p.add_argument("--arch", choices=sorted(ARCH_PRESETS), default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - map to documented exit codes
        for exc_type, category, code in _ERROR_CATEGORIES:
            if isinstance(exc, exc_type):
                print(f"error category={category}: {exc}", file=sys.stderr)
                return code
        print(f"error category=internal: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
