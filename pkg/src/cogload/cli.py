"""Batch command line: synth, features, train-eval, transfer.

Exit codes: 0 success, 1 runtime failure (bad data, unreadable files),
2 usage errors (argparse). Outputs are deterministic unless --timestamp
asks for a generation comment in the figures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .crossmodal import ALIGNMENTS, TransferSpec, run_transfer_pair
from .dataset import CLASS4_NAMES, load_manifest
from .errors import PipelineError
from .features import build_ecg_feature_table, build_eeg_feature_table, build_tensors
from .ml import (
    TASKS,
    FeatureTable,
    evaluate,
    feature_importance,
    save_model,
    split,
    task_view,
    train_model,
)
from .reports import (
    eval_report_payload,
    file_sha256,
    svg_confusion,
    svg_importance,
    svg_transfer,
    transfer_payload,
    write_confusion_csv,
    write_importance_csv,
    write_report_json,
    write_transfer_csv,
)
from .synth import CoupledLoadSpec, gen_coupled_dataset

log = logging.getLogger("cogload.cli")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogload",
        description="Cognitive-load signal pipeline: synthesize, featurize, "
                    "train, transfer.",
    )
    parser.add_argument("--version", action="version",
                        version=f"cogload {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic coupled dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--trials-per-class", type=int, default=50)
    p.add_argument("--offset-scale", type=float, default=1.0,
                   help="class separation; 0 gives an unlearnable null set")
    p.add_argument("--subject-sd", type=float, default=1.0,
                   help="between-subject parameter jitter scale")
    p.add_argument("--snr-db", type=float, default=18.0)
    p.add_argument("--epoch-seconds", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("features", help="featurize one modality of a dataset")
    p.add_argument("--data", required=True, help="dataset directory (manifest.json)")
    p.add_argument("--modality", required=True, choices=("ecg", "eeg"))
    p.add_argument("--feature-set", default="both",
                   choices=("hrv", "catch22", "both"),
                   help="ecg only; eeg always uses the waveform set")
    p.add_argument("--epoch-seconds", type=float, default=8.0)
    p.add_argument("--no-preprocess", action="store_true",
                   help="skip filtering (for already-clean signals)")
    p.add_argument("--out", required=True, help="output feature CSV")

    p = sub.add_parser("train-eval", help="split, train and score one table")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--task", default="mc", choices=TASKS)
    p.add_argument("--model", default="gb", choices=("rf", "gb"))
    p.add_argument("--split", default="trial_stratified",
                   choices=("trial_stratified", "subject_grouped"))
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--timestamp", action="store_true",
                   help="stamp figures with generation time")

    p = sub.add_parser("transfer", help="cross-modal transfer, both directions")
    p.add_argument("--ecg", required=True, help="ecg feature CSV")
    p.add_argument("--eeg", required=True, help="eeg feature CSV")
    p.add_argument("--task", default="mc", choices=TASKS)
    p.add_argument("--model", default="gb", choices=("rf", "gb"))
    p.add_argument("--alignment", default="channel_mean", choices=ALIGNMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--timestamp", action="store_true")
    return parser


def _now_or_none(flag: bool) -> str | None:
    return datetime.now(timezone.utc).isoformat() if flag else None


def _cmd_synth(args) -> int:
    spec = CoupledLoadSpec(
        n_subjects=args.subjects,
        trials_per_class=args.trials_per_class,
        offset_scale=args.offset_scale,
        subject_sd=args.subject_sd,
        snr_db=args.snr_db,
        epoch_seconds=args.epoch_seconds,
        seed=args.seed,
    )
    manifest = gen_coupled_dataset(spec, args.out)
    n_trials = len(manifest.events)
    print(f"wrote {n_trials} trials x 2 modalities for "
          f"{len(manifest.subjects)} subjects under {args.out}")
    return 0


def _cmd_features(args) -> int:
    manifest = load_manifest(Path(args.data) / "manifest.json",
                             epoch_seconds=args.epoch_seconds)
    tensors = build_tensors(manifest, modalities=(args.modality,),
                            epoch_seconds=args.epoch_seconds,
                            preprocess=not args.no_preprocess)
    if args.modality not in tensors:
        print(f"error: dataset has no {args.modality} recordings", file=sys.stderr)
        return 1
    if args.modality == "ecg":
        table = build_ecg_feature_table(tensors["ecg"], args.feature_set)
    else:
        table = build_eeg_feature_table(tensors["eeg"])
    header = (
        f"cogload {__version__} features",
        f"modality: {args.modality}",
        f"feature_set: {args.feature_set if args.modality == 'ecg' else 'catch22'}",
        f"epoch_seconds: {args.epoch_seconds}",
        f"preprocess: {not args.no_preprocess}",
        f"manifest_sha256: {file_sha256(Path(args.data) / 'manifest.json')}",
    )
    table.to_csv(args.out, header_lines=header)
    print(f"wrote {table.n_rows} rows x {len(table.columns)} features to {args.out}")
    return 0


def _cmd_train_eval(args) -> int:
    table = FeatureTable.from_csv(args.features, CLASS4_NAMES)
    view = task_view(table, args.task)
    train, test = split(view, args.split, args.test_fraction, args.seed)
    model = train_model(train, args.model, seed=args.seed)
    report = evaluate(model, test, protocol={
        "task": args.task,
        "split": args.split,
        "test_fraction": args.test_fraction,
        "seed": args.seed,
        "n_train": train.n_rows,
    })
    out = Path(args.out)
    config = {
        "command": "train-eval",
        "features": str(args.features),
        "task": args.task,
        "model": args.model,
        "split": args.split,
        "test_fraction": args.test_fraction,
        "seed": args.seed,
    }
    write_report_json(out / "metrics.json",
                      eval_report_payload(report, config, [args.features]))
    comments = [f"cogload {__version__}", f"features: {args.features}",
                f"task: {args.task}", f"model: {args.model}"]
    write_confusion_csv(out / "confusion.csv", report, comments)
    items = feature_importance(model)
    write_importance_csv(out / "importance.csv", items, comments)
    ts = _now_or_none(args.timestamp)
    svg_confusion(out / "confusion.svg", report, ts)
    svg_importance(out / "importance.svg", items, ts)
    save_model(model, out / "model.json")
    print(f"accuracy {report.accuracy:.4f}  macro_f1 {report.macro_f1:.4f}  "
          f"(n_test {report.n_test}) -> {out}")
    return 0


def _cmd_transfer(args) -> int:
    ecg = FeatureTable.from_csv(args.ecg, CLASS4_NAMES)
    eeg = FeatureTable.from_csv(args.eeg, CLASS4_NAMES)
    spec = TransferSpec(task=args.task, model=args.model,
                        alignment=args.alignment, seed=args.seed)
    reports = run_transfer_pair(ecg, eeg, spec)
    out = Path(args.out)
    config = {
        "command": "transfer",
        "ecg": str(args.ecg),
        "eeg": str(args.eeg),
        "task": args.task,
        "model": args.model,
        "alignment": args.alignment,
        "seed": args.seed,
    }
    write_report_json(out / "transfer.json",
                      transfer_payload(reports, config, [args.ecg, args.eeg]))
    comments = [f"cogload {__version__}", f"task: {args.task}",
                f"model: {args.model}", f"alignment: {args.alignment}"]
    write_transfer_csv(out / "transfer.csv", reports, comments)
    chance = _majority_prior(ecg, eeg, args.task)
    svg_transfer(out / "transfer.svg", reports, chance,
                 _now_or_none(args.timestamp))
    for direction, rep in reports.items():
        print(f"{direction}: accuracy {rep.accuracy:.4f}  "
              f"macro_f1 {rep.macro_f1:.4f}")
    return 0


def _majority_prior(ecg: FeatureTable, eeg: FeatureTable, task: str) -> float:
    """Majority-class rate over both tables pooled, in the task's label space."""
    counts: dict[str, int] = {}
    for t in (task_view(ecg, task), task_view(eeg, task)):
        for name in t.label_names():
            counts[name] = counts.get(name, 0) + 1
    total = sum(counts.values())
    return max(counts.values()) / total if total else 0.0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "synth": _cmd_synth,
        "features": _cmd_features,
        "train-eval": _cmd_train_eval,
        "transfer": _cmd_transfer,
    }
    try:
        return handlers[args.command](args)
    except (PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
