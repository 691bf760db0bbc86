"""Command-line front end.

Subcommands: ``eval`` (score predictions against ground truth), ``post``
(apply post-processing stages), ``ensemble`` (merge model outputs),
``sweep`` (confidence-threshold search), ``synth`` (generate synthetic
data). Exit codes: 0 success, 1 computation error, 2 input or usage
error. Reports and records go to files; stdout carries the human summary.
Evaluation fans out per image to a worker pool (``--jobs``); results are
merged in image order, so output bytes do not depend on parallelism. The
only randomness is in ``synth``, driven entirely by ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Callable

from .geometry import extent_bbox
from .metrics import (
    DEFAULT_LADDER,
    NoClassesError,
    NoMatchesError,
    ThresholdLadder,
    load_ladder,
    mean_average_precision,
)
from .postprocess import (
    EmptyEnsembleError,
    EnsembleConfig,
    ThresholdSweep,
    apply_confidence_threshold,
    ensemble_max,
    filter_ignore,
    recover_xy_records,
    sweep_threshold,
)
from .records import (
    ParseError,
    ValidationError,
    load_camera,
    load_csv_compat,
    load_ground_truth,
    load_ignore,
    load_predictions,
    save_camera,
    save_ground_truth,
    save_predictions,
)
from .synth import CAR_EXTENT, NoiseSpec, SceneSpec, generate_scene, perturb

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_INPUT = 2


def _unit_interval(text: str) -> float:
    value = float(text)
    if not (0.0 <= value <= 1.0):
        raise argparse.ArgumentTypeError(f"must be within [0, 1], got {text}")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _non_negative(text: str) -> float:
    value = float(text)
    if not value >= 0.0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _load_preds(path: str, fmt: str):
    return load_csv_compat(path) if fmt == "csv" else load_predictions(path)


def _load_ladder_arg(path: str | None) -> ThresholdLadder:
    return load_ladder(path) if path else DEFAULT_LADDER


def _ensure_gt_bboxes(gt_records, camera):
    out = []
    for record in gt_records:
        items = tuple(
            a if a.bbox is not None else replace(
                a, bbox=extent_bbox(a.pose.translation, CAR_EXTENT[0], CAR_EXTENT[2], camera))
            for a in record.items)
        out.append(replace(record, items=items))
    return out


def cmd_eval(args: argparse.Namespace) -> int:
    camera = load_camera(args.camera)
    ladder = _load_ladder_arg(args.ladder)
    preds = _load_preds(args.pred, args.format)
    gts = load_ground_truth(args.gt)
    if args.ignore:
        regions = load_ignore(args.ignore)
        preds = filter_ignore(preds, regions, args.ignore_overlap)
        gts = filter_ignore(_ensure_gt_bboxes(gts, camera), regions, args.ignore_overlap)
    _, report = mean_average_precision(preds, gts, ladder, jobs=args.jobs)
    sys.stdout.write(report.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(report.to_json_dict(), handle, indent=2)
            handle.write("\n")
    return EXIT_OK


def cmd_post(args: argparse.Namespace) -> int:
    camera = load_camera(args.camera)
    preds = _load_preds(args.pred, args.format)
    if args.recover_xy:
        preds = recover_xy_records(preds, camera)
    if args.threshold is not None:
        preds = apply_confidence_threshold(preds, args.threshold)
    if args.ignore:
        preds = filter_ignore(preds, load_ignore(args.ignore), args.ignore_overlap)
    save_predictions(preds, args.out)
    return EXIT_OK


def cmd_ensemble(args: argparse.Namespace) -> int:
    config = EnsembleConfig(iou_threshold=args.iou, mode=args.mode)
    models = [load_predictions(path) for path in args.inputs]
    save_predictions(ensemble_max(models, config), args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    load_camera(args.camera)  # validated up front; matching itself is camera-free
    ladder = _load_ladder_arg(args.ladder)
    preds = _load_preds(args.pred, args.format)
    gts = load_ground_truth(args.gt)
    try:
        sweep = ThresholdSweep(lo=args.lo, hi=args.hi, step=args.step)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    curve, best = sweep_threshold(preds, gts, sweep, ladder, jobs=args.jobs)
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write("threshold,map\n")
        for t, value in curve:
            handle.write(f"{t},{value}\n")
    best_map = dict(curve)[best]
    print(f"best threshold: {best} (mAP {best_map:.6f})")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    import os

    try:
        noise = NoiseSpec(
            translation_sigma=args.trans_sigma,
            rotation_sigma=args.rot_sigma,
            miss_rate=args.miss_rate,
            false_positive_rate=args.fp_rate,
            tp_confidence=(args.tp_conf[0], args.tp_conf[1]),
            fp_confidence=(args.fp_conf[0], args.fp_conf[1]),
        )
        spec = SceneSpec(
            seed=args.seed,
            n_images=args.images,
            objects_per_image=(args.objects_min, args.objects_max),
            depth_range=(args.depth_min, args.depth_max),
            n_classes=args.classes,
            noise=noise,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    gt_records, camera = generate_scene(spec)
    pred_records = perturb(gt_records, spec.noise, spec.seed, camera)
    os.makedirs(args.out_dir, exist_ok=True)
    save_ground_truth(gt_records, os.path.join(args.out_dir, "gt.jsonl"))
    save_predictions(pred_records, os.path.join(args.out_dir, "pred.jsonl"))
    save_camera(camera, os.path.join(args.out_dir, "camera.json"))
    n_objects = sum(len(r.items) for r in gt_records)
    n_dets = sum(len(r.items) for r in pred_records)
    print(f"wrote {len(gt_records)} images, {n_objects} objects, {n_dets} detections "
          f"to {args.out_dir}")
    return EXIT_OK


def _add_io_args(sub: argparse.ArgumentParser, gt: bool) -> None:
    sub.add_argument("--pred", required=True, help="predictions file (JSONL, or CSV with --format csv)")
    if gt:
        sub.add_argument("--gt", required=True, help="ground-truth JSONL file")
    sub.add_argument("--camera", required=True, help="camera intrinsics JSON file")
    sub.add_argument("--format", choices=("jsonl", "csv"), default="jsonl",
                     help="prediction input format (default jsonl)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pose6d",
                                     description="Post-process and evaluate 6D object detections.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p_eval = subparsers.add_parser("eval", help="score predictions against ground truth")
    _add_io_args(p_eval, gt=True)
    p_eval.add_argument("--ladder", help="threshold ladder JSON file (default: built-in ladder)")
    p_eval.add_argument("--ignore", help="ignore-region JSONL; filters predictions and ground truth")
    p_eval.add_argument("--ignore-overlap", type=_unit_interval, default=0.5,
                        help="overlap fraction above which a box is dropped (default 0.5)")
    p_eval.add_argument("--jobs", type=int, default=1, help="worker threads for matching (default 1)")
    p_eval.add_argument("--out", help="write the JSON report here")
    p_eval.set_defaults(func=cmd_eval)

    p_post = subparsers.add_parser("post", help="apply post-processing stages")
    _add_io_args(p_post, gt=False)
    p_post.add_argument("--recover-xy", action="store_true",
                        help="re-derive x, y from the box center at the predicted depth")
    p_post.add_argument("--threshold", type=_unit_interval,
                        help="drop detections with confidence below this")
    p_post.add_argument("--ignore", help="ignore-region JSONL file")
    p_post.add_argument("--ignore-overlap", type=_unit_interval, default=0.5,
                        help="overlap fraction above which a detection is dropped (default 0.5)")
    p_post.add_argument("--out", required=True, help="output predictions JSONL")
    p_post.set_defaults(func=cmd_post)

    p_ens = subparsers.add_parser("ensemble", help="merge detections from several models")
    p_ens.add_argument("inputs", nargs="+", help="prediction JSONL files, one per model")
    p_ens.add_argument("--iou", type=_unit_interval, default=0.5,
                       help="same-class IoU at or above which detections merge (default 0.5)")
    p_ens.add_argument("--mode", choices=("max",), default="max",
                       help="cluster representative rule (default max)")
    p_ens.add_argument("--out", required=True, help="output predictions JSONL")
    p_ens.set_defaults(func=cmd_ensemble)

    p_sweep = subparsers.add_parser("sweep", help="search the confidence threshold by mAP")
    _add_io_args(p_sweep, gt=True)
    p_sweep.add_argument("--ladder", help="threshold ladder JSON file (default: built-in ladder)")
    p_sweep.add_argument("--lo", type=_unit_interval, default=0.1, help="lowest threshold (default 0.1)")
    p_sweep.add_argument("--hi", type=_unit_interval, default=0.8, help="highest threshold (default 0.8)")
    p_sweep.add_argument("--step", type=_positive, default=0.05, help="grid step (default 0.05)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="worker threads for matching (default 1)")
    p_sweep.add_argument("--out", required=True, help="output curve CSV (threshold,map)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_synth = subparsers.add_parser("synth", help="generate a synthetic scene")
    p_synth.add_argument("--seed", type=int, default=0, help="PRNG seed (default 0)")
    p_synth.add_argument("--images", type=int, default=5, help="number of images (default 5)")
    p_synth.add_argument("--objects-min", type=int, default=1, help="min objects per image (default 1)")
    p_synth.add_argument("--objects-max", type=int, default=4, help="max objects per image (default 4)")
    p_synth.add_argument("--depth-min", type=_positive, default=8.0, help="min depth in m (default 8)")
    p_synth.add_argument("--depth-max", type=_positive, default=50.0, help="max depth in m (default 50)")
    p_synth.add_argument("--classes", type=int, default=1, help="number of classes (default 1)")
    p_synth.add_argument("--trans-sigma", type=_non_negative, default=0.0,
                         help="translation jitter sigma in m (default 0)")
    p_synth.add_argument("--rot-sigma", type=_non_negative, default=0.0,
                         help="rotation jitter sigma in rad (default 0)")
    p_synth.add_argument("--miss-rate", type=_unit_interval, default=0.0,
                         help="per-object miss probability (default 0)")
    p_synth.add_argument("--fp-rate", type=_unit_interval, default=0.0,
                         help="false-positive rate per ground-truth object (default 0)")
    p_synth.add_argument("--tp-conf", type=_unit_interval, nargs=2, default=[1.0, 1.0],
                         metavar=("LO", "HI"), help="confidence range of survivors (default 1 1)")
    p_synth.add_argument("--fp-conf", type=_unit_interval, nargs=2, default=[0.05, 0.5],
                         metavar=("LO", "HI"), help="confidence range of false positives")
    p_synth.add_argument("--out-dir", required=True,
                         help="directory for gt.jsonl, pred.jsonl, camera.json")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoClassesError, NoMatchesError, EmptyEnsembleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
