"""Evaluation: pose matching, average precision, and error statistics.

Matching is greedy per image and per threshold pair: predictions are
visited in descending confidence (ties: input order) and each takes the
nearest-by-translation unmatched ground-truth object of the same class
that satisfies both ``||T - T_hat|| <= t_m`` and
``angular_error <= r_rad`` (ties: lowest ground-truth index). A threshold
ladder is an ordered list of such ``(t_m, r_rad)`` pairs; AP is computed
per class and per pair over the dataset-wide confidence ranking with the
all-points precision envelope, and mAP is the mean over classes of the
mean over pairs.

Scalar error statistics in the report (translation MAE, angular error
mean/median, precision/recall, TP/FP/FN counts) are computed from the
matching at the last ladder pair, which for the default strict-to-loose
ladder maximizes match coverage.

Ladder files are JSON arrays of ``{"trans_m": .., "rot_deg": ..}``;
degrees are converted to radians at load time.
"""

from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import angular_error, iou_2d  # noqa: F401  (iou_2d re-exported)
from .records import Annotation, Detection, ImageRecord, ParseError, ValidationError


class NoMatchesError(ValueError):
    """Statistic over matched pairs is undefined: there are none."""


class NoClassesError(ValueError):
    """mAP is undefined: no class appears in ground truth or predictions."""


@dataclass(frozen=True)
class ThresholdLadder:
    """Ordered (translation meters, rotation radians) threshold pairs."""

    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.pairs:
            raise ValueError("ladder must contain at least one threshold pair")
        for t_m, r_rad in self.pairs:
            if not (t_m > 0.0 and r_rad > 0.0):
                raise ValueError(f"thresholds must be positive, got ({t_m}, {r_rad})")


DEFAULT_LADDER = ThresholdLadder(pairs=(
    (0.5, math.radians(5.0)),
    (1.0, math.radians(10.0)),
    (2.0, math.radians(20.0)),
    (4.0, math.radians(40.0)),
))


def parse_ladder(data: object) -> ThresholdLadder:
    if not isinstance(data, list) or not data:
        raise ParseError(1, "", "ladder must be a non-empty JSON array")
    pairs = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise ParseError(1, f"[{i}]", "must be an object with trans_m and rot_deg")
        for key in ("trans_m", "rot_deg"):
            if key not in entry:
                raise ParseError(1, f"[{i}].{key}", "missing required key")
            value = entry[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParseError(1, f"[{i}].{key}", "must be a number")
            if not (float(value) > 0.0 and math.isfinite(float(value))):
                raise ValidationError(1, f"[{i}].{key}", f"must be positive and finite, got {value}")
        pairs.append((float(entry["trans_m"]), math.radians(float(entry["rot_deg"]))))
    return ThresholdLadder(pairs=tuple(pairs))


def load_ladder(path: str) -> ThresholdLadder:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, "", f"invalid JSON ({exc.msg})") from exc
    return parse_ladder(data)


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of one image at one threshold pair.

    ``pairs`` holds (prediction index, ground-truth index) in the order
    predictions were matched; ``trans_errors``/``rot_errors`` align with it.
    """

    pairs: tuple[tuple[int, int], ...]
    unmatched_pred: tuple[int, ...]
    unmatched_gt: tuple[int, ...]
    trans_errors: tuple[float, ...]
    rot_errors: tuple[float, ...]


def _distance(d: Detection, g: Annotation) -> float:
    a = d.pose.translation
    b = g.pose.translation
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


def match(preds: Sequence[Detection], gts: Sequence[Annotation],
          pair: tuple[float, float]) -> MatchResult:
    """Greedily match one image's detections to its ground truth."""
    t_m, r_rad = pair
    if not (t_m > 0.0 and r_rad > 0.0):
        raise ValueError(f"thresholds must be positive, got ({t_m}, {r_rad})")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    taken = [False] * len(gts)
    pairs: list[tuple[int, int]] = []
    trans_errors: list[float] = []
    rot_errors: list[float] = []
    for i in order:
        det = preds[i]
        best_j = -1
        best_dist = math.inf
        best_rot = 0.0
        for j, gt in enumerate(gts):
            if taken[j] or gt.class_id != det.class_id:
                continue
            dist = _distance(det, gt)
            if dist > t_m or dist >= best_dist:
                continue
            rot = angular_error(gt.pose.rotation, det.pose.rotation)
            if rot > r_rad:
                continue
            best_j, best_dist, best_rot = j, dist, rot
        if best_j >= 0:
            taken[best_j] = True
            pairs.append((i, best_j))
            trans_errors.append(best_dist)
            rot_errors.append(best_rot)
    matched_preds = {i for i, _ in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_pred=tuple(i for i in range(len(preds)) if i not in matched_preds),
        unmatched_gt=tuple(j for j in range(len(gts)) if not taken[j]),
        trans_errors=tuple(trans_errors),
        rot_errors=tuple(rot_errors),
    )


def average_precision(flags: Sequence[bool], num_gt: int) -> float:
    """All-points interpolated AP from a confidence-ranked TP/FP sequence.

    ``flags[k]`` is True when the detection at rank k is a true positive.
    With no ground truth the AP is 0.0 as soon as any prediction exists;
    the fully degenerate case (no flags, no ground truth) is defined as
    1.0 for callers that force such a class in.
    """
    if num_gt < 0:
        raise ValueError(f"num_gt must be >= 0, got {num_gt}")
    if num_gt == 0:
        return 0.0 if flags else 1.0
    if not flags:
        return 0.0
    tp = np.asarray(flags, dtype=np.float64)
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, tp.size + 1, dtype=np.float64)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # recall advances by exactly 1/num_gt at each TP rank, so the envelope
    # integral collapses to a sum over TP ranks
    return float(envelope[tp.astype(bool)].sum() / num_gt)


@dataclass
class EvaluationReport:
    """Per-class AP across the ladder plus scalar error statistics."""

    ladder: ThresholdLadder
    per_class_ap: dict[int, tuple[float, ...]]
    mean_ap: float
    mae_trans: float | None
    rot_error_mean: float | None
    rot_error_median: float | None
    precision: float | None
    recall: float | None
    tp: int
    fp: int
    fn: int

    def to_json_dict(self) -> dict:
        return {
            "mAP": self.mean_ap,
            "ladder": [{"trans_m": t, "rot_deg": math.degrees(r)} for t, r in self.ladder.pairs],
            "per_class": {
                str(c): {"ap_per_pair": list(aps), "mean_ap": _mean(aps)}
                for c, aps in sorted(self.per_class_ap.items())
            },
            "mae_trans": self.mae_trans,
            "angular_error": {"mean_rad": self.rot_error_mean, "median_rad": self.rot_error_median},
            "precision": self.precision,
            "recall": self.recall,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
        }

    def to_text(self) -> str:
        classes = sorted(self.per_class_ap)
        header = f"{'ladder pair':<20}" + "".join(f"{'AP[' + str(c) + ']':>12}" for c in classes)
        lines = [header, "-" * len(header)]
        for p, (t_m, r_rad) in enumerate(self.ladder.pairs):
            label = f"{t_m:.2f} m / {math.degrees(r_rad):4.1f} deg"
            row = f"{label:<20}" + "".join(f"{self.per_class_ap[c][p]:>12.3f}" for c in classes)
            lines.append(row)
        lines.append(f"{'class mean':<20}"
                     + "".join(f"{_mean(self.per_class_ap[c]):>12.3f}" for c in classes))
        lines.append("")
        lines.append(f"mAP        {self.mean_ap:.3f}")
        t_m, r_rad = self.ladder.pairs[-1]
        at = f"(at {t_m:.2f} m / {math.degrees(r_rad):.1f} deg)"
        lines.append(f"MAE_trans  {_fmt(self.mae_trans, ' m')} {at}")
        lines.append(f"rot error  mean {_fmt(self.rot_error_mean, ' rad')}, "
                     f"median {_fmt(self.rot_error_median, ' rad')} {at}")
        lines.append(f"precision  {_fmt(self.precision)}   recall {_fmt(self.recall)}   "
                     f"(TP {self.tp}  FP {self.fp}  FN {self.fn})")
        return "\n".join(lines) + "\n"


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values))


def _fmt(value: float | None, suffix: str = "") -> str:
    return "n/a" if value is None else f"{value:.6f}{suffix}"


def translation_mae(matches: Iterable[MatchResult]) -> float:
    """Mean Euclidean translation error over all matched pairs."""
    errors = [e for m in matches for e in m.trans_errors]
    if not errors:
        raise NoMatchesError("translation MAE is undefined without matches")
    return float(sum(errors) / len(errors))


def rotation_error_stats(matches: Iterable[MatchResult]) -> tuple[float, float]:
    """(mean, median) angular error in radians over all matched pairs."""
    errors = [e for m in matches for e in m.rot_errors]
    if not errors:
        raise NoMatchesError("rotation error statistics are undefined without matches")
    return float(sum(errors) / len(errors)), float(statistics.median(errors))


def precision_recall(matches: Iterable[MatchResult]) -> tuple[float | None, float | None]:
    """(precision, recall); a side is None when its denominator is zero."""
    tp = fp = fn = 0
    for m in matches:
        tp += len(m.pairs)
        fp += len(m.unmatched_pred)
        fn += len(m.unmatched_gt)
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return precision, recall


def _index_by_image(records: Sequence[ImageRecord], what: str) -> dict[str, ImageRecord]:
    out: dict[str, ImageRecord] = {}
    for record in records:
        if record.image_id in out:
            raise ValueError(f"duplicate image_id {record.image_id!r} in {what}")
        out[record.image_id] = record
    return out


def mean_average_precision(
    pred_records: Sequence[ImageRecord],
    gt_records: Sequence[ImageRecord],
    ladder: ThresholdLadder = DEFAULT_LADDER,
    *,
    jobs: int = 1,
) -> tuple[float, EvaluationReport]:
    """Evaluate predictions against ground truth over a threshold ladder.

    Returns ``(mAP, report)``. Images are aligned by ``image_id``; images
    present on only one side contribute misses or false positives. Classes
    absent from both sides are excluded from the mean; if no class appears
    at all, NoClassesError is raised. Matching is independent per image,
    so with ``jobs > 1`` images are matched on a worker pool; results are
    merged in image order and are identical at any parallelism.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    pred_by_id = _index_by_image(pred_records, "predictions")
    gt_by_id = _index_by_image(gt_records, "ground truth")
    image_ids = [r.image_id for r in gt_records]
    image_ids += [r.image_id for r in pred_records if r.image_id not in gt_by_id]

    empty: tuple = ()
    tasks = [(pred_by_id[i].items if i in pred_by_id else empty,
              gt_by_id[i].items if i in gt_by_id else empty) for i in image_ids]

    def run(task: tuple) -> list[MatchResult]:
        dets, anns = task
        return [match(dets, anns, pair) for pair in ladder.pairs]

    if jobs == 1 or len(tasks) <= 1:
        per_image = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_image = list(pool.map(run, tasks))

    classes = sorted({a.class_id for _, anns in tasks for a in anns}
                     | {d.class_id for dets, _ in tasks for d in dets})
    if not classes:
        raise NoClassesError("no class appears in ground truth or predictions")
    gt_count = {c: 0 for c in classes}
    for _, anns in tasks:
        for a in anns:
            gt_count[a.class_id] += 1

    per_class_ap: dict[int, tuple[float, ...]] = {}
    for c in classes:
        aps = []
        for p in range(len(ladder.pairs)):
            rows = []  # (confidence, image seq, det index, is TP)
            for seq, (dets, _) in enumerate(tasks):
                matched = {i for i, _ in per_image[seq][p].pairs}
                for di, det in enumerate(dets):
                    if det.class_id == c:
                        rows.append((det.confidence, seq, di, di in matched))
            rows.sort(key=lambda r: (-r[0], r[1], r[2]))
            aps.append(average_precision([r[3] for r in rows], gt_count[c]))
        per_class_ap[c] = tuple(aps)

    mean_ap = _mean([_mean(aps) for aps in per_class_ap.values()])

    last = [result[-1] for result in per_image]
    try:
        mae: float | None = translation_mae(last)
        rot_mean, rot_median = rotation_error_stats(last)
    except NoMatchesError:
        mae = rot_mean = rot_median = None
    precision, recall = precision_recall(last)
    tp = sum(len(m.pairs) for m in last)
    fp = sum(len(m.unmatched_pred) for m in last)
    fn = sum(len(m.unmatched_gt) for m in last)

    report = EvaluationReport(
        ladder=ladder,
        per_class_ap=per_class_ap,
        mean_ap=mean_ap,
        mae_trans=mae,
        rot_error_mean=rot_mean,
        rot_error_median=rot_median,
        precision=precision,
        recall=recall,
        tp=tp, fp=fp, fn=fn,
    )
    return mean_ap, report
