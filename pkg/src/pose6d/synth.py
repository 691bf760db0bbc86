"""Synthetic scenes with a brute-force evaluation oracle.

Scenes are deterministic functions of a seed. Randomness comes from the
counter-based Philox generator; every image gets its own stream derived
via ``numpy.random.SeedSequence(seed, spawn_key=(purpose, image_index))``
(purpose 0: generation, 1: perturbation, 2: lateral corruption), so scene
content does not depend on iteration order and re-running with one seed
reproduces files byte for byte.

Objects are car-sized: every ground-truth box is the projected footprint
of a fixed 4.5 x 1.8 x 1.5 m extent, centered on the projected object
center (see ``geometry.extent_bbox``). Pose jitter uses a half-normal
magnitude (``|N(0, sigma)|``) along an isotropic random direction, for
translations in meters and rotations in radians about a random axis, so
the expected translation error at sigma is ``sigma * sqrt(2 / pi)``.

``oracle_map`` re-derives mAP by exhaustive quadratic enumeration in pure
Python. Apart from shared geometry primitives it is written independently
of the metrics module, as a cross-check for small evaluations (at most 20
detections; beyond that it refuses rather than crawl).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import (
    CameraIntrinsics,
    Pose,
    Quaternion,
    Translation,
    angular_error,
    backproject,
    extent_bbox,
    quat_multiply,
    quat_normalize,
)
from .metrics import DEFAULT_LADDER, ThresholdLadder
from .records import Annotation, Detection, ImageRecord

CAR_EXTENT = (4.5, 1.8, 1.5)  # length, width, height in meters

MAX_ORACLE_DETECTIONS = 20

_DEFAULT_DEPTH_RANGE = (8.0, 50.0)


class TooLargeError(ValueError):
    """Input exceeds the oracle's exhaustive-regime size cap."""


@dataclass(frozen=True)
class NoiseSpec:
    """Perturbation model applied to ground truth to fake detector output."""

    translation_sigma: float = 0.0
    rotation_sigma: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    tp_confidence: tuple[float, float] = (1.0, 1.0)
    fp_confidence: tuple[float, float] = (0.05, 0.5)

    def __post_init__(self) -> None:
        if self.translation_sigma < 0.0 or self.rotation_sigma < 0.0:
            raise ValueError("noise sigmas must be >= 0")
        for name, rate in (("miss_rate", self.miss_rate),
                           ("false_positive_rate", self.false_positive_rate)):
            if not (0.0 <= rate <= 1.0):
                raise ValueError(f"{name} must be within [0, 1], got {rate}")
        for name, (lo, hi) in (("tp_confidence", self.tp_confidence),
                               ("fp_confidence", self.fp_confidence)):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic multi-image scene."""

    seed: int = 0
    n_images: int = 5
    objects_per_image: tuple[int, int] = (1, 4)
    depth_range: tuple[float, float] = _DEFAULT_DEPTH_RANGE
    n_classes: int = 1
    camera: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0))
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self) -> None:
        if self.n_images < 0:
            raise ValueError(f"n_images must be >= 0, got {self.n_images}")
        lo, hi = self.objects_per_image
        if not (0 <= lo <= hi):
            raise ValueError(f"objects_per_image must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
        zlo, zhi = self.depth_range
        if not (0.0 < zlo <= zhi):
            raise ValueError(f"depth_range must satisfy 0 < lo <= hi, got ({zlo}, {zhi})")
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be >= 1, got {self.n_classes}")


def _stream(seed: int, purpose: int, image_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(purpose, image_index))
    return np.random.Generator(np.random.Philox(seq))


def _unit_vector(rng: np.random.Generator, size: int) -> np.ndarray:
    while True:
        v = rng.normal(size=size)
        n = float(np.linalg.norm(v))
        if n > 1e-12:
            return v / n


def _random_quat(rng: np.random.Generator) -> Quaternion:
    w, x, y, z = _unit_vector(rng, 4)
    return quat_normalize(Quaternion(float(w), float(x), float(y), float(z)))


def _sample_object(rng: np.random.Generator, spec_camera: CameraIntrinsics,
                   depth_range: tuple[float, float], n_classes: int) -> tuple[int, Pose]:
    width = 2.0 * spec_camera.cx
    height = 2.0 * spec_camera.cy
    z = float(rng.uniform(depth_range[0], depth_range[1]))
    u = float(rng.uniform(0.1 * width, 0.9 * width))
    v = float(rng.uniform(0.1 * height, 0.9 * height))
    t = backproject(u, v, z, spec_camera)
    class_id = int(rng.integers(0, n_classes))
    return class_id, Pose(_random_quat(rng), t)


def generate_scene(spec: SceneSpec) -> tuple[list[ImageRecord], CameraIntrinsics]:
    """Generate ground-truth records (and the camera) for a scene spec."""
    records = []
    for i in range(spec.n_images):
        rng = _stream(spec.seed, 0, i)
        count = int(rng.integers(spec.objects_per_image[0], spec.objects_per_image[1] + 1))
        anns = []
        for _ in range(count):
            class_id, pose = _sample_object(rng, spec.camera, spec.depth_range, spec.n_classes)
            bbox = extent_bbox(pose.translation, CAR_EXTENT[0], CAR_EXTENT[2], spec.camera)
            anns.append(Annotation(class_id=class_id, pose=pose, bbox=bbox))
        records.append(ImageRecord(image_id=f"img_{i:04d}", items=tuple(anns)))
    return records, spec.camera


def _jitter_translation(rng: np.random.Generator, t: Translation, sigma: float) -> Translation:
    if sigma == 0.0:
        return t
    magnitude = abs(float(rng.normal(0.0, sigma)))
    d = _unit_vector(rng, 3)
    return Translation(t.x + magnitude * float(d[0]),
                       t.y + magnitude * float(d[1]),
                       t.z + magnitude * float(d[2]))


def _jitter_rotation(rng: np.random.Generator, q: Quaternion, sigma: float) -> Quaternion:
    if sigma == 0.0:
        return q
    angle = abs(float(rng.normal(0.0, sigma)))
    axis = _unit_vector(rng, 3)
    half = 0.5 * angle
    s = math.sin(half)
    dq = Quaternion(math.cos(half), s * float(axis[0]), s * float(axis[1]), s * float(axis[2]))
    return quat_normalize(quat_multiply(dq, q))


def perturb(gt_records: Sequence[ImageRecord], noise: NoiseSpec, seed: int,
            camera: CameraIntrinsics) -> list[ImageRecord]:
    """Derive detector-like predictions from ground truth under a noise model.

    Surviving objects keep their ground-truth box (2D detectors are treated
    as accurate; the pose head is what gets noisy) and appear in annotation
    order. False positives are appended after them, sampled like scene
    objects within the depth span of the input (class drawn from the
    classes present). With all-zero noise the output equals the ground
    truth with confidence 1.
    """
    all_items = [a for r in gt_records for a in r.items]
    classes = sorted({a.class_id for a in all_items})
    if all_items:
        depths = [a.pose.translation.z for a in all_items]
        depth_range = (min(depths), max(max(depths), min(depths) + 1e-6))
    else:
        depth_range = _DEFAULT_DEPTH_RANGE
    out = []
    for i, record in enumerate(gt_records):
        rng = _stream(seed, 1, i)
        dets = []
        for ann in record.items:
            if noise.miss_rate > 0.0 and float(rng.random()) < noise.miss_rate:
                continue
            t = _jitter_translation(rng, ann.pose.translation, noise.translation_sigma)
            q = _jitter_rotation(rng, ann.pose.rotation, noise.rotation_sigma)
            conf = float(rng.uniform(noise.tp_confidence[0], noise.tp_confidence[1]))
            dets.append(Detection(class_id=ann.class_id, confidence=conf,
                                  bbox=ann.bbox, pose=Pose(q, t)))
        if noise.false_positive_rate > 0.0 and record.items:
            n_fp = int(rng.binomial(len(record.items), noise.false_positive_rate))
            for _ in range(n_fp):
                _, pose = _sample_object(rng, camera, depth_range, 1)
                class_id = int(classes[int(rng.integers(0, len(classes)))]) if classes else 0
                conf = float(rng.uniform(noise.fp_confidence[0], noise.fp_confidence[1]))
                bbox = extent_bbox(pose.translation, CAR_EXTENT[0], CAR_EXTENT[2], camera)
                dets.append(Detection(class_id=class_id, confidence=conf, bbox=bbox, pose=pose))
        out.append(ImageRecord(image_id=record.image_id, items=tuple(dets)))
    return out


def corrupt_xy(pred_records: Sequence[ImageRecord], seed: int,
               magnitude_range: tuple[float, float] = (0.6, 1.5)) -> list[ImageRecord]:
    """Push every detection's (x, y) sideways while keeping z and the box.

    This manufactures the failure mode ``recover_xy`` repairs: lateral
    position off by ``magnitude_range`` meters, depth and 2D box intact.
    """
    lo, hi = magnitude_range
    if not (0.0 <= lo <= hi):
        raise ValueError(f"magnitude_range must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
    out = []
    for i, record in enumerate(pred_records):
        rng = _stream(seed, 2, i)
        dets = []
        for det in record.items:
            theta = float(rng.uniform(0.0, math.tau))
            magnitude = float(rng.uniform(lo, hi))
            t = det.pose.translation
            moved = Translation(t.x + magnitude * math.cos(theta),
                                t.y + magnitude * math.sin(theta), t.z)
            dets.append(replace(det, pose=Pose(det.pose.rotation, moved)))
        out.append(ImageRecord(image_id=record.image_id, items=tuple(dets)))
    return out


def oracle_map(pred_records: Sequence[ImageRecord], gt_records: Sequence[ImageRecord],
               ladder: ThresholdLadder = DEFAULT_LADDER) -> float:
    """Brute-force mAP for small scenes, written independently of metrics.

    Builds the full ranked TP/FP table per class and threshold pair with
    plain quadratic loops, computes precision and recall at every rank,
    and integrates the running precision envelope segment by segment.
    Refuses more than MAX_ORACLE_DETECTIONS total detections.
    """
    total = sum(len(r.items) for r in pred_records)
    if total > MAX_ORACLE_DETECTIONS:
        raise TooLargeError(f"{total} detections exceed the oracle cap of {MAX_ORACLE_DETECTIONS}")

    gt_ids = [r.image_id for r in gt_records]
    gt_map = {r.image_id: r.items for r in gt_records}
    pred_map = {r.image_id: r.items for r in pred_records}
    image_ids = gt_ids + [r.image_id for r in pred_records if r.image_id not in gt_map]
    images = [(pred_map.get(i, ()), gt_map.get(i, ())) for i in image_ids]

    classes = set()
    for dets, anns in images:
        classes.update(d.class_id for d in dets)
        classes.update(a.class_id for a in anns)
    if not classes:
        raise ValueError("no class appears in ground truth or predictions")

    class_means = []
    for c in sorted(classes):
        num_gt = sum(1 for _, anns in images for a in anns if a.class_id == c)
        pair_aps = []
        for t_m, r_rad in ladder.pairs:
            rows = []  # (confidence, image seq, det index, is TP)
            for seq, (dets, anns) in enumerate(images):
                cdets = [(i, d) for i, d in enumerate(dets) if d.class_id == c]
                cgts = [a for a in anns if a.class_id == c]
                used = [False] * len(cgts)
                for i, det in sorted(cdets, key=lambda e: (-e[1].confidence, e[0])):
                    dt = det.pose.translation
                    best = -1
                    best_dist = None
                    for j, gt in enumerate(cgts):
                        if used[j]:
                            continue
                        gt_t = gt.pose.translation
                        dist = math.sqrt((dt.x - gt_t.x) ** 2 + (dt.y - gt_t.y) ** 2
                                         + (dt.z - gt_t.z) ** 2)
                        if dist > t_m:
                            continue
                        if best_dist is not None and dist >= best_dist:
                            continue
                        if angular_error(gt.pose.rotation, det.pose.rotation) > r_rad:
                            continue
                        best = j
                        best_dist = dist
                    if best >= 0:
                        used[best] = True
                    rows.append((det.confidence, seq, i, best >= 0))
            rows.sort(key=lambda r: (-r[0], r[1], r[2]))
            if num_gt == 0:
                pair_aps.append(0.0 if rows else 1.0)
                continue
            if not rows:
                pair_aps.append(0.0)
                continue
            tp_cum = 0
            precisions = []
            recalls = []
            for rank, row in enumerate(rows, start=1):
                if row[3]:
                    tp_cum += 1
                precisions.append(tp_cum / rank)
                recalls.append(tp_cum / num_gt)
            envelope = precisions[:]
            for k in range(len(envelope) - 2, -1, -1):
                envelope[k] = max(envelope[k], envelope[k + 1])
            ap = 0.0
            previous_recall = 0.0
            for k in range(len(rows)):
                ap += (recalls[k] - previous_recall) * envelope[k]
                previous_recall = recalls[k]
            pair_aps.append(ap)
        class_means.append(sum(pair_aps) / len(pair_aps))
    return sum(class_means) / len(class_means)
