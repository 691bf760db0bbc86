"""Shared factories for building small scenes in tests."""

from __future__ import annotations

from dataclasses import replace

from pose6d import (
    Annotation,
    BBox2D,
    Detection,
    ImageRecord,
    Pose,
    Quaternion,
    Translation,
)

IDENTITY = Quaternion(1.0, 0.0, 0.0, 0.0)


def det(x: float, y: float, z: float, *, confidence: float = 0.9, class_id: int = 0,
        quat: Quaternion = IDENTITY, bbox: BBox2D | None = None) -> Detection:
    return Detection(class_id=class_id, confidence=confidence, bbox=bbox,
                     pose=Pose(quat, Translation(x, y, z)))


def ann(x: float, y: float, z: float, *, class_id: int = 0,
        quat: Quaternion = IDENTITY, bbox: BBox2D | None = None) -> Annotation:
    return Annotation(class_id=class_id, pose=Pose(quat, Translation(x, y, z)), bbox=bbox)


def image(image_id: str, *items) -> ImageRecord:
    return ImageRecord(image_id=image_id, items=tuple(items))


def as_detection(a: Annotation, confidence: float) -> Detection:
    """Perfect detection carrying an annotation's pose and box."""
    return Detection(class_id=a.class_id, confidence=confidence, bbox=a.bbox, pose=a.pose)


def complementary_models(gt_records, n_models: int, confidence: float = 0.9):
    """Perfect single-model copies that each miss a disjoint third of objects.

    Object g (in global order) is missing from model ``g % n_models`` only,
    so the union of any two models already covers everything.
    """
    models = []
    for k in range(n_models):
        records = []
        g = 0
        for record in gt_records:
            dets = []
            for a in record.items:
                if g % n_models != k:
                    dets.append(as_detection(a, confidence))
                g += 1
            records.append(ImageRecord(record.image_id, tuple(dets)))
        models.append(records)
    return models


def with_extra(records, image_index: int, *extra):
    """Copy of ``records`` with detections appended to one image."""
    out = list(records)
    out[image_index] = replace(out[image_index],
                               items=out[image_index].items + tuple(extra))
    return out
