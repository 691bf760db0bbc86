"""Detection and annotation records plus their file formats.

Canonical interchange is JSON Lines, one image per line:

- predictions: ``{"image_id": str, "detections": [<item>, ...]}``
- ground truth: ``{"image_id": str, "annotations": [<item>, ...]}``
- ignore regions: ``{"image_id": str, "rects": [[x1, y1, x2, y2], ...]}``

Each item carries ``class_id`` (int), ``translation`` ``[x, y, z]`` in
meters, a rotation as exactly one of ``quaternion`` ``[w, x, y, z]`` or
``euler`` ``[roll, pitch, yaw]`` (radians), an optional ``bbox``
``[x1, y1, x2, y2]`` in pixels, and for detections a ``confidence`` in
[0, 1]. Quaternions are normalized at load time; serialization always
writes the stored quaternion, at full round-trip precision, so
``parse(serialize(records))`` reproduces the records field-exactly.

A single-class CSV compatibility reader is also provided: rows are
``image_id, S`` where ``S`` is a space-separated sequence of repeating
``pitch yaw roll x y z confidence`` groups; every group becomes a
Detection with ``class_id`` 0 and no bbox. There is no CSV writer; output
is always canonical JSONL.

Parse failures raise ParseError (malformed line or schema) or
ValidationError (well-formed but violating an invariant); both name the
1-based line number and the offending field path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Union

from .geometry import (
    BBox2D,
    CameraIntrinsics,
    EulerAngles,
    Pose,
    Quaternion,
    Translation,
    ZeroNormError,
    quat_from_euler,
    quat_normalize,
)


class ParseError(ValueError):
    """Input text that does not decode into the expected shape."""

    def __init__(self, line: int, path: str, message: str):
        super().__init__(f"line {line}: {path}: {message}" if path else f"line {line}: {message}")
        self.line = line
        self.path = path


class ValidationError(ValueError):
    """Decoded value that violates a record invariant."""

    def __init__(self, line: int, path: str, message: str):
        super().__init__(f"line {line}: {path}: {message}")
        self.line = line
        self.path = path


@dataclass(frozen=True)
class Detection:
    class_id: int
    confidence: float
    bbox: BBox2D | None
    pose: Pose

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be within [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class Annotation:
    class_id: int
    pose: Pose
    bbox: BBox2D | None = None

    def __post_init__(self) -> None:
        if not self.pose.translation.z > 0.0:
            raise ValueError(f"annotation depth must be positive, got z={self.pose.translation.z}")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    items: tuple


@dataclass(frozen=True)
class IgnoreRegions:
    image_id: str
    rects: tuple[BBox2D, ...]


Lines = Union[IO[str], Iterable[str]]


def _iter_lines(stream: Lines) -> Iterator[tuple[int, str]]:
    for number, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if line.strip():
            yield number, line


def _decode_line(number: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(number, "", f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ParseError(number, "", f"expected a JSON object, got {type(obj).__name__}")
    return obj


def _get_image_id(number: int, obj: dict, seen: set[str]) -> str:
    image_id = obj.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ParseError(number, "image_id", "must be a non-empty string")
    if image_id in seen:
        raise ParseError(number, "image_id", f"duplicate image_id {image_id!r}")
    seen.add(image_id)
    return image_id


def _number(number: int, value: object, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(number, path, f"must be a number, got {type(value).__name__}")
    out = float(value)
    if not math.isfinite(out):
        raise ValidationError(number, path, f"must be finite, got {out}")
    return out


def _number_list(number: int, obj: dict, key: str, count: int, path: str) -> list[float]:
    value = obj.get(key)
    if not isinstance(value, list) or len(value) != count:
        raise ParseError(number, f"{path}.{key}", f"must be a list of {count} numbers")
    return [_number(number, v, f"{path}.{key}[{i}]") for i, v in enumerate(value)]


def _parse_class_id(number: int, obj: dict, path: str) -> int:
    value = obj.get("class_id")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(number, f"{path}.class_id", "must be an integer")
    if value < 0:
        raise ValidationError(number, f"{path}.class_id", f"must be >= 0, got {value}")
    return value


def _parse_rotation(number: int, obj: dict, path: str) -> Quaternion:
    has_quat = "quaternion" in obj
    has_euler = "euler" in obj
    if has_quat == has_euler:
        raise ParseError(number, path, "exactly one of 'quaternion' or 'euler' is required")
    if has_quat:
        w, x, y, z = _number_list(number, obj, "quaternion", 4, path)
        try:
            return quat_normalize(Quaternion(w, x, y, z))
        except ZeroNormError as exc:
            raise ValidationError(number, f"{path}.quaternion", str(exc)) from exc
    roll, pitch, yaw = _number_list(number, obj, "euler", 3, path)
    return quat_from_euler(EulerAngles(roll=roll, pitch=pitch, yaw=yaw))


def _parse_translation(number: int, obj: dict, path: str, require_front: bool) -> Translation:
    x, y, z = _number_list(number, obj, "translation", 3, path)
    if require_front and z <= 0.0:
        raise ValidationError(number, f"{path}.translation.z", f"must be > 0, got {z}")
    return Translation(x, y, z)


def _parse_bbox(number: int, obj: dict, path: str) -> BBox2D | None:
    if "bbox" not in obj or obj["bbox"] is None:
        return None
    x1, y1, x2, y2 = _number_list(number, obj, "bbox", 4, path)
    try:
        return BBox2D(x1, y1, x2, y2)
    except ValueError as exc:
        raise ValidationError(number, f"{path}.bbox", str(exc)) from exc


def _parse_detection(number: int, obj: dict, path: str) -> Detection:
    if not isinstance(obj, dict):
        raise ParseError(number, path, f"expected an object, got {type(obj).__name__}")
    class_id = _parse_class_id(number, obj, path)
    confidence = _number(number, obj.get("confidence"), f"{path}.confidence")
    if not (0.0 <= confidence <= 1.0):
        raise ValidationError(number, f"{path}.confidence", f"must be within [0, 1], got {confidence}")
    bbox = _parse_bbox(number, obj, path)
    rotation = _parse_rotation(number, obj, path)
    translation = _parse_translation(number, obj, path, require_front=True)
    return Detection(class_id=class_id, confidence=confidence, bbox=bbox,
                     pose=Pose(rotation, translation))


def _parse_annotation(number: int, obj: dict, path: str) -> Annotation:
    if not isinstance(obj, dict):
        raise ParseError(number, path, f"expected an object, got {type(obj).__name__}")
    class_id = _parse_class_id(number, obj, path)
    bbox = _parse_bbox(number, obj, path)
    rotation = _parse_rotation(number, obj, path)
    translation = _parse_translation(number, obj, path, require_front=True)
    return Annotation(class_id=class_id, pose=Pose(rotation, translation), bbox=bbox)


def parse_predictions(stream: Lines) -> list[ImageRecord]:
    """Read prediction JSONL into one ImageRecord of Detections per image."""
    records: list[ImageRecord] = []
    seen: set[str] = set()
    for number, line in _iter_lines(stream):
        obj = _decode_line(number, line)
        image_id = _get_image_id(number, obj, seen)
        items = obj.get("detections")
        if not isinstance(items, list):
            raise ParseError(number, "detections", "must be a list")
        dets = tuple(_parse_detection(number, item, f"detections[{i}]")
                     for i, item in enumerate(items))
        records.append(ImageRecord(image_id=image_id, items=dets))
    return records


def parse_ground_truth(stream: Lines) -> list[ImageRecord]:
    """Read ground-truth JSONL into one ImageRecord of Annotations per image."""
    records: list[ImageRecord] = []
    seen: set[str] = set()
    for number, line in _iter_lines(stream):
        obj = _decode_line(number, line)
        image_id = _get_image_id(number, obj, seen)
        items = obj.get("annotations")
        if not isinstance(items, list):
            raise ParseError(number, "annotations", "must be a list")
        anns = tuple(_parse_annotation(number, item, f"annotations[{i}]")
                     for i, item in enumerate(items))
        records.append(ImageRecord(image_id=image_id, items=anns))
    return records


def parse_ignore(stream: Lines) -> list[IgnoreRegions]:
    """Read ignore-region JSONL (one set of rectangles per image)."""
    out: list[IgnoreRegions] = []
    seen: set[str] = set()
    for number, line in _iter_lines(stream):
        obj = _decode_line(number, line)
        image_id = _get_image_id(number, obj, seen)
        rects_raw = obj.get("rects")
        if not isinstance(rects_raw, list):
            raise ParseError(number, "rects", "must be a list")
        rects = []
        for i, rect in enumerate(rects_raw):
            if not isinstance(rect, list) or len(rect) != 4:
                raise ParseError(number, f"rects[{i}]", "must be a list of 4 numbers")
            vals = [_number(number, v, f"rects[{i}][{j}]") for j, v in enumerate(rect)]
            try:
                rects.append(BBox2D(*vals))
            except ValueError as exc:
                raise ValidationError(number, f"rects[{i}]", str(exc)) from exc
        out.append(IgnoreRegions(image_id=image_id, rects=tuple(rects)))
    return out


def parse_csv_compat(stream: Lines) -> list[ImageRecord]:
    """Read single-class CSV rows ``image_id, pitch yaw roll x y z confidence ...``."""
    records: list[ImageRecord] = []
    seen: set[str] = set()
    for number, line in _iter_lines(stream):
        if "," not in line:
            raise ParseError(number, "", "expected 'image_id, prediction string'")
        image_id, _, body = line.partition(",")
        image_id = image_id.strip()
        if not image_id:
            raise ParseError(number, "image_id", "must be a non-empty string")
        if image_id in seen:
            raise ParseError(number, "image_id", f"duplicate image_id {image_id!r}")
        seen.add(image_id)
        tokens = body.split()
        if len(tokens) % 7 != 0:
            raise ParseError(number, "", f"token count {len(tokens)} is not a multiple of 7")
        dets = []
        for g in range(len(tokens) // 7):
            path = f"group[{g}]"
            vals = []
            for offset, name in enumerate(("pitch", "yaw", "roll", "x", "y", "z", "confidence")):
                token = tokens[g * 7 + offset]
                try:
                    value = float(token)
                except ValueError as exc:
                    raise ParseError(number, f"{path}.{name}", f"not a number: {token!r}") from exc
                if not math.isfinite(value):
                    raise ValidationError(number, f"{path}.{name}", f"must be finite, got {value}")
                vals.append(value)
            pitch, yaw, roll, x, y, z, confidence = vals
            if not (0.0 <= confidence <= 1.0):
                raise ValidationError(number, f"{path}.confidence",
                                      f"must be within [0, 1], got {confidence}")
            if z <= 0.0:
                raise ValidationError(number, f"{path}.z", f"must be > 0, got {z}")
            rotation = quat_from_euler(EulerAngles(roll=roll, pitch=pitch, yaw=yaw))
            dets.append(Detection(class_id=0, confidence=confidence, bbox=None,
                                  pose=Pose(rotation, Translation(x, y, z))))
        records.append(ImageRecord(image_id=image_id, items=tuple(dets)))
    return records


def _item_dict(item: Detection | Annotation) -> dict:
    out: dict = {"class_id": item.class_id}
    if isinstance(item, Detection):
        out["confidence"] = item.confidence
    if item.bbox is not None:
        out["bbox"] = [item.bbox.x1, item.bbox.y1, item.bbox.x2, item.bbox.y2]
    q = item.pose.rotation
    t = item.pose.translation
    out["quaternion"] = [q.w, q.x, q.y, q.z]
    out["translation"] = [t.x, t.y, t.z]
    return out


def serialize_predictions(records: Iterable[ImageRecord], stream: IO[str]) -> None:
    """Write prediction records as canonical JSONL (inverse of parse_predictions)."""
    for record in records:
        obj = {"image_id": record.image_id,
               "detections": [_item_dict(d) for d in record.items]}
        stream.write(json.dumps(obj) + "\n")


def serialize_ground_truth(records: Iterable[ImageRecord], stream: IO[str]) -> None:
    """Write ground-truth records as canonical JSONL (inverse of parse_ground_truth)."""
    for record in records:
        obj = {"image_id": record.image_id,
               "annotations": [_item_dict(a) for a in record.items]}
        stream.write(json.dumps(obj) + "\n")


def serialize_ignore(regions: Iterable[IgnoreRegions], stream: IO[str]) -> None:
    for region in regions:
        obj = {"image_id": region.image_id,
               "rects": [[r.x1, r.y1, r.x2, r.y2] for r in region.rects]}
        stream.write(json.dumps(obj) + "\n")


def load_predictions(path: str) -> list[ImageRecord]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_predictions(handle)


def load_ground_truth(path: str) -> list[ImageRecord]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_ground_truth(handle)


def load_ignore(path: str) -> list[IgnoreRegions]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_ignore(handle)


def load_csv_compat(path: str) -> list[ImageRecord]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_csv_compat(handle)


def save_predictions(records: Iterable[ImageRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        serialize_predictions(records, handle)


def save_ground_truth(records: Iterable[ImageRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        serialize_ground_truth(records, handle)


def save_ignore(regions: Iterable[IgnoreRegions], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        serialize_ignore(regions, handle)


def load_camera(path: str) -> CameraIntrinsics:
    """Read pinhole intrinsics from a JSON file with keys fx, fy, cx, cy."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, "", f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ParseError(1, "", f"expected a JSON object, got {type(obj).__name__}")
    values = {}
    for key in ("fx", "fy", "cx", "cy"):
        if key not in obj:
            raise ParseError(1, key, "missing required key")
        values[key] = _number(1, obj[key], key)
    try:
        return CameraIntrinsics(**values)
    except ValueError as exc:
        raise ValidationError(1, "fx/fy", str(exc)) from exc


def save_camera(k: CameraIntrinsics, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy}, handle)
        handle.write("\n")
