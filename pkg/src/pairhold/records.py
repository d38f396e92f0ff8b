"""Per-image detection records: data model, JSON-lines I/O and validation.

A dataset file holds one JSON object per line::

    {"image_id": str, "width": num, "height": num,
     "humans": [{"bbox": [x1, y1, x2, y2], "score": num}],
     "firearms": [{"bbox": [...], "class": "gun" | "rifle", "score": num}],
     "poses": [{"human_index": int | null, "body": [kp], "left_hand": [kp], "right_hand": [kp]}],
     "gt_pairs": [{"human_bbox": [...], "firearm_bbox": [...], "firearm_class": str, "carried": 0 | 1}]}

where ``kp`` is ``{"name": str, "x": num, "y": num, "confidence": num}``.

A prediction file holds one ``{"image_id", "human_bbox", "firearm_bbox",
"firearm_class", "score"}`` object per line. Floats are written rounded to
six decimal places so that a load/save cycle is byte-stable.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional

from .geometry import Box, Keypoint

log = logging.getLogger(__name__)

FIREARM_CLASSES = ("gun", "rifle")
FLOAT_DECIMALS = 6


class RecordError(ValueError):
    """A single record could not be parsed; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class DatasetError(Exception):
    """Raised by :func:`load_dataset` with every problem found in the file."""

    def __init__(self, errors: list["Violation"]):
        self.errors = errors
        head = "; ".join(str(e) for e in errors[:5])
        more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
        super().__init__(f"{len(errors)} dataset error(s): {head}{more}")


@dataclass(frozen=True)
class Violation:
    path: str
    kind: str  # "range" | "geometry" | "clip" | "index" | "schema" | "duplicate"
    message: str
    line: Optional[int] = None

    @property
    def is_warning(self) -> bool:
        return self.kind == "clip"

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.path}: {self.message} [{self.kind}]"

    def to_dict(self) -> dict:
        return {"line": self.line, "path": self.path, "kind": self.kind, "message": self.message}


@dataclass(frozen=True)
class HumanDetection:
    bbox: Box
    score: float


@dataclass(frozen=True)
class FirearmDetection:
    bbox: Box
    cls: str
    score: float


@dataclass(frozen=True)
class PoseEstimate:
    human_index: Optional[int] = None
    body: tuple[Keypoint, ...] = ()
    left_hand: tuple[Keypoint, ...] = ()
    right_hand: tuple[Keypoint, ...] = ()

    @property
    def hands(self) -> tuple[Keypoint, ...]:
        return self.left_hand + self.right_hand


@dataclass(frozen=True)
class GroundTruthPair:
    human_bbox: Box
    firearm_bbox: Box
    firearm_class: str
    carried: int


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: float
    height: float
    humans: tuple[HumanDetection, ...] = ()
    firearms: tuple[FirearmDetection, ...] = ()
    poses: tuple[PoseEstimate, ...] = ()
    gt_pairs: tuple[GroundTruthPair, ...] = ()


@dataclass(frozen=True)
class PairPrediction:
    image_id: str
    human_bbox: Box
    firearm_bbox: Box
    firearm_class: str
    score: float


# ---------------------------------------------------------------- parsing

def _get(obj: dict, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise RecordError(path, "expected an object")
    if key not in obj:
        raise RecordError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _num(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RecordError(path, f"expected a number, got {value!r}")
    return float(value)


def _list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise RecordError(path, f"expected a list, got {type(value).__name__}")
    return value


def _box(value: Any, path: str) -> Box:
    items = _list(value, path)
    if len(items) != 4:
        raise RecordError(path, f"expected 4 coordinates, got {len(items)}")
    return Box(*(_num(v, f"{path}[{i}]") for i, v in enumerate(items)))


def _cls(value: Any, path: str) -> str:
    if value not in FIREARM_CLASSES:
        raise RecordError(path, f"unknown firearm class {value!r}")
    return value


def _keypoints(value: Any, path: str) -> tuple[Keypoint, ...]:
    out = []
    for i, kp in enumerate(_list(value, path)):
        p = f"{path}[{i}]"
        name = _get(kp, "name", p)
        if not isinstance(name, str):
            raise RecordError(f"{p}.name", "expected a string")
        out.append(Keypoint(
            name,
            _num(_get(kp, "x", p), f"{p}.x"),
            _num(_get(kp, "y", p), f"{p}.y"),
            _num(_get(kp, "confidence", p), f"{p}.confidence"),
        ))
    return tuple(out)


def record_from_dict(obj: Any) -> ImageRecord:
    """Parse one decoded JSON object. Raises :class:`RecordError` on schema problems."""
    if not isinstance(obj, dict):
        raise RecordError("", "record must be a JSON object")
    image_id = _get(obj, "image_id", "")
    if not isinstance(image_id, str):
        raise RecordError("image_id", "expected a string")
    humans = tuple(
        HumanDetection(_box(_get(h, "bbox", f"humans[{i}]"), f"humans[{i}].bbox"),
                       _num(_get(h, "score", f"humans[{i}]"), f"humans[{i}].score"))
        for i, h in enumerate(_list(_get(obj, "humans", ""), "humans"))
    )
    firearms = tuple(
        FirearmDetection(_box(_get(f, "bbox", f"firearms[{i}]"), f"firearms[{i}].bbox"),
                         _cls(_get(f, "class", f"firearms[{i}]"), f"firearms[{i}].class"),
                         _num(_get(f, "score", f"firearms[{i}]"), f"firearms[{i}].score"))
        for i, f in enumerate(_list(_get(obj, "firearms", ""), "firearms"))
    )
    poses = []
    for i, p in enumerate(_list(obj.get("poses", []), "poses")):
        path = f"poses[{i}]"
        if not isinstance(p, dict):
            raise RecordError(path, "expected an object")
        hidx = p.get("human_index")
        if hidx is not None and (isinstance(hidx, bool) or not isinstance(hidx, int)):
            raise RecordError(f"{path}.human_index", f"expected an integer or null, got {hidx!r}")
        poses.append(PoseEstimate(
            hidx,
            _keypoints(p.get("body", []), f"{path}.body"),
            _keypoints(p.get("left_hand", []), f"{path}.left_hand"),
            _keypoints(p.get("right_hand", []), f"{path}.right_hand"),
        ))
    gt_pairs = []
    for i, g in enumerate(_list(obj.get("gt_pairs", []), "gt_pairs")):
        path = f"gt_pairs[{i}]"
        carried = _get(g, "carried", path)
        if carried not in (0, 1) or isinstance(carried, float):
            raise RecordError(f"{path}.carried", f"expected 0 or 1, got {carried!r}")
        gt_pairs.append(GroundTruthPair(
            _box(_get(g, "human_bbox", path), f"{path}.human_bbox"),
            _box(_get(g, "firearm_bbox", path), f"{path}.firearm_bbox"),
            _cls(_get(g, "firearm_class", path), f"{path}.firearm_class"),
            int(carried),
        ))
    return ImageRecord(
        image_id,
        _num(_get(obj, "width", ""), "width"),
        _num(_get(obj, "height", ""), "height"),
        humans, firearms, tuple(poses), tuple(gt_pairs),
    )


def prediction_from_dict(obj: Any) -> PairPrediction:
    if not isinstance(obj, dict):
        raise RecordError("", "prediction must be a JSON object")
    image_id = _get(obj, "image_id", "")
    if not isinstance(image_id, str) or not image_id:
        raise RecordError("image_id", "expected a non-empty string")
    score = _num(_get(obj, "score", ""), "score")
    if not 0.0 <= score <= 1.0:
        raise RecordError("score", f"score {score} outside [0, 1]")
    human = _box(_get(obj, "human_bbox", ""), "human_bbox")
    firearm = _box(_get(obj, "firearm_bbox", ""), "firearm_bbox")
    for name, b in (("human_bbox", human), ("firearm_bbox", firearm)):
        if not b.is_valid:
            raise RecordError(name, f"degenerate box {b.as_list()}")
    return PairPrediction(image_id, human, firearm,
                          _cls(_get(obj, "firearm_class", ""), "firearm_class"), score)


# ------------------------------------------------------------- serializing

def _r(v: float) -> float:
    r = round(float(v), FLOAT_DECIMALS)
    return 0.0 if r == 0 else r  # no "-0.0"


def _rbox(b: Box) -> list[float]:
    return [_r(v) for v in b.as_tuple()]


def _kps(kps: Iterable[Keypoint]) -> list[dict]:
    return [{"name": k.name, "x": _r(k.x), "y": _r(k.y), "confidence": _r(k.confidence)} for k in kps]


def record_to_dict(rec: ImageRecord) -> dict:
    return {
        "image_id": rec.image_id,
        "width": _r(rec.width),
        "height": _r(rec.height),
        "humans": [{"bbox": _rbox(h.bbox), "score": _r(h.score)} for h in rec.humans],
        "firearms": [{"bbox": _rbox(f.bbox), "class": f.cls, "score": _r(f.score)} for f in rec.firearms],
        "poses": [
            {"human_index": p.human_index, "body": _kps(p.body),
             "left_hand": _kps(p.left_hand), "right_hand": _kps(p.right_hand)}
            for p in rec.poses
        ],
        "gt_pairs": [
            {"human_bbox": _rbox(g.human_bbox), "firearm_bbox": _rbox(g.firearm_bbox),
             "firearm_class": g.firearm_class, "carried": g.carried}
            for g in rec.gt_pairs
        ],
    }


def prediction_to_dict(pred: PairPrediction) -> dict:
    return {
        "image_id": pred.image_id,
        "human_bbox": _rbox(pred.human_bbox),
        "firearm_bbox": _rbox(pred.firearm_bbox),
        "firearm_class": pred.firearm_class,
        "score": _r(pred.score),
    }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(", ", ": "), allow_nan=False)


def write_jsonl(rows: Iterable[dict], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(_dumps(row))
            fh.write("\n")


def save_dataset(records: Iterable[ImageRecord], path: str | os.PathLike) -> None:
    write_jsonl((record_to_dict(r) for r in records), path)


def save_predictions(preds: Iterable[PairPrediction], path: str | os.PathLike) -> None:
    write_jsonl((prediction_to_dict(p) for p in preds), path)


# ---------------------------------------------------------------- loading

def _iter_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield lineno, line


def read_dataset(path: str | os.PathLike) -> tuple[list[ImageRecord], list[Violation]]:
    """Parse and validate a dataset file without raising on bad records.

    Returns the usable records (out-of-frame boxes clipped) and every
    violation found, warnings included. Records with hard violations are
    dropped from the returned list.
    """
    records: list[ImageRecord] = []
    problems: list[Violation] = []
    seen: dict[str, int] = {}
    for lineno, line in _iter_lines(path):
        try:
            rec = record_from_dict(json.loads(line))
        except json.JSONDecodeError as exc:
            problems.append(Violation("", "schema", f"invalid JSON: {exc.msg}", lineno))
            continue
        except RecordError as exc:
            problems.append(Violation(exc.path, "schema", exc.message, lineno))
            continue
        found = [replace(v, line=lineno) for v in validate_record(rec)]
        if rec.image_id in seen:
            found.append(Violation("image_id", "duplicate",
                                   f"image_id {rec.image_id!r} already used on line {seen[rec.image_id]}",
                                   lineno))
        else:
            seen[rec.image_id] = lineno
        problems.extend(found)
        if any(not v.is_warning for v in found):
            continue
        if found:
            for v in found:
                log.warning("%s", v)
            rec = clip_record(rec)
        records.append(rec)
    return records, problems


def load_dataset(path: str | os.PathLike) -> list[ImageRecord]:
    """Load a dataset file; raise :class:`DatasetError` if any record is invalid.

    Clip warnings do not fail the load; the affected boxes are clipped to the
    image frame.
    """
    records, problems = read_dataset(path)
    errors = [v for v in problems if not v.is_warning]
    if errors:
        raise DatasetError(errors)
    return records


def load_predictions(path: str | os.PathLike) -> list[PairPrediction]:
    preds = []
    errors = []
    for lineno, line in _iter_lines(path):
        try:
            preds.append(prediction_from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            errors.append(Violation("", "schema", f"invalid JSON: {exc.msg}", lineno))
        except RecordError as exc:
            errors.append(Violation(exc.path, "schema", exc.message, lineno))
    if errors:
        raise DatasetError(errors)
    return preds


# ------------------------------------------------------------- validation

def _check_score(score: float, path: str, out: list[Violation]) -> None:
    if not (math.isfinite(score) and 0.0 <= score <= 1.0):
        out.append(Violation(path, "range", f"value {score} outside [0, 1]"))


def _check_box(box: Box, path: str, rec: ImageRecord, out: list[Violation]) -> None:
    if not box.is_valid:
        out.append(Violation(path, "geometry", f"degenerate box {box.as_list()}"))
        return
    if box.x1 < 0 or box.y1 < 0 or box.x2 > rec.width or box.y2 > rec.height:
        if not box.clipped(rec.width, rec.height).is_valid:
            out.append(Violation(path, "geometry",
                                 f"box {box.as_list()} lies outside the {rec.width}x{rec.height} frame"))
        else:
            out.append(Violation(path, "clip", f"box {box.as_list()} exceeds the frame and will be clipped"))


def _check_keypoints(kps, path: str, out: list[Violation]) -> None:
    for i, k in enumerate(kps):
        if not (math.isfinite(k.x) and math.isfinite(k.y)):
            out.append(Violation(f"{path}[{i}]", "range", "non-finite keypoint coordinate"))
        _check_score(k.confidence, f"{path}[{i}].confidence", out)


def validate_record(rec: ImageRecord) -> list[Violation]:
    """Check every invariant of a parsed record. An empty list means the record is clean."""
    out: list[Violation] = []
    if not rec.image_id:
        out.append(Violation("image_id", "schema", "image_id must be non-empty"))
    frame_ok = math.isfinite(rec.width) and math.isfinite(rec.height) and rec.width > 0 and rec.height > 0
    if not frame_ok:
        out.append(Violation("width", "geometry", f"invalid frame {rec.width}x{rec.height}"))
    for i, h in enumerate(rec.humans):
        if frame_ok:
            _check_box(h.bbox, f"humans[{i}].bbox", rec, out)
        _check_score(h.score, f"humans[{i}].score", out)
    for i, f in enumerate(rec.firearms):
        if frame_ok:
            _check_box(f.bbox, f"firearms[{i}].bbox", rec, out)
        if f.cls not in FIREARM_CLASSES:
            out.append(Violation(f"firearms[{i}].class", "schema", f"unknown firearm class {f.cls!r}"))
        _check_score(f.score, f"firearms[{i}].score", out)
    for i, p in enumerate(rec.poses):
        if p.human_index is not None and not 0 <= p.human_index < len(rec.humans):
            out.append(Violation(f"poses[{i}].human_index", "index",
                                 f"index {p.human_index} out of range for {len(rec.humans)} humans"))
        for part in ("body", "left_hand", "right_hand"):
            _check_keypoints(getattr(p, part), f"poses[{i}].{part}", out)
    for i, g in enumerate(rec.gt_pairs):
        if frame_ok:
            _check_box(g.human_bbox, f"gt_pairs[{i}].human_bbox", rec, out)
            _check_box(g.firearm_bbox, f"gt_pairs[{i}].firearm_bbox", rec, out)
        if g.carried not in (0, 1):
            out.append(Violation(f"gt_pairs[{i}].carried", "range", f"expected 0 or 1, got {g.carried!r}"))
    return out


def clip_record(rec: ImageRecord) -> ImageRecord:
    """Return a copy with every box clipped to the image frame."""
    w, h = rec.width, rec.height
    return replace(
        rec,
        humans=tuple(replace(d, bbox=d.bbox.clipped(w, h)) for d in rec.humans),
        firearms=tuple(replace(d, bbox=d.bbox.clipped(w, h)) for d in rec.firearms),
        gt_pairs=tuple(
            replace(g, human_bbox=g.human_bbox.clipped(w, h), firearm_bbox=g.firearm_bbox.clipped(w, h))
            for g in rec.gt_pairs
        ),
    )


def linked_human(rec: ImageRecord, pose_index: int) -> Optional[int]:
    """Human detection a pose belongs to.

    Uses the pose's explicit ``human_index`` when present. Otherwise the pose
    is linked to the human box holding a strict majority of its body
    keypoints (hand keypoints when the body list is empty); among several such
    boxes the one holding the most keypoints wins, then the lowest index.
    """
    pose = rec.poses[pose_index]
    if pose.human_index is not None:
        return pose.human_index
    kps = pose.body or pose.hands
    if not kps:
        return None
    best, best_count = None, 0
    for i, h in enumerate(rec.humans):
        n = sum(1 for k in kps if h.bbox.x1 <= k.x <= h.bbox.x2 and h.bbox.y1 <= k.y <= h.bbox.y2)
        if 2 * n > len(kps) and n > best_count:
            best, best_count = i, n
    return best


def poses_of_human(rec: ImageRecord, human_index: int) -> list[PoseEstimate]:
    return [p for i, p in enumerate(rec.poses) if linked_human(rec, i) == human_index]


def gt_by_image(records: Iterable[ImageRecord]) -> dict[str, list[GroundTruthPair]]:
    return {r.image_id: list(r.gt_pairs) for r in records}
