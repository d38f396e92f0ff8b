"""Carried-pair evaluation: pair matching, AP_Ghold / AP_Rhold / AP_hold, accuracy.

A predicted pair is a true positive when an unmatched carried ground-truth
pair in the same image, with the same firearm class, overlaps both its human
box and its firearm box at IoU >= 0.5. Predictions are ranked by descending
score with ties broken by image id and then the boxes, so results do not
depend on input order.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .geometry import iou
from .records import FIREARM_CLASSES, GroundTruthPair, ImageRecord, PairPrediction

CLASS_KEYS = {"gun": "ap_ghold", "rifle": "ap_rhold"}


class EvalError(ValueError):
    pass


def rank_key(p: PairPrediction):
    return (-p.score, p.image_id, p.human_bbox.as_tuple(), p.firearm_bbox.as_tuple())


def rank(preds: Iterable[PairPrediction]) -> list[PairPrediction]:
    return sorted(preds, key=rank_key)


def match_pairs(preds: Iterable[PairPrediction], gts: Mapping[str, Sequence[GroundTruthPair]],
                iou_thresh: float = 0.5, strict: bool = True
                ) -> tuple[list[PairPrediction], list[bool], dict[str, list[Optional[int]]]]:
    """Greedy one-to-one matching of ranked predictions to carried GT pairs.

    Returns ``(ranked_preds, tp_flags, assignment)`` where ``assignment`` maps
    each image to the index of the ranked prediction matched to each of its GT
    pairs (``None`` when unmatched or not carried). Among several eligible GT
    pairs the one with the largest min(human IoU, firearm IoU) wins, then the
    lowest GT index.
    """
    ranked = rank(preds)
    taken = {img: [None] * len(pairs) for img, pairs in gts.items()}
    flags = []
    for n, p in enumerate(ranked):
        if p.image_id not in gts:
            if strict:
                raise EvalError(f"prediction for unknown image {p.image_id!r}")
            flags.append(False)
            continue
        best, best_val = None, -1.0
        for gi, g in enumerate(gts[p.image_id]):
            if g.carried != 1 or g.firearm_class != p.firearm_class or taken[p.image_id][gi] is not None:
                continue
            ih = iou(p.human_bbox, g.human_bbox)
            if ih < iou_thresh:
                continue
            ifa = iou(p.firearm_bbox, g.firearm_bbox)
            if ifa < iou_thresh:
                continue
            v = min(ih, ifa)
            if v > best_val:
                best, best_val = gi, v
        if best is None:
            flags.append(False)
        else:
            taken[p.image_id][best] = n
            flags.append(True)
    return ranked, flags, taken


def pr_curve(flags: Sequence[bool], num_gt_positives: int) -> tuple[list[float], list[float]]:
    """Precision and recall after each ranked prediction."""
    precision, recall = [], []
    tp = 0
    for k, f in enumerate(flags, start=1):
        tp += bool(f)
        precision.append(tp / k)
        recall.append(tp / num_gt_positives if num_gt_positives else 0.0)
    return precision, recall


def average_precision(flags: Sequence[bool], num_gt_positives: int) -> float:
    """All-point interpolated AP of a ranked TP/FP list.

    Precision is replaced by its running maximum from the right (the
    envelope) and integrated over the recall steps. With no GT positives the
    AP is 1.0 for an empty ranking and 0.0 otherwise.
    """
    if num_gt_positives <= 0:
        return 1.0 if len(flags) == 0 else 0.0
    precision, recall = pr_curve(flags, num_gt_positives)
    if not precision:
        return 0.0
    env = precision[:]
    for k in range(len(env) - 2, -1, -1):
        env[k] = max(env[k], env[k + 1])
    ap = 0.0
    prev_r = 0.0
    for p, r in zip(env, recall):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return min(max(ap, 0.0), 1.0)


@dataclass
class ClassResult:
    ap: float
    tp: int
    fp: int
    fn: int
    num_gt: int
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)


@dataclass
class EvalReport:
    ap_ghold: float
    ap_rhold: float
    ap_hold: float
    per_class: dict[str, ClassResult]
    iou_thresh: float = 0.5

    def to_dict(self) -> dict:
        return {
            "ap_ghold": self.ap_ghold,
            "ap_rhold": self.ap_rhold,
            "ap_hold": self.ap_hold,
            "iou_thresh": self.iou_thresh,
            "classes": {
                k: {"ap": v.ap, "tp": v.tp, "fp": v.fp, "fn": v.fn, "num_gt": v.num_gt,
                    "precision": [round(x, 6) for x in v.precision],
                    "recall": [round(x, 6) for x in v.recall]}
                for k, v in self.per_class.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(", ", ": "))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json() + "\n")


def _class_result(preds, gts, iou_thresh, strict) -> ClassResult:
    num_gt = sum(1 for pairs in gts.values() for g in pairs if g.carried == 1)
    _, flags, _ = match_pairs(preds, gts, iou_thresh, strict)
    tp = sum(flags)
    precision, recall = pr_curve(flags, num_gt)
    return ClassResult(average_precision(flags, num_gt), tp, len(flags) - tp, num_gt - tp, num_gt,
                       precision, recall)


def evaluate(preds: Iterable[PairPrediction], gts: Mapping[str, Sequence[GroundTruthPair]] | Iterable[ImageRecord],
             iou_thresh: float = 0.5, strict: bool = True) -> EvalReport:
    """Compute AP_Ghold, AP_Rhold and AP_hold.

    The per-class APs rank only predictions and GT pairs of that class;
    AP_hold ranks all predictions together against all carried GT pairs
    (class agreement is still required for a match).
    """
    if not isinstance(gts, Mapping):
        gts = {r.image_id: list(r.gt_pairs) for r in gts}
    preds = list(preds)
    if strict:
        unknown = sorted({p.image_id for p in preds} - set(gts))
        if unknown:
            raise EvalError(f"predictions reference images missing from the ground truth: {unknown[:5]}")
    per_class = {}
    for cls in FIREARM_CLASSES:
        cls_gts = {img: [g for g in pairs if g.firearm_class == cls] for img, pairs in gts.items()}
        per_class[cls] = _class_result([p for p in preds if p.firearm_class == cls], cls_gts, iou_thresh, strict)
    per_class["all"] = _class_result(preds, gts, iou_thresh, strict)
    return EvalReport(per_class["gun"].ap, per_class["rifle"].ap, per_class["all"].ap, per_class, iou_thresh)


def format_table(rows: Sequence[tuple[str, EvalReport]], backbone: str = "-") -> str:
    """Plain-text table with one row per method and the three AP columns (in percent)."""
    header = ("Methods", "Backbone", "AP_Ghold", "AP_Rhold", "AP_hold")
    body = [(name, backbone, f"{100 * r.ap_ghold:.1f}", f"{100 * r.ap_rhold:.1f}", f"{100 * r.ap_hold:.1f}")
            for name, r in rows]
    widths = [max(len(str(row[i])) for row in [header, *body]) for i in range(len(header))]

    def line(cells):
        return " | ".join(str(c).ljust(w) if i < 2 else str(c).rjust(w)
                          for i, (c, w) in enumerate(zip(cells, widths)))

    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), rule, *(line(b) for b in body)]) + "\n"


def classification_accuracy(pred_flags: Sequence[bool], gt_flags: Sequence[bool],
                            classes: Sequence[str]) -> tuple[float, float, float]:
    """Per-class and pooled carried/not-carried accuracy over firearms.

    A class with no firearms gets ``nan``.
    """
    if not (len(pred_flags) == len(gt_flags) == len(classes)):
        raise ValueError(f"length mismatch: {len(pred_flags)} predictions, {len(gt_flags)} labels, "
                         f"{len(classes)} classes")
    correct = {c: 0 for c in FIREARM_CLASSES}
    total = {c: 0 for c in FIREARM_CLASSES}
    for p, g, c in zip(pred_flags, gt_flags, classes):
        if c not in total:
            raise ValueError(f"unknown firearm class {c!r}")
        total[c] += 1
        correct[c] += bool(p) == bool(g)

    def frac(a, b):
        return a / b if b else math.nan

    return (frac(correct["gun"], total["gun"]), frac(correct["rifle"], total["rifle"]),
            frac(sum(correct.values()), sum(total.values())))


def firearm_labels(record: ImageRecord, iou_thresh: float = 0.5) -> list[bool]:
    """Carried label for each detected firearm: it matches a carried GT firearm box of its class."""
    carried = [g for g in record.gt_pairs if g.carried == 1]
    return [
        any(g.firearm_class == f.cls and iou(f.bbox, g.firearm_bbox) >= iou_thresh for g in carried)
        for f in record.firearms
    ]
