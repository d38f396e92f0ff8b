"""Rule-based carrier baselines.

* HiFB: count confident hand keypoints inside a firearm box.
* BCFD: match firearm boxes against the hand keypoints of full-body poses.
* OHFB: associate each firearm with the human box it overlaps most.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .geometry import Keypoint, contains, count_inside, enclosure, iou
from .records import FirearmDetection, ImageRecord, PairPrediction, PoseEstimate, linked_human

OVERLAP_METRICS = ("iou", "enclosure")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HifbConfig:
    alpha: float = 0.3
    min_keypoints: int = 3  # "more than two"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.min_keypoints < 1:
            raise ConfigError(f"min_keypoints must be >= 1, got {self.min_keypoints}")


@dataclass(frozen=True)
class BcfdConfig:
    beta: int = 1  # hand keypoints that must fall inside the firearm box

    def __post_init__(self):
        if self.beta < 1:
            raise ConfigError(f"beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class OhfbConfig:
    overlap_metric: str = "enclosure"
    min_overlap: float = 0.5

    def __post_init__(self):
        if self.overlap_metric not in OVERLAP_METRICS:
            raise ConfigError(f"overlap_metric must be one of {OVERLAP_METRICS}, got {self.overlap_metric!r}")
        if not 0.0 <= self.min_overlap <= 1.0:
            raise ConfigError(f"min_overlap must lie in [0, 1], got {self.min_overlap}")


def hifb_classify(firearm: FirearmDetection, hand_keypoints: Sequence[Keypoint],
                  cfg: HifbConfig = HifbConfig()) -> bool:
    """True when enough hand keypoints above ``alpha`` confidence lie in the firearm box.

    The confidence comparison is strict: a keypoint at exactly ``alpha`` does
    not count.
    """
    n = sum(1 for k in hand_keypoints if k.confidence > cfg.alpha and contains(firearm.bbox, k.x, k.y))
    return n >= cfg.min_keypoints


def bcfd_classify(firearm: FirearmDetection, poses: Sequence[PoseEstimate],
                  cfg: BcfdConfig = BcfdConfig()) -> tuple[bool, Optional[int]]:
    """Return ``(carried, carrier_pose_index)``.

    The carrier is the pose with the most hand keypoints inside the firearm
    box, ties going to the lowest pose index. Poses whose hands were not
    detected never qualify.
    """
    best, best_count = None, 0
    for i, pose in enumerate(poses):
        n = count_inside(firearm.bbox, pose.hands)
        if n > best_count:
            best, best_count = i, n
    if best is None or best_count < cfg.beta:
        return False, None
    return True, best


def _overlap(metric: str):
    if metric == "iou":
        return iou
    return enclosure


def ohfb_match(record: ImageRecord, cfg: OhfbConfig = OhfbConfig()) -> list[tuple[int, Optional[int], float]]:
    """Per firearm: ``(firearm_index, human_index or None, best overlap)``.

    Ties on overlap go to the lowest human index.
    """
    overlap = _overlap(cfg.overlap_metric)
    out = []
    for fi, f in enumerate(record.firearms):
        best, best_val = None, -1.0
        for hi, h in enumerate(record.humans):
            v = overlap(f.bbox, h.bbox)  # enclosure: share of the firearm box inside the human
            if v > best_val:
                best, best_val = hi, v
        if best is None or best_val < cfg.min_overlap:
            out.append((fi, None, max(best_val, 0.0)))
        else:
            out.append((fi, best, best_val))
    return out


def ohfb_associate(record: ImageRecord, cfg: OhfbConfig = OhfbConfig()) -> list[PairPrediction]:
    """Associate each firearm with its maximum-overlap human.

    Associations below ``cfg.min_overlap`` are dropped. The prediction score
    is the overlap times the firearm detector score.
    """
    preds = []
    for fi, hi, value in ohfb_match(record, cfg):
        if hi is None:
            continue
        f = record.firearms[fi]
        preds.append(PairPrediction(record.image_id, record.humans[hi].bbox, f.bbox, f.cls,
                                    min(1.0, value * f.score)))
    return preds


def all_hand_keypoints(record: ImageRecord) -> list[Keypoint]:
    return [k for p in record.poses for k in p.hands]


def hifb_flags(record: ImageRecord, cfg: HifbConfig = HifbConfig()) -> list[bool]:
    hands = all_hand_keypoints(record)
    return [hifb_classify(f, hands, cfg) for f in record.firearms]


def bcfd_run(record: ImageRecord, cfg: BcfdConfig = BcfdConfig()) -> tuple[list[bool], list[PairPrediction]]:
    """Run BCFD over a record.

    Returns per-firearm carried flags and a prediction for each carried
    firearm whose carrier pose links to a detected human. Predictions are
    scored with the firearm detector score.
    """
    flags, preds = [], []
    for f in record.firearms:
        carried, pose_idx = bcfd_classify(f, record.poses, cfg)
        flags.append(carried)
        if not carried:
            continue
        hi = linked_human(record, pose_idx)
        if hi is None:
            continue
        preds.append(PairPrediction(record.image_id, record.humans[hi].bbox, f.bbox, f.cls, f.score))
    return flags, preds
