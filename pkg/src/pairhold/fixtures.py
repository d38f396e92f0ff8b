"""Seeded synthetic scenes with known carrier geometry.

Each scene is a row of partly overlapping people. Some carry a gun or a
rifle in their hands; others stand next to a firearm lying at their feet.
Rifles held by a carrier often stick out into the neighbour's box, which is
the crowded case where plain overlap association picks the wrong person.

Detections are the ground-truth boxes with a few pixels of jitter, so every
detection still matches its annotation at IoU well above 0.5.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import Box, Keypoint
from .records import (FirearmDetection, GroundTruthPair, HumanDetection, ImageRecord, PoseEstimate,
                      save_dataset)

BODY_PARTS = (
    ("nose", 0.50, 0.06), ("neck", 0.50, 0.16), ("r_shoulder", 0.36, 0.18), ("l_shoulder", 0.64, 0.18),
    ("r_elbow", 0.33, 0.34), ("l_elbow", 0.67, 0.34), ("r_hip", 0.42, 0.55), ("l_hip", 0.58, 0.55),
    ("r_knee", 0.42, 0.75), ("l_knee", 0.58, 0.75), ("r_ankle", 0.42, 0.95), ("l_ankle", 0.58, 0.95),
)
HAND_POINTS = 21


def _r(v: float) -> float:
    return round(float(v), 2)


def _box(x1, y1, x2, y2, w, h) -> Box:
    return Box(_r(max(0.0, x1)), _r(max(0.0, y1)), _r(min(w, x2)), _r(min(h, y2)))


def _jitter(rng, b: Box, w, h, px=3.0) -> Box:
    d = rng.uniform(-px, px, size=4)
    out = _box(b.x1 + d[0], b.y1 + d[1], b.x2 + d[2], b.y2 + d[3], w, h)
    return out if out.is_valid else b


def _hand(rng, cx, cy, spread, conf_lo, conf_hi, prefix) -> tuple[Keypoint, ...]:
    pts = []
    for k in range(HAND_POINTS):
        pts.append(Keypoint(f"{prefix}{k}", _r(cx + rng.uniform(-spread, spread)),
                            _r(cy + rng.uniform(-spread, spread)), _r(rng.uniform(conf_lo, conf_hi))))
    return tuple(pts)


def make_scene(rng: np.random.Generator, image_id: str, occlusion: float = 0.1) -> ImageRecord:
    W, H = float(rng.choice([640, 800, 960])), float(rng.choice([480, 600]))
    n_people = int(rng.integers(2, 5))
    pw = rng.uniform(70, 95, size=n_people)
    ph = rng.uniform(190, 240, size=n_people)
    ground = H - rng.uniform(20, 60)
    x = rng.uniform(30, 60)
    people = []
    for i in range(n_people):
        b = _box(x, ground - ph[i], x + pw[i], ground, W, H)
        people.append(b)
        x += pw[i] * rng.uniform(0.72, 0.95)  # neighbours overlap by 5-28% of a width

    roles = ["idle"] * n_people
    n_carriers = int(rng.integers(1, min(2, n_people) + 1))
    for i in rng.choice(n_people, size=n_carriers, replace=False):
        roles[int(i)] = "carrier"
    idle = [i for i in range(n_people) if roles[i] == "idle"]
    if idle and rng.random() < 0.6:
        roles[int(rng.choice(idle))] = "dropped"

    firearms: list[tuple[Box, str, int]] = []  # (box, class, owner)
    hands: dict[int, tuple[tuple, tuple]] = {}
    for i, b in enumerate(people):
        bw, bh = b.width, b.height
        if roles[i] == "carrier":
            cls = "rifle" if rng.random() < 0.5 else "gun"
            hy = b.y1 + bh * rng.uniform(0.38, 0.48)
            if cls == "gun":
                gx = b.x1 + bw * rng.uniform(0.7, 0.95)
                fw, fh = rng.uniform(26, 36), rng.uniform(16, 24)
                fb = _box(gx - fw / 2, hy - fh / 2, gx + fw / 2, hy + fh / 2, W, H)
                right = _hand(rng, gx, hy, 5, 0.35, 0.95, "rh")
                left = _hand(rng, b.x1 + bw * 0.3, b.y1 + bh * 0.55, 6, 0.2, 0.9, "lh")
            else:
                # held across the body, pointing right, often into the neighbour's box
                length = rng.uniform(1.1, 1.8) * bw
                fh = rng.uniform(18, 26)
                x0 = b.x1 + bw * rng.uniform(0.25, 0.45)
                fb = _box(x0, hy - fh / 2, x0 + length, hy + fh / 2, W, H)
                right = _hand(rng, x0 + bw * 0.1, hy, 5, 0.35, 0.95, "rh")
                left = _hand(rng, x0 + bw * 0.45, hy, 5, 0.35, 0.95, "lh")
            if fb.is_valid:
                firearms.append((fb, cls, i))
            hands[i] = (left, right)
        else:
            left = _hand(rng, b.x1 + bw * 0.3, b.y1 + bh * 0.55, 6, 0.2, 0.9, "lh")
            right = _hand(rng, b.x1 + bw * 0.7, b.y1 + bh * 0.55, 6, 0.2, 0.9, "rh")
            hands[i] = (left, right)
            if roles[i] == "dropped":
                cls = "rifle" if rng.random() < 0.5 else "gun"
                fw, fh = (rng.uniform(90, 130), rng.uniform(18, 26)) if cls == "rifle" else \
                    (rng.uniform(26, 36), rng.uniform(16, 24))
                cx = b.x1 + bw * rng.uniform(0.35, 0.65)
                fb = _box(cx - fw / 2, b.y2 - fh - rng.uniform(0, 8), cx + fw / 2, b.y2 - rng.uniform(0, 4) + 0.01,
                          W, H)
                if fb.is_valid:
                    firearms.append((fb, cls, -1 - i))  # negative owner: lies at person i's feet

    order = rng.permutation(len(firearms))
    firearms = [firearms[int(k)] for k in order]

    humans = tuple(HumanDetection(_jitter(rng, b, W, H), _r(rng.uniform(0.8, 0.99))) for b in people)
    fdets = tuple(FirearmDetection(_jitter(rng, fb, W, H, px=2.0), cls, _r(rng.uniform(0.7, 0.99)))
                  for fb, cls, _ in firearms)

    poses = []
    for i, b in enumerate(people):
        body = tuple(Keypoint(name, _r(b.x1 + fx * b.width + rng.normal(0, 2)),
                              _r(b.y1 + fy * b.height + rng.normal(0, 2)), _r(rng.uniform(0.5, 0.95)))
                     for name, fx, fy in BODY_PARTS)
        left, right = hands[i]
        if rng.random() < occlusion:
            left, right = (), ()
        hidx = i if rng.random() < 0.5 else None
        poses.append(PoseEstimate(hidx, body, left, right))

    gt = []
    for fb, cls, owner in firearms:
        for i, b in enumerate(people):
            if owner == i:
                gt.append(GroundTruthPair(b, fb, cls, 1))
            elif owner == -1 - i or (fb.x1 < b.x2 and b.x1 < fb.x2 and fb.y1 < b.y2 and b.y1 < fb.y2):
                gt.append(GroundTruthPair(b, fb, cls, 0))

    return ImageRecord(image_id, W, H, humans, fdets, tuple(poses), tuple(gt))


def generate(n_images: int, seed: int = 0, occlusion: float = 0.1, prefix: str = "synth") -> list[ImageRecord]:
    rng = np.random.default_rng(seed)
    return [make_scene(rng, f"{prefix}_{k:04d}", occlusion) for k in range(n_images)]


def bundled_path(name: str) -> str:
    return os.path.join(os.path.dirname(__file__), "data", name)


# (file name, image count, seed)
BUNDLED = {
    "synthetic_10.jsonl": (10, 10),
    "synthetic_120.jsonl": (120, 120),
}


def write_bundled(directory: str | None = None) -> list[str]:
    directory = directory or os.path.join(os.path.dirname(__file__), "data")
    out = []
    for name, (n, seed) in BUNDLED.items():
        path = os.path.join(directory, name)
        save_dataset(generate(n, seed), path)
        out.append(path)
    return out
