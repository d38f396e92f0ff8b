"""Pair classifier: geometric pair features, softmax/cross-entropy, SGD training, scoring.

Class index 0 is "carried" and index 1 is "not carried" throughout.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Protocol, Sequence

import numpy as np

from .geometry import Box, InvalidGeometryError, count_inside, enclosure, iou
from .pairing import CandidatePair, enumerate_pairs
from .records import ImageRecord, PairPrediction, PoseEstimate, poses_of_human

log = logging.getLogger(__name__)

FEATURE_DIM = 16
FEATURE_NAMES = (
    "iou", "firearm_enclosure", "rel_cx", "rel_cy", "log_area_ratio",
    "human_aspect", "firearm_aspect", "paired_aspect", "is_gun", "is_rifle",
    "hand_distance", "hands_inside", "offset_x", "offset_y",
    "firearm_score", "human_score",
)
NO_HAND_DISTANCE = 2.0
PROB_FLOOR = 1e-12


class NumericError(ArithmeticError):
    pass


class DivergenceError(NumericError):
    pass


class DegenerateDataError(ValueError):
    pass


class ScoringError(RuntimeError):
    def __init__(self, image_id: str, pair: CandidatePair, cause: Exception):
        super().__init__(f"scoring pair (human {pair.human_index}, firearm {pair.firearm_index}) "
                         f"in image {image_id!r} failed: {cause}")
        self.image_id = image_id
        self.pair = pair


# ---------------------------------------------------------------- features

def extract_features(pair: CandidatePair, poses: Sequence[PoseEstimate],
                     frame: tuple[float, float], human_score: float = 1.0,
                     firearm_score: float = 1.0) -> np.ndarray:
    """Fixed 16-dim geometric description of a human/firearm pair.

    ``poses`` should be the poses linked to the pair's human; their hand
    keypoints feed the hand-distance and hands-inside features.
    """
    h, f = pair.human_bbox, pair.firearm_bbox
    for b in (h, f, pair.paired_bbox):
        b.check()
    width, height = frame
    if not (width > 0 and height > 0):
        raise InvalidGeometryError(f"invalid frame {width}x{height}")
    fcx, fcy = f.center
    hcx, hcy = h.center
    diag = math.hypot(h.width, h.height)
    hands = [k for p in poses for k in p.hands]
    if hands:
        dist = min(math.hypot(k.x - fcx, k.y - fcy) for k in hands) / diag
        dist = min(dist, NO_HAND_DISTANCE)
    else:
        dist = NO_HAND_DISTANCE
    return np.array([
        iou(h, f),
        enclosure(f, h),
        (fcx - h.x1) / h.width,
        (fcy - h.y1) / h.height,
        math.log(f.area / h.area),
        h.width / h.height,
        f.width / f.height,
        pair.paired_bbox.width / pair.paired_bbox.height,
        1.0 if pair.firearm_class == "gun" else 0.0,
        1.0 if pair.firearm_class == "rifle" else 0.0,
        dist,
        count_inside(f, hands) / 10.0,
        (fcx - hcx) / width,
        (fcy - hcy) / height,
        firearm_score,
        human_score,
    ], dtype=np.float64)


def record_features(record: ImageRecord) -> tuple[list[CandidatePair], np.ndarray]:
    """Enumerate a record's pairs and return them with their feature matrix."""
    pairs = enumerate_pairs(record)
    if not pairs:
        return pairs, np.zeros((0, FEATURE_DIM))
    linked = {hi: poses_of_human(record, hi) for hi in range(len(record.humans))}
    rows = [
        extract_features(p, linked[p.human_index], (record.width, record.height),
                         record.humans[p.human_index].score, record.firearms[p.firearm_index].score)
        for p in pairs
    ]
    return pairs, np.vstack(rows)


def pair_labels(record: ImageRecord, pairs: Sequence[CandidatePair], iou_thresh: float = 0.5) -> np.ndarray:
    """1 for pairs whose boxes both match a carried ground-truth pair of the same class."""
    carried = [g for g in record.gt_pairs if g.carried == 1]
    out = np.zeros(len(pairs), dtype=np.int64)
    for n, p in enumerate(pairs):
        for g in carried:
            if (g.firearm_class == p.firearm_class
                    and iou(p.human_bbox, g.human_bbox) >= iou_thresh
                    and iou(p.firearm_bbox, g.firearm_bbox) >= iou_thresh):
                out[n] = 1
                break
    return out


def build_training_set(records: Iterable[ImageRecord]) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for rec in records:
        pairs, feats = record_features(rec)
        if pairs:
            xs.append(feats)
            ys.append(pair_labels(rec, pairs))
    if not xs:
        return np.zeros((0, FEATURE_DIM)), np.zeros(0, dtype=np.int64)
    return np.vstack(xs), np.concatenate(ys)


# -------------------------------------------------------- softmax and loss

@dataclass(frozen=True)
class ClassProbs:
    p_carried: float
    p_not_carried: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_carried, self.p_not_carried])


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits: Sequence[float]) -> ClassProbs:
    p = softmax_rows(np.asarray(logits, dtype=np.float64).reshape(2))
    return ClassProbs(float(p[0]), float(p[1]))


def cross_entropy(p, g) -> float:
    """Negative log-likelihood of one-hot target ``g`` under probabilities ``p``.

    Accepts a single pair of 2-vectors or ``(n, 2)`` batches; a batch returns
    the mean loss over its rows. Probabilities are floored at 1e-12.
    """
    if isinstance(p, ClassProbs):
        p = p.as_array()
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    if g.shape != p.shape or g.shape[-1] != 2:
        raise ValueError(f"shape mismatch: probs {p.shape}, targets {g.shape}")
    if not (np.all((g == 0) | (g == 1)) and np.all(g.sum(axis=1) == 1)):
        raise ValueError("targets must be one-hot")
    logp = np.log(np.clip(p, PROB_FLOOR, 1.0))
    return float(np.mean(-(g * logp).sum(axis=1)))


def one_hot(labels: np.ndarray) -> np.ndarray:
    """Label 1 (carried) maps to class index 0."""
    labels = np.asarray(labels)
    g = np.zeros((labels.shape[0], 2))
    g[np.arange(labels.shape[0]), np.where(labels == 1, 0, 1)] = 1.0
    return g


# ------------------------------------------------------------------ model

@dataclass(frozen=True)
class GeomPairModel:
    weights: np.ndarray  # (2, d)
    bias: np.ndarray  # (2,)
    feature_means: np.ndarray
    feature_stds: np.ndarray

    def __post_init__(self):
        d = self.feature_means.shape[0]
        if self.weights.shape != (2, d) or self.bias.shape != (2,) or self.feature_stds.shape != (d,):
            raise ValueError("inconsistent model dimensions")
        if not np.all(self.feature_stds > 0):
            raise ValueError("feature stds must be strictly positive")

    @property
    def dim(self) -> int:
        return self.feature_means.shape[0]

    @classmethod
    def zeros(cls, d: int = FEATURE_DIM) -> "GeomPairModel":
        return cls(np.zeros((2, d)), np.zeros(2), np.zeros(d), np.ones(d))

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_means) / self.feature_stds

    def probs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"feature dimension {x.shape[-1]} does not match model dimension {self.dim}")
        return softmax_rows(self.standardize(x) @ self.weights.T + self.bias)

    def folded(self) -> "GeomPairModel":
        """Equivalent model acting on raw features (standardization folded into the weights)."""
        w = self.weights / self.feature_stds
        b = self.bias - w @ self.feature_means
        return GeomPairModel(w, b, np.zeros(self.dim), np.ones(self.dim))


def score_pair(model: GeomPairModel, features) -> ClassProbs:
    p = model.probs(np.asarray(features, dtype=np.float64).reshape(-1))
    return ClassProbs(float(p[0]), float(p[1]))


def save_model(model: GeomPairModel, path: str | os.PathLike) -> None:
    """Text model file: dimension, then means, stds, two weight rows and bias."""
    def row(v):
        return " ".join(f"{float(x):.9g}" for x in v)
    lines = [str(model.dim), row(model.feature_means), row(model.feature_stds),
             row(model.weights[0]), row(model.weights[1]), row(model.bias)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str | os.PathLike) -> GeomPairModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) != 6:
        raise ValueError(f"{path}: expected 6 lines, found {len(lines)}")
    d = int(lines[0])
    rows = [np.array([float(t) for t in ln.split()]) for ln in lines[1:]]
    for r in rows[:4]:
        if r.shape != (d,):
            raise ValueError(f"{path}: row of length {r.shape[0]} does not match dimension {d}")
    return GeomPairModel(np.vstack(rows[2:4]), rows[4], rows[0], rows[1])


# --------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 1
    seed: int = 0
    shuffle: bool = True
    dropout: float = 0.0  # kept for parity with the deep model; a linear model ignores it

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainResult:
    model: GeomPairModel
    losses: list[float] = field(default_factory=list)  # full-set mean loss; index 0 is before training


def loss_and_grad(weights: np.ndarray, bias: np.ndarray, xs: np.ndarray,
                  targets: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch of standardized features and its gradients."""
    p = softmax_rows(xs @ weights.T + bias)
    loss = cross_entropy(p, targets)
    delta = (p - targets) / xs.shape[0]
    return loss, delta.T @ xs, delta.sum(axis=0)


def fit_standardizer(xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = xs.mean(axis=0)
    stds = xs.std(axis=0)
    stds = np.where(stds > 1e-12, stds, 1.0)
    return means, stds


def train(xs, labels, cfg: TrainConfig = TrainConfig(),
          on_epoch: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Train a linear-softmax pair model with momentum SGD.

    Weights start at zero. Each epoch visits the samples in a freshly
    shuffled order (seeded), in mini-batches of ``cfg.batch_size``; the update
    is ``v = momentum*v - lr*grad; w = w + v``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    labels = np.asarray(labels)
    if xs.ndim != 2 or xs.shape[0] != labels.shape[0]:
        raise ValueError(f"features {xs.shape} do not align with {labels.shape[0]} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    if len(np.unique(labels)) < 2:
        raise DegenerateDataError("training set needs at least one sample of each class")
    if not np.all(np.isfinite(xs)):
        raise NumericError("non-finite training features")

    means, stds = fit_standardizer(xs)
    z = (xs - means) / stds
    targets = one_hot(labels)
    n, d = z.shape
    w = np.zeros((2, d))
    b = np.zeros(2)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    rng = np.random.default_rng(cfg.seed)

    losses = [loss_and_grad(w, b, z, targets)[0]]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        try:
            with np.errstate(over="raise", invalid="raise"):
                for start in range(0, n, cfg.batch_size):
                    idx = order[start:start + cfg.batch_size]
                    _, gw, gb = loss_and_grad(w, b, z[idx], targets[idx])
                    vw = cfg.momentum * vw - cfg.learning_rate * gw
                    vb = cfg.momentum * vb - cfg.learning_rate * gb
                    w = w + vw
                    b = b + vb
                loss = loss_and_grad(w, b, z, targets)[0]
        except (NumericError, FloatingPointError) as exc:
            raise DivergenceError(f"training diverged in epoch {epoch}: {exc}") from exc
        if not math.isfinite(loss):
            raise DivergenceError(f"training diverged in epoch {epoch}: loss {loss}")
        losses.append(loss)
        log.info("epoch %d mean loss %.6f", epoch, loss)
        if on_epoch is not None:
            on_epoch(epoch, loss)
    return TrainResult(GeomPairModel(w, b, means, stds), losses)


def accuracy(model: GeomPairModel, xs, labels) -> float:
    pred = (model.probs(np.asarray(xs))[:, 0] >= 0.5).astype(int)
    return float(np.mean(pred == np.asarray(labels)))


# ------------------------------------------------------------- prediction

class PairScorer(Protocol):
    def __call__(self, record: ImageRecord, pair: CandidatePair) -> float:
        """Probability that the pair is a carrier/firearm pair."""


class ModelScorer:
    """Scores pairs with a trained :class:`GeomPairModel`."""

    def __init__(self, model: GeomPairModel):
        self.model = model

    def __call__(self, record: ImageRecord, pair: CandidatePair) -> float:
        feats = extract_features(
            pair, poses_of_human(record, pair.human_index), (record.width, record.height),
            record.humans[pair.human_index].score, record.firearms[pair.firearm_index].score)
        return score_pair(self.model, feats).p_carried


class PredictionScorer:
    """Scores pairs from an external prediction file.

    A pair takes the score of the prediction with the same image, class and
    (rounded) boxes; unlisted pairs score 0.
    """

    def __init__(self, preds: Iterable[PairPrediction], decimals: int = 6):
        self.decimals = decimals
        self._scores: dict[tuple, float] = {}
        for p in preds:
            key = self._key(p.image_id, p.human_bbox, p.firearm_bbox, p.firearm_class)
            self._scores[key] = max(self._scores.get(key, 0.0), p.score)

    def _key(self, image_id: str, human: Box, firearm: Box, cls: str) -> tuple:
        r = self.decimals
        return (image_id, tuple(round(v, r) for v in human.as_tuple()),
                tuple(round(v, r) for v in firearm.as_tuple()), cls)

    def __call__(self, record: ImageRecord, pair: CandidatePair) -> float:
        key = self._key(record.image_id, pair.human_bbox, pair.firearm_bbox, pair.firearm_class)
        return self._scores.get(key, 0.0)


def hfpd_predict(record: ImageRecord, scorer: PairScorer, threshold: float = 0.5) -> list[PairPrediction]:
    """Score every human x firearm pair and keep those at or above ``threshold``."""
    preds = []
    for pair in enumerate_pairs(record):
        try:
            s = float(scorer(record, pair))
        except Exception as exc:
            raise ScoringError(record.image_id, pair, exc) from exc
        if s >= threshold:
            preds.append(PairPrediction(record.image_id, pair.human_bbox, pair.firearm_bbox,
                                        pair.firearm_class, s))
    return preds
