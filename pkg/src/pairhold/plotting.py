"""Figures: per-image box overlays and precision-recall curves.

Everything renders through the Agg/SVG backends with a fixed hash salt and
no date metadata so repeated runs write byte-identical files.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .geometry import Box, union_box  # noqa: E402
from .records import ImageRecord, PairPrediction  # noqa: E402

HUMAN_COLOR = "blue"
FIREARM_COLOR = "green"
PAIR_COLOR = "red"
CURVE_COLORS = {"gun": "tab:orange", "rifle": "tab:green", "all": "tab:blue"}

_RC = {
    "svg.hashsalt": "pairhold",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 10,
}
_SVG_META = {"Date": None, "Creator": None}


def _rect(ax, box: Box, color: str, lw: float = 1.5, ls: str = "-"):
    ax.add_patch(Rectangle((box.x1, box.y1), box.width, box.height, fill=False,
                           edgecolor=color, linewidth=lw, linestyle=ls))


def overlay_figure(record: ImageRecord, preds: Sequence[PairPrediction] = ()):
    """Humans in blue, firearms in green, predicted carried pair boxes in red."""
    with plt.rc_context(_RC):
        scale = 6.0 / max(record.width, record.height)
        fig, ax = plt.subplots(figsize=(record.width * scale, record.height * scale))
        ax.set_xlim(0, record.width)
        ax.set_ylim(record.height, 0)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        for h in record.humans:
            _rect(ax, h.bbox, HUMAN_COLOR)
        for f in record.firearms:
            _rect(ax, f.bbox, FIREARM_COLOR)
        for p in preds:
            _rect(ax, union_box(p.human_bbox, p.firearm_bbox), PAIR_COLOR, lw=1.0, ls="--")
            ax.text(p.human_bbox.x1, p.human_bbox.y1, f"{p.score:.2f}", color=PAIR_COLOR,
                    fontsize=7, va="bottom")
        ax.set_title(record.image_id)
        fig.tight_layout()
    return fig


def save_svg(fig, path: str | os.PathLike) -> None:
    with plt.rc_context(_RC):
        fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def write_overlays(records: Iterable[ImageRecord], preds: Iterable[PairPrediction],
                   out_dir: str | os.PathLike) -> list[str]:
    """One SVG per image, named ``<image_id>.svg``."""
    os.makedirs(out_dir, exist_ok=True)
    by_image: dict[str, list[PairPrediction]] = {}
    for p in preds:
        by_image.setdefault(p.image_id, []).append(p)
    paths = []
    for rec in records:
        path = os.path.join(out_dir, f"{rec.image_id}.svg")
        save_svg(overlay_figure(rec, by_image.get(rec.image_id, [])), path)
        paths.append(path)
    return paths


def pr_figure(report, title: str = "Carried-pair precision-recall"):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        labels = {"gun": "AP_Ghold", "rifle": "AP_Rhold", "all": "AP_hold"}
        for key, res in report.per_class.items():
            if not res.recall:
                continue
            ax.step([0.0] + res.recall, [1.0] + res.precision, where="post",
                    color=CURVE_COLORS.get(key), label=f"{labels.get(key, key)} = {100 * res.ap:.1f}")
        ax.set_xlim(0, 1.0)
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title(title)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="lower left", frameon=False)
        fig.tight_layout()
    return fig


def save_pr_figure(report, path: str | os.PathLike) -> None:
    fig = pr_figure(report)
    ext = os.path.splitext(str(path))[1].lower().lstrip(".") or "svg"
    with plt.rc_context(_RC):
        meta = _SVG_META if ext == "svg" else None
        fig.savefig(path, format=ext, metadata=meta)
    plt.close(fig)


def loss_figure(losses: Sequence[float], path: str | os.PathLike) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(range(len(losses)), losses, marker="o", markersize=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean cross-entropy")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
