"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 config error,
4 numeric divergence. ``PAIRHOLD_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Sequence

import numpy as np

from . import baselines as bl
from .classifier import (DegenerateDataError, DivergenceError, ModelScorer, NumericError, PredictionScorer,
                         TrainConfig, build_training_set, hfpd_predict, load_model, save_model, train)
from .evaluation import EvalError, classification_accuracy, evaluate, firearm_labels, format_table
from .fixtures import generate
from .geometry import InvalidGeometryError, round_half_away
from .pairing import DegenerateCropError, crop_spec, enumerate_pairs
from .records import (DatasetError, ImageRecord, load_dataset, load_predictions, read_dataset,
                      save_dataset, save_predictions, write_jsonl)

log = logging.getLogger("pairhold")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3, 4


class ConfigError(Exception):
    pass


def split_records(records: Sequence[ImageRecord], ratio: float, seed: int
                  ) -> tuple[list[ImageRecord], list[ImageRecord]]:
    """Seeded image-level train/test split; both parts keep file order."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"--split must lie in (0, 1), got {ratio}")
    n = len(records)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = round_half_away(ratio * n)
    if n > 1:
        n_train = min(max(n_train, 1), n - 1)
    train_idx = set(int(i) for i in perm[:n_train])
    return ([r for i, r in enumerate(records) if i in train_idx],
            [r for i, r in enumerate(records) if i not in train_idx])


def _subset(args, records):
    if args.subset == "all":
        return records
    if args.seed is None:
        raise ConfigError("--seed is required with --subset train/test")
    tr, te = split_records(records, args.split, args.seed)
    return tr if args.subset == "train" else te


def _unit(name):
    def check(text):
        v = float(text)
        if not 0.0 <= v <= 1.0:
            raise argparse.ArgumentTypeError(f"{name} must lie in [0, 1], got {v}")
        return v
    return check


def _add_split(p, subset=True):
    p.add_argument("--seed", type=int, default=None, help="seed for the image-level split")
    p.add_argument("--split", type=float, default=0.8, help="train fraction of images (default 0.8)")
    if subset:
        p.add_argument("--subset", choices=("all", "train", "test"), default="all",
                       help="restrict to one side of the seeded split")


# ----------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    records, problems = read_dataset(args.dataset)
    for v in problems:
        print(str(v))
    if args.out:
        write_jsonl((v.to_dict() for v in problems), args.out)
    errors = [v for v in problems if not v.is_warning]
    print(f"{len(records)} usable record(s), {len(errors)} error(s), {len(problems) - len(errors)} warning(s)")
    return EXIT_INVALID if errors else EXIT_OK


def cmd_pair(args) -> int:
    records = _subset(args, load_dataset(args.dataset))
    rows, total = [], 0
    for rec in records:
        items = []
        for p in enumerate_pairs(rec, margin=args.margin):
            item = {"human_index": p.human_index, "firearm_index": p.firearm_index,
                    "firearm_class": p.firearm_class, "paired_bbox": [round(v, 6) for v in p.paired_bbox.as_tuple()]}
            try:
                crop, w, h, s = crop_spec(p, rec.width, rec.height, args.long_side)
                item.update(crop_bbox=[round(v, 6) for v in crop.as_tuple()], scaled_size=[w, h],
                            scale=round(s, 9))
            except DegenerateCropError:
                item.update(crop_bbox=None, scaled_size=None, scale=None)
            items.append(item)
        total += len(items)
        rows.append({"image_id": rec.image_id, "pairs": items})
    if args.out:
        write_jsonl(rows, args.out)
    print(f"{total} candidate pair(s) over {len(records)} image(s)")
    return EXIT_OK


def cmd_baseline(args) -> int:
    records = _subset(args, load_dataset(args.dataset))
    preds, flag_rows = [], []
    pred_flags, gt_flags, classes = [], [], []
    for rec in records:
        if args.strategy == "ohfb":
            cfg = bl.OhfbConfig(args.overlap_metric, args.min_overlap)
            preds.extend(bl.ohfb_associate(rec, cfg))
            flags = [hi is not None for _, hi, _ in bl.ohfb_match(rec, cfg)]
        elif args.strategy == "hifb":
            flags = bl.hifb_flags(rec, bl.HifbConfig(args.alpha))
        else:
            flags, p = bl.bcfd_run(rec, bl.BcfdConfig(args.beta))
            preds.extend(p)
        labels = firearm_labels(rec)
        for fi, (f, flag, lab) in enumerate(zip(rec.firearms, flags, labels)):
            flag_rows.append({"image_id": rec.image_id, "firearm_index": fi, "firearm_class": f.cls,
                              "carried": int(flag), "label": int(lab)})
            pred_flags.append(flag)
            gt_flags.append(lab)
            classes.append(f.cls)
    save_predictions(preds, args.out)
    if args.flags:
        write_jsonl(flag_rows, args.flags)
    gun, rifle, overall = classification_accuracy(pred_flags, gt_flags, classes)
    print(f"{args.strategy}: {len(preds)} prediction(s); carried accuracy "
          f"gun {100 * gun:.1f}  rifle {100 * rifle:.1f}  overall {100 * overall:.1f}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.seed is None:
        raise ConfigError("--seed is required for train")
    records = load_dataset(args.dataset)
    if args.split < 1.0:
        records, _ = split_records(records, args.split, args.seed)
    try:
        cfg = TrainConfig(args.lr, args.momentum, args.epochs, args.batch_size, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    xs, ys = build_training_set(records)
    try:
        result = train(xs, ys, cfg)
    except DegenerateDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    save_model(result.model, args.out)
    log_path = args.log or f"{args.out}.log.jsonl"
    write_jsonl(({"epoch": e, "mean_loss": round(l, 9)} for e, l in enumerate(result.losses)), log_path)
    if args.figure:
        from .plotting import loss_figure
        loss_figure(result.losses, args.figure)
    print(f"trained on {len(records)} image(s), {len(ys)} pair(s) ({int(ys.sum())} carried); "
          f"loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    records = _subset(args, load_dataset(args.dataset))
    if args.model:
        scorer = ModelScorer(load_model(args.model))
    else:
        scorer = PredictionScorer(load_predictions(args.scores))
    preds = [p for rec in records for p in hfpd_predict(rec, scorer, args.threshold)]
    save_predictions(preds, args.out)
    print(f"{len(preds)} carried pair(s) over {len(records)} image(s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    records = _subset(args, load_dataset(args.dataset))
    preds = load_predictions(args.predictions)
    report = evaluate(preds, records, iou_thresh=args.iou, strict=args.strict)
    table = format_table([(args.name, report)], backbone=args.backbone)
    sys.stdout.write(table)
    if args.out:
        report.save(args.out)
    if args.table:
        with open(args.table, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table)
    if args.figure:
        from .plotting import save_pr_figure
        save_pr_figure(report, args.figure)
    return EXIT_OK


def cmd_overlay(args) -> int:
    from .plotting import write_overlays
    records = _subset(args, load_dataset(args.dataset))
    preds = load_predictions(args.predictions) if args.predictions else []
    paths = write_overlays(records, preds, args.out)
    print(f"wrote {len(paths)} overlay(s) to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    save_dataset(generate(args.images, args.seed, args.occlusion), args.out)
    print(f"wrote {args.images} synthetic image record(s) to {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairhold", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset file and report violations")
    p.add_argument("dataset")
    p.add_argument("--out", help="write violations as JSON lines")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("pair", help="dump human x firearm candidate pairs")
    p.add_argument("dataset")
    p.add_argument("--out")
    p.add_argument("--margin", type=float, default=0.0, help="paired-box padding in pixels")
    p.add_argument("--long-side", type=float, default=600.0)
    _add_split(p)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("baseline", help="run a rule-based baseline")
    p.add_argument("dataset")
    p.add_argument("--strategy", choices=("hifb", "bcfd", "ohfb"), required=True)
    p.add_argument("--alpha", type=_unit("alpha"), default=0.3)
    p.add_argument("--beta", type=int, default=1)
    p.add_argument("--overlap-metric", choices=bl.OVERLAP_METRICS, default="enclosure")
    p.add_argument("--min-overlap", type=_unit("min-overlap"), default=0.5)
    p.add_argument("--out", required=True, help="prediction file")
    p.add_argument("--flags", help="per-firearm carried flags (JSON lines)")
    _add_split(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("train", help="train the pair classifier")
    p.add_argument("dataset")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--log", help="per-epoch loss log (default: <out>.log.jsonl)")
    p.add_argument("--figure", help="loss curve SVG")
    p.add_argument("--seed", type=int, default=None, help="seed for split and shuffling (required)")
    p.add_argument("--split", type=float, default=0.8,
                   help="train fraction of images; 1.0 trains on everything (default 0.8)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score candidate pairs")
    p.add_argument("dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model file from `pairhold train`")
    src.add_argument("--scores", help="external pair scores in the prediction file format")
    p.add_argument("--threshold", type=_unit("threshold"), default=0.5)
    p.add_argument("--out", required=True)
    _add_split(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="AP_Ghold / AP_Rhold / AP_hold of a prediction file")
    p.add_argument("predictions")
    p.add_argument("dataset")
    p.add_argument("--iou", type=_unit("iou"), default=0.5)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True)
    mode.add_argument("--lenient", dest="strict", action="store_false")
    p.add_argument("--out", help="report document (JSON)")
    p.add_argument("--table", help="write the text table here too")
    p.add_argument("--figure", help="precision-recall figure (.svg, .png or .pdf)")
    p.add_argument("--name", default="HFPD", help="method name for the table row")
    p.add_argument("--backbone", default="-", help="backbone column for the table row")
    _add_split(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("overlay", help="draw boxes and predicted pairs to SVG files")
    p.add_argument("dataset")
    p.add_argument("predictions", nargs="?")
    p.add_argument("--out", required=True, help="output directory")
    _add_split(p)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--images", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--occlusion", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("PAIRHOLD_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DatasetError as exc:
        for v in exc.errors:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, bl.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NumericError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, InvalidGeometryError, ValueError) as exc:
        code = EXIT_IO if isinstance(exc, OSError) else EXIT_INVALID
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
