import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pairhold.evaluation import (EvalError, average_precision, classification_accuracy, evaluate,
                                 firearm_labels, format_table, match_pairs)
from pairhold.geometry import Box
from pairhold.records import FirearmDetection, GroundTruthPair, ImageRecord, PairPrediction

import oracles

H1, F1 = Box(0, 0, 10, 20), Box(8, 8, 12, 12)
H2, F2 = Box(30, 0, 40, 20), Box(28, 5, 45, 9)


def gt(h, f, cls="gun", carried=1):
    return GroundTruthPair(h, f, cls, carried)


def pred(img, h, f, cls="gun", score=0.9):
    return PairPrediction(img, h, f, cls, score)


def test_exact_prediction_is_tp():
    _, flags, _ = match_pairs([pred("a", H1, F1)], {"a": [gt(H1, F1)]})
    assert flags == [True]


def test_human_box_must_match_too():
    # firearm exact, human IoU 0.3 -> FP
    h_bad = Box(0, 0, 10, 20 * 0.3)
    assert H1.area and abs((h_bad.area / H1.area) - 0.3) < 1e-12
    _, flags, _ = match_pairs([pred("a", h_bad, F1)], {"a": [gt(H1, F1)]})
    assert flags == [False]


def test_duplicates_one_tp():
    preds = [pred("a", H1, F1, score=0.6), pred("a", H1, F1, score=0.8)]
    ranked, flags, taken = match_pairs(preds, {"a": [gt(H1, F1)]})
    assert [p.score for p in ranked] == [0.8, 0.6]
    assert flags == [True, False]
    assert taken["a"] == [0]


def test_class_must_agree_and_not_carried_ignored():
    _, flags, _ = match_pairs([pred("a", H1, F1, "rifle"), pred("a", H2, F2, score=0.5)],
                              {"a": [gt(H1, F1, "gun"), gt(H2, F2, carried=0)]})
    assert flags == [False, False]


def test_unknown_image_strict_and_lenient():
    with pytest.raises(EvalError):
        match_pairs([pred("zzz", H1, F1)], {"a": [gt(H1, F1)]})
    _, flags, _ = match_pairs([pred("zzz", H1, F1)], {"a": [gt(H1, F1)]}, strict=False)
    assert flags == [False]
    with pytest.raises(EvalError):
        evaluate([pred("zzz", H1, F1)], {"a": [gt(H1, F1)]})
    rep = evaluate([pred("zzz", H1, F1)], {"a": [gt(H1, F1)]}, strict=False)
    assert rep.per_class["all"].fp == 1 and rep.ap_hold == 0.0


def test_picks_gt_with_best_min_iou():
    near = Box(0, 0, 10, 19)
    preds = [pred("a", near, F1)]
    gts = {"a": [gt(Box(0, 0, 10, 14), F1), gt(H1, F1)]}
    _, _, taken = match_pairs(preds, gts)
    assert taken["a"] == [None, 0]


@pytest.mark.parametrize("flags,n,expected", [
    ([True], 1, 1.0),
    ([False, True], 1, 0.5),
    ([True, False], 1, 1.0),
    ([], 3, 0.0),
    ([], 0, 1.0),
    ([False], 0, 0.0),
    ([True, False, True, False, False], 3, (1 + 2 / 3) / 3),
])
def test_average_precision_examples(flags, n, expected):
    assert average_precision(flags, n) == pytest.approx(expected, abs=1e-15)
    assert oracles.ap_oracle(flags, n) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=200)
@given(st.lists(st.booleans(), max_size=30), st.integers(0, 10))
def test_average_precision_matches_oracle(flags, extra):
    n = sum(flags) + extra
    assert abs(average_precision(flags, n) - oracles.ap_oracle(flags, n)) <= 1e-12
    assert 0.0 <= average_precision(flags, n) <= 1.0


def test_perfect_predictions():
    gts = {"a": [gt(H1, F1), gt(H2, F2, "rifle")], "b": [gt(H1, F2, "rifle")]}
    preds = [pred(img, g.human_bbox, g.firearm_bbox, g.firearm_class, 1.0) for img, gs in gts.items() for g in gs]
    rep = evaluate(preds, gts)
    assert (rep.ap_ghold, rep.ap_rhold, rep.ap_hold) == (1.0, 1.0, 1.0)
    assert rep.per_class["all"].tp == 3 and rep.per_class["all"].fn == 0


def test_empty_predictions():
    rep = evaluate([], {"a": [gt(H1, F1), gt(H2, F2, "rifle")]})
    assert (rep.ap_ghold, rep.ap_rhold, rep.ap_hold) == (0.0, 0.0, 0.0)


def test_mixed_two_image_fixture():
    gts = {"a": [gt(H1, F1), gt(H2, F2, "rifle")], "b": [gt(H1, F1)]}
    preds = [
        pred("a", H1, F1, "gun", 0.9),      # TP
        pred("b", H2, F2, "gun", 0.8),      # FP: wrong boxes
        pred("a", H2, F2, "rifle", 0.7),    # TP
        pred("b", H1, F2, "gun", 0.6),      # FP: firearm box wrong
    ]
    rep = evaluate(preds, gts)
    # hand-enumerated: pooled ranking T F T F over 3 GTs -> (1 + 2/3) / 3
    assert rep.ap_hold == pytest.approx(oracles.ap_oracle([True, False, True, False], 3), abs=1e-12)
    assert rep.ap_hold == pytest.approx(5 / 9, abs=1e-12)
    # guns: T F F over 2 GTs -> 1/2; rifles: T over 1 -> 1
    assert rep.ap_ghold == pytest.approx(0.5, abs=1e-12)
    assert rep.ap_rhold == 1.0
    assert (rep.per_class["all"].tp, rep.per_class["all"].fp, rep.per_class["all"].fn) == (2, 2, 1)


def test_accepts_records_and_order_invariance():
    rec = ImageRecord("a", 100, 100, gt_pairs=(gt(H1, F1), gt(H2, F2)))
    preds = [pred("a", H1, F1, score=0.5), pred("a", H2, F2, score=0.5), pred("a", H2, F1, score=0.5)]
    r1 = evaluate(preds, [rec])
    r2 = evaluate(preds[::-1], [rec])
    assert r1.to_dict() == r2.to_dict()


def test_report_serialization_and_table(tmp_path):
    rep = evaluate([pred("a", H1, F1, score=1.0)], {"a": [gt(H1, F1)]})
    rep.save(tmp_path / "r.json")
    text = (tmp_path / "r.json").read_text()
    assert text.count("\n") == 1 and '"ap_hold": 1.0' in text
    table = format_table([("HFPD", rep), ("OHFB", evaluate([], {"a": [gt(H1, F1)]}))], "synthetic")
    lines = table.splitlines()
    assert lines[0].split(" | ")[2:] == ["AP_Ghold", "AP_Rhold", "AP_hold"]
    assert [c.strip() for c in lines[2].split("|")] == ["HFPD", "synthetic", "100.0", "100.0", "100.0"]
    assert [c.strip() for c in lines[3].split("|")][2:] == ["0.0", "100.0", "0.0"]


def test_classification_accuracy():
    assert classification_accuracy([1, 0, 1], [1, 0, 1], ["gun", "rifle", "gun"]) == (1.0, 1.0, 1.0)
    assert classification_accuracy([0, 1, 0], [1, 0, 1], ["gun", "rifle", "gun"]) == (0.0, 0.0, 0.0)
    pred_f = [1, 1, 1, 0, 1, 0]
    gt_f = [1, 1, 1, 1, 1, 1]
    cls = ["gun"] * 4 + ["rifle"] * 2
    g, r, o = classification_accuracy(pred_f, gt_f, cls)
    assert (g, r) == (0.75, 0.5) and o == pytest.approx(4 / 6)
    with pytest.raises(ValueError):
        classification_accuracy([1], [1, 0], ["gun"])
    assert math.isnan(classification_accuracy([1], [1], ["gun"])[1])


def test_firearm_labels():
    rec = ImageRecord("a", 100, 100, (), (FirearmDetection(F1, "gun", 0.9), FirearmDetection(F2, "gun", 0.9)),
                      (), (gt(H1, F1), gt(H2, F2, carried=0)))
    assert firearm_labels(rec) == [True, False]
