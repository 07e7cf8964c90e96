import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcmtrack.core import BBox, bbox_iou
from rcmtrack.metrics import (
    HOTA_ALPHAS,
    TrajectorySet,
    UndefinedMetric,
    compute_clearmot,
    compute_hota,
    compute_idf1,
    evaluate,
    format_table,
    frame_match,
    report_items,
)


def ts(rows):
    """Rows of (frame, id, x, y, w, h), class 1."""
    return TrajectorySet.from_rows((f, i, 1, x, y, w, h) for f, i, x, y, w, h in rows)


def best_matching(iou: np.ndarray, alpha: float) -> list[tuple[int, int]]:
    """Exhaustive maximum-total-IoU matching among pairs with IoU >= alpha."""
    n, m = iou.shape
    best, best_pairs = -1.0, []
    for k in range(min(n, m), -1, -1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                pairs = list(zip(rows, cols))
                if any(iou[i, j] < alpha - 1e-12 for i, j in pairs):
                    continue
                total = sum(iou[i, j] for i, j in pairs)
                if total > best + 1e-12:
                    best, best_pairs = total, pairs
    return best_pairs


def reference_hota(gt: TrajectorySet, pred: TrajectorySet) -> float:
    """HOTA straight from its definition, one threshold at a time."""
    n_gt, n_pred = gt.total, pred.total
    gt_len: dict[int, int] = {}
    pr_len: dict[int, int] = {}
    for _, i, *_ in gt.rows():
        gt_len[i] = gt_len.get(i, 0) + 1
    for _, i, *_ in pred.rows():
        pr_len[i] = pr_len.get(i, 0) + 1
    scores = []
    for alpha in HOTA_ALPHAS:
        tps = []
        for f in sorted(set(gt.frames) | set(pred.frames)):
            g, p = gt.frames.get(f), pred.frames.get(f)
            if g is None or p is None:
                continue
            iou = np.array([[bbox_iou(BBox(*a), BBox(*b)) for b in p.boxes] for a in g.boxes])
            tps += [(int(g.ids[i]), int(p.ids[j])) for i, j in best_matching(iou, alpha)]
        if not tps:
            scores.append(0.0)
            continue
        tp = len(tps)
        deta = tp / (tp + (n_gt - tp) + (n_pred - tp))
        assa = 0.0
        for gi, pi in tps:
            tpa = tps.count((gi, pi))
            assa += tpa / (gt_len[gi] + pr_len[pi] - tpa)
        scores.append(math.sqrt(deta * assa / tp))
    return sum(scores) / len(scores)


# --- frame_match --------------------------------------------------------------------


def test_frame_match_identical():
    b = np.array([[0, 0, 10, 10], [50, 50, 10, 10]], float)
    assert frame_match(b, b, 0.5) == [(0, 0), (1, 1)]


def test_frame_match_disjoint():
    assert frame_match(np.array([[0, 0, 10, 10.0]]), np.array([[50, 50, 10, 10.0]]), 0.5) == []


def test_frame_match_prefers_higher_iou():
    # pred (0,0,10,10); gt A IoU 0.6, gt B IoU 0.8
    gt = np.array([[0, 0, 10, 6], [0, 0, 10, 8]], float)
    pred = np.array([[0, 0, 10, 10]], float)
    assert frame_match(gt, pred, 0.5) == [(1, 0)]


# --- CLEAR --------------------------------------------------------------------------


def test_clear_perfect():
    gt = ts([(f, 1, 10 * f, 0, 20, 20) for f in range(1, 6)])
    mota, fp, fn, idsw = compute_clearmot(gt, gt)
    assert (mota, fp, fn, idsw) == (1.0, 0, 0, 0)


def test_clear_one_miss_in_ten():
    gt = ts([(f, 1, 0, 0, 20, 20) for f in range(1, 11)])
    pred = ts([(f, 5, 0, 0, 20, 20) for f in range(1, 10)])
    mota, fp, fn, idsw = compute_clearmot(gt, pred)
    assert (fp, fn, idsw) == (0, 1, 0)
    assert mota == pytest.approx(0.9, abs=1e-12)


def test_clear_single_swap():
    gt = ts([(f, 1, 0, 0, 20, 20) for f in (1, 2, 3)])
    pred = ts([(1, 7, 0, 0, 20, 20), (2, 7, 0, 0, 20, 20), (3, 8, 0, 0, 20, 20)])
    assert compute_clearmot(gt, pred)[3] == 1


def test_clear_carry_over_prefers_previous_identity():
    # frame 2: a better-overlapping newcomer does not steal the continuing match
    gt = ts([(1, 1, 0, 0, 20, 20), (2, 1, 0, 0, 20, 20)])
    pred = ts([(1, 7, 0, 0, 20, 16), (2, 7, 0, 0, 20, 16), (2, 8, 0, 0, 20, 20)])
    mota, fp, fn, idsw = compute_clearmot(gt, pred)
    assert (fp, fn, idsw) == (1, 0, 0)


def test_clear_negative_mota():
    gt = ts([(1, 1, 0, 0, 20, 20)])
    pred = ts([(1, 2, 100, 100, 20, 20), (1, 3, 200, 200, 20, 20)])
    mota, fp, fn, _ = compute_clearmot(gt, pred)
    assert (fp, fn) == (2, 1) and mota == -2.0


def test_clear_requires_ground_truth():
    with pytest.raises(UndefinedMetric):
        compute_clearmot(ts([]), ts([(1, 1, 0, 0, 5, 5)]))


# --- IDF1 ---------------------------------------------------------------------------


def test_idf1_perfect():
    gt = ts([(f, 1, 0, 0, 20, 20) for f in range(1, 6)])
    assert compute_idf1(gt, gt) == 1.0


def test_idf1_empty_predictions():
    assert compute_idf1(ts([(1, 1, 0, 0, 20, 20)]), ts([])) == 0.0


def test_idf1_half_covered_by_each_of_two_ids():
    gt = ts([(f, 1, 0, 0, 20, 20) for f in range(1, 11)])
    pred = ts([(f, 3 if f <= 5 else 4, 0, 0, 20, 20) for f in range(1, 11)])
    assert compute_idf1(gt, pred) == pytest.approx(0.5, abs=1e-12)


def test_idf1_requires_some_data():
    with pytest.raises(UndefinedMetric):
        compute_idf1(ts([]), ts([]))


# --- HOTA ---------------------------------------------------------------------------


def test_hota_perfect():
    gt = ts([(f, i, 40 * i, 0, 20, 20) for f in range(1, 4) for i in (1, 2)])
    assert compute_hota(gt, gt) == (1.0, 1.0, 1.0)


def test_hota_single_pair_iou_0_6():
    gt = ts([(1, 1, 0, 0, 10, 10)])
    pred = ts([(1, 9, 0, 0, 10, 6)])
    assert compute_hota(gt, pred)[0] == pytest.approx(12 / 19, abs=1e-12)


def test_hota_empty_predictions():
    assert compute_hota(ts([(1, 1, 0, 0, 10, 10)]), ts([])) == (0.0, 0.0, 0.0)


def test_hota_requires_ground_truth():
    with pytest.raises(UndefinedMetric):
        compute_hota(ts([]), ts([(1, 1, 0, 0, 10, 10)]))


# --- properties ---------------------------------------------------------------------

box = st.tuples(st.integers(0, 3), st.integers(-6, 6), st.integers(-6, 6))


@st.composite
def fixtures(draw):
    """Small scenes on a 4-slot grid: per frame, gt and pred boxes near slot centres."""
    n_frames = draw(st.integers(1, 5))
    gt_rows, pred_rows = [], []
    for f in range(1, n_frames + 1):
        for slot in draw(st.sets(st.integers(0, 3), max_size=3)):
            gt_rows.append((f, slot + 1, 40 * slot, 0, 20, 20))
        used = set()
        for pid, dx, dy in draw(st.lists(box, max_size=3)):
            if pid in used:
                continue
            used.add(pid)
            slot = draw(st.integers(0, 3))
            pred_rows.append((f, pid + 10, 40 * slot + dx, dy, 20, 20))
    return ts(gt_rows), ts(pred_rows)


@given(fixtures())
def test_hota_matches_reference_definition(fx):
    gt, pred = fx
    if gt.total == 0:
        return
    assert compute_hota(gt, pred)[0] == pytest.approx(reference_hota(gt, pred), abs=1e-9)


@given(fixtures(), st.permutations(range(10, 14)))
def test_scores_invariant_under_id_relabeling(fx, perm):
    gt, pred = fx
    if gt.total == 0:
        return
    rename = dict(zip(range(10, 14), [p + 100 for p in perm]))
    relabeled = TrajectorySet.from_rows((f, rename[i], c, x, y, w, h) for f, i, c, x, y, w, h in pred.rows())
    a, b = evaluate(gt, pred), evaluate(gt, relabeled)
    assert (a.hota, a.mota, a.idf1, a.idsw) == pytest.approx((b.hota, b.mota, b.idf1, b.idsw), abs=1e-12)


@given(fixtures(), st.randoms(use_true_random=False))
def test_deta_invariant_under_frame_permutation(fx, rnd):
    gt, pred = fx
    if gt.total == 0:
        return
    frames = sorted(set(gt.frames) | set(pred.frames))
    shuffled = frames[:]
    rnd.shuffle(shuffled)
    move = dict(zip(frames, shuffled))
    g2 = TrajectorySet.from_rows((move[f], *r) for f, *r in gt.rows())
    p2 = TrajectorySet.from_rows((move[f], *r) for f, *r in pred.rows())
    assert compute_hota(gt, pred)[1] == pytest.approx(compute_hota(g2, p2)[1], abs=1e-12)


@given(fixtures())
def test_score_bounds(fx):
    gt, pred = fx
    if gt.total == 0:
        return
    r = evaluate(gt, pred)
    assert 0.0 <= r.hota <= 1.0 and 0.0 <= r.idf1 <= 1.0 and r.mota <= 1.0
    assert r.fp >= 0 and r.fn >= 0 and r.idsw >= 0
    assert r.fp + (gt.total - r.fn) == pred.total


# --- reporting ----------------------------------------------------------------------


def test_per_class_breakdown_filters_both_sides():
    gt = TrajectorySet.from_rows([(1, 1, 1, 0, 0, 10, 10), (1, 2, 2, 50, 0, 10, 10)])
    pred = TrajectorySet.from_rows([(1, 5, 1, 0, 0, 10, 10), (1, 6, 1, 50, 0, 10, 10)])
    r = evaluate(gt, pred, per_class=True)
    assert r.per_class["ship"] == pytest.approx(math.sqrt(0.5))
    assert r.per_class["boat"] == 0.0
    assert r.per_class["vessel"] is None


def test_non_strict_evaluation_reports_undefined_as_nan():
    r = evaluate(ts([]), ts([(1, 1, 0, 0, 5, 5)]), strict=False)
    assert math.isnan(r.hota) and math.isnan(r.mota) and r.fp == 1
    with pytest.raises(UndefinedMetric):
        evaluate(ts([]), ts([]))


def test_table_and_key_values():
    gt = ts([(1, 1, 0, 0, 10, 10)])
    r = evaluate(gt, gt)
    table = format_table(r, "demo").splitlines()
    assert table[0].split() == ["Tracker", "HOTA", "MOTA", "IDF1", "IDSW"]
    assert table[1].split() == ["demo", "1.00000", "1.00000", "1.00000", "0"]
    assert dict(report_items(r))["hota"] == "1.000000"
