"""CLEAR-MOT, IDF1 and HOTA over ground-truth and predicted trajectory sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import ObjectClass, iou_matrix

HOTA_ALPHAS = tuple(round(0.05 * k, 2) for k in range(1, 20))
EPS = np.finfo(float).eps


class UndefinedMetric(ValueError):
    """Metric has no defined value for the inputs (e.g. no ground truth)."""


@dataclass
class FrameBoxes:
    ids: np.ndarray
    classes: np.ndarray
    boxes: np.ndarray  # (n, 4) tlwh


@dataclass
class TrajectorySet:
    frames: dict[int, FrameBoxes] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, int, int, float, float, float, float]]) -> "TrajectorySet":
        """Rows of (frame, id, class, x, y, w, h)."""
        grouped: dict[int, list] = {}
        for r in rows:
            grouped.setdefault(int(r[0]), []).append(r)
        frames = {}
        for f, rs in grouped.items():
            ids = np.array([r[1] for r in rs], dtype=np.int64)
            if len(np.unique(ids)) != len(ids):
                raise ValueError(f"duplicate id in frame {f}")
            frames[f] = FrameBoxes(
                ids,
                np.array([int(r[2]) for r in rs], dtype=np.int64),
                np.array([r[3:7] for r in rs], dtype=np.float64).reshape(-1, 4),
            )
        return cls(dict(sorted(frames.items())))

    def rows(self):
        for f, fb in self.frames.items():
            for i in range(len(fb.ids)):
                yield (f, int(fb.ids[i]), int(fb.classes[i]), *map(float, fb.boxes[i]))

    def filter_class(self, class_id: int) -> "TrajectorySet":
        out = {}
        for f, fb in self.frames.items():
            m = fb.classes == int(class_id)
            if m.any():
                out[f] = FrameBoxes(fb.ids[m], fb.classes[m], fb.boxes[m])
        return TrajectorySet(out)

    @property
    def total(self) -> int:
        return sum(len(fb.ids) for fb in self.frames.values())


@dataclass(frozen=True)
class EvalReport:
    hota: float
    deta: float
    assa: float
    mota: float
    idf1: float
    idsw: int
    fp: int
    fn: int
    per_class: dict[str, float | None] = field(default_factory=dict)


def frame_match(gt_boxes: np.ndarray, pred_boxes: np.ndarray, alpha: float) -> list[tuple[int, int]]:
    """One-to-one matches maximising total IoU among pairs with IoU >= alpha."""
    return _match_from_iou(iou_matrix(gt_boxes, pred_boxes), alpha)


def _match_from_iou(iou: np.ndarray, alpha: float) -> list[tuple[int, int]]:
    if iou.size == 0:
        return []
    allowed = iou >= alpha - EPS
    if not allowed.any():
        return []
    w = np.where(allowed, iou, 0.0)
    r, c = linear_sum_assignment(w, maximize=True)
    return [(int(i), int(j)) for i, j in zip(r, c) if allowed[i, j]]


def _aligned(gt: TrajectorySet, pred: TrajectorySet):
    """Per frame (gt FrameBoxes | None, pred FrameBoxes | None, IoU matrix) over all frames."""
    empty = FrameBoxes(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 4)))
    for f in sorted(set(gt.frames) | set(pred.frames)):
        g = gt.frames.get(f, empty)
        p = pred.frames.get(f, empty)
        yield f, g, p, iou_matrix(g.boxes, p.boxes)


def compute_clearmot(gt: TrajectorySet, pred: TrajectorySet, alpha: float = 0.5) -> tuple[float, int, int, int]:
    """Return (mota, fp, fn, idsw).

    Correspondences from the previous frame are kept when still above the IoU
    threshold before the remaining boxes are matched optimally.
    """
    gt_total = gt.total
    if gt_total == 0:
        raise UndefinedMetric("no ground truth")
    fp = fn = idsw = tp = 0
    prev_any: dict[int, int] = {}
    prev_step: dict[int, int] = {}
    for _, g, p, iou in _aligned(gt, pred):
        if len(g.ids) == 0:
            fp += len(p.ids)
            continue
        if len(p.ids) == 0:
            fn += len(g.ids)
            continue
        carry = np.array(
            [[prev_step.get(int(gi), None) == int(pi) for pi in p.ids] for gi in g.ids], dtype=bool
        )
        score = 1000.0 * carry + iou
        score[iou < alpha - EPS] = 0.0
        r, c = linear_sum_assignment(score, maximize=True)
        ok = score[r, c] > EPS
        r, c = r[ok], c[ok]
        matched_g = g.ids[r]
        matched_p = p.ids[c]
        for gi, pi in zip(matched_g.tolist(), matched_p.tolist()):
            if gi in prev_any and prev_any[gi] != pi:
                idsw += 1
            prev_any[gi] = pi
        prev_step = dict(zip(matched_g.tolist(), matched_p.tolist()))
        tp += len(r)
        fn += len(g.ids) - len(r)
        fp += len(p.ids) - len(r)
    mota = (tp - fp - idsw) / gt_total
    return mota, fp, fn, idsw


def compute_idf1(gt: TrajectorySet, pred: TrajectorySet, alpha: float = 0.5) -> float:
    n_gt, n_pred = gt.total, pred.total
    if n_gt == 0 and n_pred == 0:
        raise UndefinedMetric("no ground truth and no predictions")
    gid = {v: k for k, v in enumerate(sorted({int(i) for fb in gt.frames.values() for i in fb.ids}))}
    pid = {v: k for k, v in enumerate(sorted({int(i) for fb in pred.frames.values() for i in fb.ids}))}
    overlap = np.zeros((len(gid), len(pid)))
    for _, g, p, iou in _aligned(gt, pred):
        if iou.size == 0:
            continue
        gi, pi = np.nonzero(iou >= alpha - EPS)
        if len(gi):
            np.add.at(overlap, ([gid[int(x)] for x in g.ids[gi]], [pid[int(x)] for x in p.ids[pi]]), 1)
    idtp = 0.0
    if overlap.size:
        r, c = linear_sum_assignment(overlap, maximize=True)
        idtp = float(overlap[r, c].sum())
    idfn = n_gt - idtp
    idfp = n_pred - idtp
    return 2 * idtp / (2 * idtp + idfp + idfn)


def compute_hota(gt: TrajectorySet, pred: TrajectorySet) -> tuple[float, float, float]:
    """Return (hota, deta, assa), each averaged over the 19 localisation thresholds."""
    n_gt = gt.total
    if n_gt == 0:
        raise UndefinedMetric("no ground truth")
    n_pred = pred.total
    gid = {v: k for k, v in enumerate(sorted({int(i) for fb in gt.frames.values() for i in fb.ids}))}
    pid = {v: k for k, v in enumerate(sorted({int(i) for fb in pred.frames.values() for i in fb.ids}))}
    gt_count = np.zeros(len(gid))
    pred_count = np.zeros(len(pid))
    n_a = len(HOTA_ALPHAS)
    pair_counts = np.zeros((n_a, len(gid), len(pid)))

    for _, g, p, iou in _aligned(gt, pred):
        gidx = np.array([gid[int(x)] for x in g.ids], dtype=np.int64)
        pidx = np.array([pid[int(x)] for x in p.ids], dtype=np.int64)
        np.add.at(gt_count, gidx, 1)
        np.add.at(pred_count, pidx, 1)
        if iou.size == 0:
            continue
        matches: list[tuple[int, int]] = []
        for a, alpha in enumerate(HOTA_ALPHAS):
            # an optimum over a larger allowed set stays optimal while all its pairs survive
            if a == 0 or any(iou[i, j] < alpha - EPS for i, j in matches):
                matches = _match_from_iou(iou, alpha)
            if not matches:
                break
            mi = np.array(matches)
            np.add.at(pair_counts[a], (gidx[mi[:, 0]], pidx[mi[:, 1]]), 1)

    hotas, detas, assas = [], [], []
    for a in range(n_a):
        pc = pair_counts[a]
        tp = pc.sum()
        fn = n_gt - tp
        fp = n_pred - tp
        deta = tp / (tp + fn + fp) if tp > 0 else 0.0
        if tp > 0:
            denom = gt_count[:, None] + pred_count[None, :] - pc
            ass = np.divide(pc, denom, out=np.zeros_like(pc), where=denom > 0)
            assa = float((pc * ass).sum() / tp)
        else:
            assa = 0.0
        detas.append(deta)
        assas.append(assa)
        hotas.append(math.sqrt(deta * assa))
    return float(np.mean(hotas)), float(np.mean(detas)), float(np.mean(assas))


def evaluate(gt: TrajectorySet, pred: TrajectorySet, per_class: bool = False, strict: bool = True) -> EvalReport:
    """Full report; with strict=False undefined scores become NaN instead of raising."""
    nan = float("nan")
    try:
        hota, deta, assa = compute_hota(gt, pred)
        mota, fp, fn, idsw = compute_clearmot(gt, pred)
    except UndefinedMetric:
        if strict:
            raise
        hota = deta = assa = mota = nan
        fp, fn, idsw = pred.total, 0, 0
    try:
        idf1 = compute_idf1(gt, pred)
    except UndefinedMetric:
        if strict:
            raise
        idf1 = nan
    classes: dict[str, float | None] = {}
    if per_class:
        for cls in ObjectClass:
            g = gt.filter_class(cls)
            try:
                classes[cls.label] = compute_hota(g, pred.filter_class(cls))[0]
            except UndefinedMetric:
                classes[cls.label] = None
    return EvalReport(hota, deta, assa, mota, idf1, idsw, fp, fn, classes)


def _fmt(v: float | None, digits: int = 5) -> str:
    return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"


def format_table(report: EvalReport, name: str = "tracker") -> str:
    cols = ["Tracker"]
    vals = [name]
    for label, v in report.per_class.items():
        cols.append(label.capitalize())
        vals.append(_fmt(v))
    cols += ["HOTA", "MOTA", "IDF1", "IDSW"]
    vals += [_fmt(report.hota), _fmt(report.mota), _fmt(report.idf1), str(report.idsw)]
    widths = [max(len(c), len(v)) for c, v in zip(cols, vals)]
    line1 = "  ".join(c.rjust(w) if k else c.ljust(w) for k, (c, w) in enumerate(zip(cols, widths)))
    line2 = "  ".join(v.rjust(w) if k else v.ljust(w) for k, (v, w) in enumerate(zip(vals, widths)))
    return f"{line1}\n{line2}\n"


def report_items(report: EvalReport) -> list[tuple[str, str]]:
    items = [
        ("hota", _fmt(report.hota, 6)),
        ("deta", _fmt(report.deta, 6)),
        ("assa", _fmt(report.assa, 6)),
        ("mota", _fmt(report.mota, 6)),
        ("idf1", _fmt(report.idf1, 6)),
        ("idsw", str(report.idsw)),
        ("fp", str(report.fp)),
        ("fn", str(report.fn)),
    ]
    items += [(f"hota_{k}", _fmt(v, 6)) for k, v in report.per_class.items()]
    return items
