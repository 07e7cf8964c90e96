"""Matching costs and optimal assignment.

The radar-camera cost combines an IoU distance with a normalised Mahalanobis
distance between a track's radar dynamics memory and a detection's radar
cluster, with hard gates on both terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import BBox, bbox_iou, iou_matrix, wrap_angle, wrap_angles
from .radar import ClusterDynamics

INFEASIBLE = 1.0
DEFAULT_GATE = 0.999

FORGET = 0.9
VAR_V_FLOOR = 0.2**2
VAR_PSI_FLOOR = math.radians(5.0) ** 2
# std growth per frame without a radar observation
SIGMA_V_RATE = 0.01  # m/s
SIGMA_PSI_RATE = math.radians(0.05)
# 1 - exp(-x) rounds to 1.0 for x > ~37; keep the normalised distance below 1
_BELOW_ONE = math.nextafter(1.0, 0.0)


class NoRadarHistory(ValueError):
    """Track has no radar observations yet."""


@dataclass(frozen=True)
class RcmParams:
    alpha: float = 0.7
    lam: float = 1.2
    theta_rcm: float = 0.5
    theta_iou: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha out of [0,1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0.0 < self.theta_rcm <= 1.0:
            raise ValueError("theta_rcm out of (0,1]")
        if not 0.0 < self.theta_iou <= 1.0:
            raise ValueError("theta_iou out of (0,1]")


@dataclass(frozen=True)
class TrackDynamics:
    v_r: float = 0.0
    psi: float = 0.0
    var_v: float = VAR_V_FLOOR
    var_psi: float = VAR_PSI_FLOOR
    sample_count: int = 0


def iou_distance(track_box: BBox, det_box: BBox) -> float:
    return 1.0 - bbox_iou(track_box, det_box)


def radar_mahalanobis(t: TrackDynamics, c: ClusterDynamics) -> float:
    if t.sample_count < 1:
        raise NoRadarHistory("track has no radar history")
    dv = c.v_r - t.v_r
    dpsi = wrap_angle(c.psi - t.psi)
    return math.sqrt(dv * dv / t.var_v + dpsi * dpsi / t.var_psi)


def normalize_radar_distance(d: float, lam: float) -> float:
    if d < 0:
        raise ValueError(f"radar distance must be non-negative, got {d}")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return min(-math.expm1(-lam * d), _BELOW_ONE)


def rcm_cost(d_hat: float, d_iou: float, p: RcmParams) -> float:
    if d_hat > p.theta_rcm or d_iou > p.theta_iou:
        return INFEASIBLE
    return p.alpha * d_hat + (1.0 - p.alpha) * d_iou


def update_track_dynamics(t: TrackDynamics, c: ClusterDynamics, forget: float = FORGET) -> TrackDynamics:
    """Exponentially forgetting mean/variance of (radial velocity, bearing)."""
    if t.sample_count == 0:
        return TrackDynamics(c.v_r, wrap_angle(c.psi), VAR_V_FLOOR, VAR_PSI_FLOOR, 1)
    dv = c.v_r - t.v_r
    dpsi = wrap_angle(c.psi - t.psi)
    g = 1.0 - forget
    return TrackDynamics(
        v_r=t.v_r + g * dv,
        psi=wrap_angle(t.psi + g * dpsi),
        var_v=max(forget * t.var_v + g * dv * dv, VAR_V_FLOOR),
        var_psi=max(forget * t.var_psi + g * dpsi * dpsi, VAR_PSI_FLOOR),
        sample_count=t.sample_count + 1,
    )


def coast_dynamics(t: TrackDynamics, frames: int) -> TrackDynamics:
    """Dynamics memory carried `frames` frames past its last radar observation;
    both standard deviations grow linearly with the gap."""
    if t.sample_count == 0 or frames <= 0:
        return t
    sv = math.sqrt(t.var_v) + SIGMA_V_RATE * frames
    sp = math.sqrt(t.var_psi) + SIGMA_PSI_RATE * frames
    return TrackDynamics(t.v_r, t.psi, sv * sv, sp * sp, t.sample_count)


def iou_cost_matrix(track_boxes: np.ndarray, det_boxes: np.ndarray, gate_iou: float) -> np.ndarray:
    """1 - IoU between tlwh arrays; entries with distance above the gate become INFEASIBLE."""
    d = 1.0 - iou_matrix(track_boxes, det_boxes)
    d[d > gate_iou] = INFEASIBLE
    return d


def rcm_cost_matrix(
    track_boxes: np.ndarray,
    det_boxes: np.ndarray,
    track_dynamics: Sequence[TrackDynamics],
    det_dynamics: Mapping[int, ClusterDynamics],
    p: RcmParams,
) -> np.ndarray:
    """Pairwise radar-camera cost.

    `det_dynamics` maps detection index to its associated cluster's dynamics.
    Pairs lacking radar on either side fall back to the gated IoU distance.
    """
    d_iou = 1.0 - iou_matrix(track_boxes, det_boxes)
    n, m = d_iou.shape
    out = d_iou.copy()
    out[d_iou > p.theta_iou] = INFEASIBLE
    if n == 0 or m == 0 or not det_dynamics:
        return out
    rows = [i for i, t in enumerate(track_dynamics) if t.sample_count > 0]
    cols = sorted(det_dynamics)
    if not rows:
        return out
    tv = np.array([track_dynamics[i].v_r for i in rows])
    tpsi = np.array([track_dynamics[i].psi for i in rows])
    tvar_v = np.array([track_dynamics[i].var_v for i in rows])
    tvar_psi = np.array([track_dynamics[i].var_psi for i in rows])
    cv = np.array([det_dynamics[j].v_r for j in cols])
    cpsi = np.array([det_dynamics[j].psi for j in cols])
    dv = cv[None, :] - tv[:, None]
    dpsi = wrap_angles(cpsi[None, :] - tpsi[:, None])
    d_radar = np.sqrt(dv * dv / tvar_v[:, None] + dpsi * dpsi / tvar_psi[:, None])
    d_hat = np.minimum(-np.expm1(-p.lam * d_radar), _BELOW_ONE)
    sub = d_iou[np.ix_(rows, cols)]
    cost = p.alpha * d_hat + (1.0 - p.alpha) * sub
    cost[(d_hat > p.theta_rcm) | (sub > p.theta_iou)] = INFEASIBLE
    out[np.ix_(rows, cols)] = cost
    return out


def _hungarian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min-cost perfect assignment on a square matrix.

    Shortest augmenting path with potentials. Returns (col_of_row, u, v) where
    a[i, j] - u[i] - v[j] >= 0 with equality on assigned pairs.
    """
    n = a.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row (1-based) assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    cost = np.zeros((n + 1, n + 1))
    cost[1:, 1:] = a
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _lexicographic_refine(col_of_row: np.ndarray, tight: np.ndarray) -> np.ndarray:
    """Among perfect matchings of the tight graph, pick the one whose column
    sequence (row 0, row 1, ...) is lexicographically smallest."""
    n = len(col_of_row)
    match = col_of_row.copy()
    row_of_col = np.empty(n, dtype=np.int64)
    row_of_col[match] = np.arange(n)
    adj = [np.flatnonzero(tight[i]).tolist() for i in range(n)]

    for i in range(n):
        for j in adj[i]:
            if j >= match[i]:
                break
            r = int(row_of_col[j])
            if r < i:
                continue
            # reroute row r away from j, ending at the column row i frees
            target = int(match[i])
            path = _alternating_path(r, j, target, i, adj, match, row_of_col)
            if path is None:
                continue
            for row, col in path:
                match[row] = col
                row_of_col[col] = row
            match[i] = j
            row_of_col[j] = i
            break
    return match


def _alternating_path(start_row, banned_col, target_col, fixed_upto, adj, match, row_of_col):
    """DFS for rows > fixed_upto: reassign start_row to a tight column != banned_col,
    displacing rows in turn until target_col absorbs the last displaced row."""
    seen = {banned_col}
    stack = [(start_row, iter(adj[start_row]))]
    chosen: list[tuple[int, int]] = []
    while stack:
        row, it = stack[-1]
        advanced = False
        for col in it:
            if col in seen:
                continue
            seen.add(col)
            if col == target_col:
                return chosen + [(row, col)]
            nxt = int(row_of_col[col])
            if nxt <= fixed_upto:
                continue
            chosen.append((row, col))
            stack.append((nxt, iter(adj[nxt])))
            advanced = True
            break
        if not advanced:
            stack.pop()
            if chosen:
                chosen.pop()
    return None


def solve_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost assignment of min(rows, cols) pairs with a deterministic tie-break.

    Among equal-cost optima, rows are served in ascending order, each taking the
    smallest column index still compatible with optimality (an unmatched row
    ranks after every column).
    """
    c = np.asarray(cost, dtype=np.float64)
    n, m = c.shape
    if n == 0 or m == 0:
        return []
    k = max(n, m)
    sq = np.zeros((k, k))
    sq[:n, :m] = c
    col_of_row, u, v = _hungarian(sq)
    reduced = sq - u[:, None] - v[None, :]
    tol = 1e-9 * max(1.0, float(np.max(np.abs(sq))))
    tight = reduced <= tol
    if tight.sum() > k:
        col_of_row = _lexicographic_refine(col_of_row, tight)
    return [(i, int(col_of_row[i])) for i in range(n) if col_of_row[i] < m]


def linear_assignment(
    cost: np.ndarray, gate: float = DEFAULT_GATE
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Optimal assignment; assigned pairs costing >= gate are demoted to unmatched."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        c = c.reshape(len(c), -1) if c.size else np.zeros((len(c), 0))
    n, m = c.shape
    matches = [(i, j) for i, j in solve_assignment(c) if c[i, j] < gate]
    mr = {i for i, _ in matches}
    mc = {j for _, j in matches}
    return matches, [i for i in range(n) if i not in mr], [j for j in range(m) if j not in mc]
