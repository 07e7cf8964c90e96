"""Radar returns to clusters with dynamic attributes, and clusters to camera boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import Calibration, RadarPoint, radar_array

NOISE = -1
MIN_DEPTH = 0.1  # m, camera-frame z below which a projection is rejected
BOX_MARGIN = 0.10  # fraction of box size added per side for anchor containment


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 2.5
    min_pts: int = 3

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True)
class ClusterDynamics:
    v_r: float
    psi: float
    range: float


@dataclass(frozen=True)
class RadarCluster:
    member_indices: tuple[int, ...]
    centroid: Point3
    mean_doppler: float
    direction: float
    mean_power: float
    point_count: int
    image_anchor: tuple[float, float] | None

    @property
    def dynamics(self) -> ClusterDynamics:
        c = self.centroid
        return ClusterDynamics(self.mean_doppler, self.direction, math.sqrt(c.x * c.x + c.y * c.y + c.z * c.z))


def spherical_to_cartesian(p: RadarPoint) -> Point3:
    ce = math.cos(p.elevation)
    return Point3(
        p.range * ce * math.cos(p.azimuth),
        p.range * ce * math.sin(p.azimuth),
        p.range * math.sin(p.elevation),
    )


def spherical_to_cartesian_array(radar: np.ndarray) -> np.ndarray:
    """Vectorised conversion of an (N, >=3) [range, azimuth, elevation, ...] array to (N, 3)."""
    r, az, el = radar[:, 0], radar[:, 1], radar[:, 2]
    ce = np.cos(el)
    return np.column_stack((r * ce * np.cos(az), r * ce * np.sin(az), r * np.sin(el)))


def project_points(xyz: np.ndarray, calib: Calibration) -> tuple[np.ndarray, np.ndarray]:
    """Project radar-frame points; returns (uv, valid) where invalid rows are rejected projections."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    cam = xyz @ calib.rotation.T + calib.translation
    z = cam[:, 2]
    in_front = z > MIN_DEPTH
    safe_z = np.where(in_front, z, 1.0)
    u = calib.cx + calib.fx * cam[:, 0] / safe_z
    v = calib.cy + calib.fy * cam[:, 1] / safe_z
    valid = in_front & (u >= 0) & (u <= calib.image_w) & (v >= 0) & (v <= calib.image_h)
    return np.column_stack((u, v)), valid


def project_to_image(p: Point3, calib: Calibration) -> tuple[float, float] | None:
    uv, valid = project_points(p.as_array()[None, :], calib)
    if not valid[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def _components(n: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Lowest node index of each node's connected component (min-label hooking with pointer jumping)."""
    lab = np.arange(n)
    while True:
        m = np.minimum(lab[a], lab[b])
        new = lab.copy()
        np.minimum.at(new, a, m)
        np.minimum.at(new, b, m)
        while True:
            jumped = new[new]
            if np.array_equal(jumped, new):
                break
            new = jumped
        if np.array_equal(new, lab):
            return lab
        lab = new


def dbscan(points: np.ndarray | Sequence[Point3], params: DbscanParams) -> np.ndarray:
    """Label each point with a cluster id (0, 1, ...) or NOISE.

    Clusters are numbered in order of their lowest-index core point. A border
    point reachable from several clusters joins the lowest-numbered one, which
    is what sequential expansion in index order produces.
    """
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    pairs = cKDTree(pts).query_pairs(params.eps, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    counts = 1 + np.bincount(i, minlength=n) + np.bincount(j, minlength=n)
    core = counts >= params.min_pts
    labels = np.full(n, NOISE, dtype=np.int64)
    if not core.any():
        return labels

    cc = core[i] & core[j]
    comp = _components(n, i[cc], j[cc])
    # a component's representative is its lowest index, so ascending order ranks clusters
    labels[core] = np.unique(comp[core], return_inverse=True)[1]

    # border points: non-core with at least one core neighbour
    big = np.iinfo(np.int64).max
    border_label = np.full(n, big, dtype=np.int64)
    m = core[i] & ~core[j]
    np.minimum.at(border_label, j[m], labels[i[m]])
    m = core[j] & ~core[i]
    np.minimum.at(border_label, i[m], labels[j[m]])
    is_border = ~core & (border_label != big)
    labels[is_border] = border_label[is_border]
    return labels


def _as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        if points.size == 0:
            return np.zeros((0, 3))
        return np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    pts = list(points)
    if not pts:
        return np.zeros((0, 3))
    if isinstance(pts[0], Point3):
        return np.array([[p.x, p.y, p.z] for p in pts], dtype=np.float64)
    return np.asarray(pts, dtype=np.float64)


def extract_cluster(
    points: np.ndarray | Sequence[RadarPoint],
    member_indices: Sequence[int],
    calib: Calibration | None,
    xyz: np.ndarray | None = None,
) -> RadarCluster:
    """Summarise cluster members; `points` is a radar array or a list of RadarPoint."""
    if len(member_indices) == 0:
        raise ValueError("cluster has no members")
    radar = points if isinstance(points, np.ndarray) else radar_array(list(points))
    idx = np.asarray(member_indices, dtype=np.int64)
    if xyz is None:
        xyz = spherical_to_cartesian_array(radar[idx])
    else:
        xyz = xyz[idx]
    c = xyz.mean(axis=0)
    centroid = Point3(float(c[0]), float(c[1]), float(c[2]))
    anchor = project_to_image(centroid, calib) if calib is not None else None
    return RadarCluster(
        member_indices=tuple(int(k) for k in idx),
        centroid=centroid,
        mean_doppler=float(radar[idx, 3].mean()),
        direction=math.atan2(centroid.y, centroid.x),
        mean_power=float(radar[idx, 4].mean()),
        point_count=len(idx),
        image_anchor=anchor,
    )


def cluster_frame(radar: np.ndarray, calib: Calibration | None, params: DbscanParams = DbscanParams()) -> list[RadarCluster]:
    """Cluster one frame of radar returns on the ground plane and summarise each cluster."""
    radar = np.asarray(radar, dtype=np.float64).reshape(-1, 5)
    if len(radar) == 0:
        return []
    xyz = spherical_to_cartesian_array(radar)
    labels = dbscan(xyz[:, :2], params)
    k = int(labels.max()) + 1
    if k <= 0:
        return []
    valid = labels >= 0
    lab = labels[valid]
    counts = np.bincount(lab, minlength=k)
    cent = np.column_stack([np.bincount(lab, weights=xyz[valid, d], minlength=k) for d in range(3)]) / counts[:, None]
    dop = np.bincount(lab, weights=radar[valid, 3], minlength=k) / counts
    pwr = np.bincount(lab, weights=radar[valid, 4], minlength=k) / counts
    if calib is not None:
        uv, ok = project_points(cent, calib)
    else:
        uv, ok = np.zeros((k, 2)), np.zeros(k, dtype=bool)
    order = np.argsort(labels, kind="stable")
    members = np.split(order[np.count_nonzero(~valid):], np.cumsum(counts)[:-1])
    clusters = []
    for c in range(k):
        clusters.append(
            RadarCluster(
                member_indices=tuple(members[c].tolist()),
                centroid=Point3(float(cent[c, 0]), float(cent[c, 1]), float(cent[c, 2])),
                mean_doppler=float(dop[c]),
                direction=math.atan2(cent[c, 1], cent[c, 0]),
                mean_power=float(pwr[c]),
                point_count=int(counts[c]),
                image_anchor=(float(uv[c, 0]), float(uv[c, 1])) if ok[c] else None,
            )
        )
    return clusters


def associate_clusters_to_boxes(clusters: Sequence[RadarCluster], det_boxes: np.ndarray) -> dict[int, int]:
    """Map detection index -> cluster index.

    Each anchored cluster first picks the smallest-area box whose 10%-expanded
    extent contains its anchor; each box then keeps the strongest (highest mean
    power) of the clusters that picked it. Ties resolve to the lower index.
    """
    boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) == 0 or not clusters:
        return {}
    anchored = [k for k, c in enumerate(clusters) if c.image_anchor is not None]
    if not anchored:
        return {}
    uv = np.array([clusters[k].image_anchor for k in anchored], dtype=np.float64)
    mx = BOX_MARGIN * boxes[:, 2]
    my = BOX_MARGIN * boxes[:, 3]
    x1, y1 = boxes[:, 0] - mx, boxes[:, 1] - my
    x2, y2 = boxes[:, 0] + boxes[:, 2] + mx, boxes[:, 1] + boxes[:, 3] + my
    inside = (
        (uv[:, 0:1] >= x1) & (uv[:, 0:1] <= x2) & (uv[:, 1:2] >= y1) & (uv[:, 1:2] <= y2)
    )
    area = boxes[:, 2] * boxes[:, 3]
    best: dict[int, int] = {}
    for row, k in enumerate(anchored):
        cand = np.flatnonzero(inside[row])
        if len(cand) == 0:
            continue
        d = int(cand[np.argmin(area[cand])])
        cur = best.get(d)
        if cur is None or clusters[k].mean_power > clusters[cur].mean_power:
            best[d] = k
    return dict(sorted(best.items()))
