"""Seeded waterborne scenarios: world trajectories, camera detections, radar returns.

The ego vessel sits at the world origin (x forward along the channel, y left,
z up) and does not move. Targets travel on the water plane. Image ground truth
is the projection of a camera-facing rectangle through each target's centre,
so the bottom-centre of a box lies on the waterline below that centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CLASS_PROFILES, BBox, Calibration, Detection, ObjectClass
from .io_formats import (
    FormatError,
    MotRecord,
    SeqInfo,
    _float,
    _int,
    detections_to_records,
    read_sectioned,
    write_calibration,
    write_mot_file,
    write_radar_csv,
    write_seqinfo,
)
from .metrics import TrajectorySet

EVENT_KINDS = ("occlusion", "droplet_dropout", "sway")
SWAY_MAX_DEG = 3.0
SWAY_PERIOD = 60  # frames
SPEED_JITTER = 0.3
REFERENCE_RANGE = 50.0  # m, range at which class point counts apply
POWER_SPREAD = 2.0  # dB
_MEAN_END_OFFSET = math.sqrt(2.0 / math.pi) / 3.0  # E|along| / half-length for sigma = length / 6
CAMERA_ABOVE_RADAR = 0.5  # m
MIN_VISIBLE = 0.25  # visible width fraction below which a target goes undetected
BENCH_SEEDS = tuple(range(101, 121))
ENCOUNTER_RANGE = (70.0, 125.0)  # m, range at which an encounter pair lines up

# radar frame (x fwd, y left, z up) -> camera frame (x right, y down, z fwd)
_R_RADAR_TO_CAM = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class EventSpec:
    kind: str
    target: int | str  # object id or "ego"
    start: int
    end: int
    intensity: float

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if not 1 <= self.start < self.end:
            raise ValueError("event needs 1 <= start < end")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("event intensity out of [0,1]")
        if self.kind == "sway" and self.target != "ego":
            raise ValueError("sway events must target 'ego'")

    def active(self, frame: int) -> bool:
        return self.start <= frame <= self.end

    def hits(self, obj_id: int) -> bool:
        return self.target == "ego" or self.target == obj_id


@dataclass(frozen=True)
class CameraSpec:
    hfov_deg: float = 100.0
    image_w: int = 1920
    image_h: int = 1080
    height_m: float = 2.0

    @property
    def focal(self) -> float:
        return (self.image_w / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)


@dataclass(frozen=True)
class RadarSpec:
    hfov_deg: float = 110.0
    vfov_deg: float = 45.0
    max_range: float = 200.0
    range_res: float = 0.43
    velocity_res: float = 0.27
    angle_res_deg: float = 1.0
    height_m: float = 1.5


@dataclass(frozen=True)
class NoiseSpec:
    jitter: float = 0.04  # box centre/size std as a fraction of box size
    occlusion_jitter: float = 0.10  # extra jitter fraction at full occlusion intensity
    conf_sigma: float = 0.05
    dropout: float = 0.02  # baseline per-box miss probability
    clutter: float = 0.5  # false-positive detections per frame
    radar_clutter: float = 20.0  # clutter returns per frame
    mutual_occlusion: float = 0.8  # confidence loss when fully hidden behind a nearer target


@dataclass(frozen=True)
class ScenarioConfig:
    n_objects: int = 6
    class_mix: tuple[float, float, float] = (0.4, 0.4, 0.2)
    duration: int = 600
    frame_rate: float = 30.0
    channel_width: float = 80.0
    channel_length: float = 200.0
    events: tuple[EventSpec, ...] = ()
    camera: CameraSpec = field(default_factory=CameraSpec)
    radar: RadarSpec = field(default_factory=RadarSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    crossing_fraction: float = 0.25
    encounters: tuple[int, ...] = ()  # meeting frames; each routes two trailing objects across one bearing
    ego_velocity: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_objects < 0:
            raise ValueError("n_objects must be >= 0")
        if len(self.class_mix) != 3 or min(self.class_mix) < 0 or abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise ValueError("class_mix must be three proportions summing to 1")
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        r = self.radar
        if not (r.range_res > 0 and r.velocity_res > 0 and r.angle_res_deg > 0 and r.max_range > 0):
            raise ValueError("radar resolutions must be positive")
        if 2 * len(self.encounters) > self.n_objects:
            raise ValueError("each encounter needs two objects")
        if any(not 1 <= f < self.duration for f in self.encounters):
            raise ValueError("encounter frames must lie inside the scenario")
        if any(v != 0.0 for v in self.ego_velocity):
            raise ValueError("ego motion is not supported; ego_velocity must be 0")
        for ev in self.events:
            if ev.end > self.duration:
                raise ValueError(f"event {ev} ends after the scenario")
            if isinstance(ev.target, int) and not 1 <= ev.target <= self.n_objects:
                raise ValueError(f"event target {ev.target} is not an object id")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class WorldObject:
    id: int
    class_id: ObjectClass
    length: float
    beam: float
    height: float
    speed: float
    position: np.ndarray  # (T, 2) m
    velocity: np.ndarray  # (T, 2) m/s
    heading: np.ndarray  # (T,) rad
    range: np.ndarray  # (T,) m, from the radar origin to the waterline centre
    visible: np.ndarray  # (T,) bool, box fully inside the image
    boxes: np.ndarray  # (T, 4) tlwh, NaN where not visible


@dataclass
class Scenario:
    config: ScenarioConfig
    calib: Calibration
    objects: list[WorldObject]
    camera_yaw: np.ndarray  # (T,) rad, sway perturbation per frame
    gt: TrajectorySet


def default_calibration(camera: CameraSpec = CameraSpec()) -> Calibration:
    T = np.eye(4)
    T[:3, :3] = _R_RADAR_TO_CAM
    T[:3, 3] = -_R_RADAR_TO_CAM @ np.array([0.0, 0.0, CAMERA_ABOVE_RADAR])
    f = camera.focal
    return Calibration(f, f, camera.image_w / 2.0, camera.image_h / 2.0, camera.image_w, camera.image_h, T)


def _rng(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stage]))


def _camera_height(cfg: ScenarioConfig) -> float:
    return cfg.radar.height_m + CAMERA_ABOVE_RADAR


def _sway(cfg: ScenarioConfig) -> np.ndarray:
    yaw = np.zeros(cfg.duration)
    frames = np.arange(1, cfg.duration + 1)
    for ev in cfg.events:
        if ev.kind == "sway":
            m = (frames >= ev.start) & (frames <= ev.end)
            phase = 2 * np.pi * (frames[m] - ev.start) / SWAY_PERIOD
            yaw[m] += math.radians(SWAY_MAX_DEG) * ev.intensity * np.sin(phase)
    return yaw


def project_target_boxes(
    pos: np.ndarray, heading: np.ndarray, length: float, beam: float, height: float,
    yaw: np.ndarray, cfg: ScenarioConfig, calib: Calibration,
) -> np.ndarray:
    """Image boxes (T, 4) of a target's camera-facing rectangle; NaN rows when behind the camera."""
    cam_h = _camera_height(cfg)
    # camera-frame coordinates of the waterline centre, with yaw sway about the vertical
    x, y = pos[:, 0], pos[:, 1]
    c, s = np.cos(-yaw), np.sin(-yaw)
    xr = c * x - s * y
    yr = s * x + c * y
    depth = xr
    lateral = -yr
    bearing = np.arctan2(y, x)
    rel = heading - bearing
    width = np.abs(length * np.sin(rel)) + np.abs(beam * np.cos(rel))
    out = np.full((len(pos), 4), np.nan)
    ok = depth > 1.0
    d = depth[ok]
    u = calib.cx + calib.fx * lateral[ok] / d
    w_px = calib.fx * width[ok] / d
    h_px = calib.fy * height / d
    bottom = calib.cy + calib.fy * cam_h / d
    out[ok] = np.column_stack((u - w_px / 2.0, bottom - h_px, w_px, h_px))
    return out


def unproject_box(box: Sequence[float], calib: Calibration, cfg: ScenarioConfig, yaw: float = 0.0) -> np.ndarray:
    """World (x, y) of the waterline point below a box's bottom-centre."""
    x, y, w, h = box
    u = x + w / 2.0
    v = y + h
    depth = calib.fy * _camera_height(cfg) / (v - calib.cy)
    lateral = (u - calib.cx) * depth / calib.fx
    xr, yr = depth, -lateral
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([c * xr - s * yr, s * xr + c * yr])


def _lane_start(cfg: ScenarioConfig, half_fov: float, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    r0 = rng.uniform(25.0, min(cfg.channel_length, cfg.radar.max_range) * 0.85)
    for _ in range(100):
        b0 = rng.uniform(-half_fov, half_fov)
        if abs(r0 * math.sin(b0)) <= cfg.channel_width / 2.0:
            break
    else:
        b0 = 0.0
    p0 = np.array([r0 * math.cos(b0), r0 * math.sin(b0)])
    if rng.random() < cfg.crossing_fraction:
        h0 = math.copysign(math.pi / 2, -p0[1]) + rng.normal(0.0, math.radians(8.0))
    else:
        h0 = (0.0 if rng.random() < 0.5 else math.pi) + rng.normal(0.0, math.radians(5.0))
    return h0, p0


@dataclass(frozen=True)
class _Meeting:
    frame: int
    bearing: float
    range: float
    side: float  # +1: the second vessel passes behind the first
    heading: float  # first vessel; the second crosses the other way


def _plan_meeting(cfg: ScenarioConfig, frame: int, rng: np.random.Generator) -> _Meeting:
    """Where an encounter pair lines up on one bearing at the given frame."""
    rng_m = rng.uniform(*ENCOUNTER_RANGE)
    widest = math.asin(min(1.0, 0.4 * cfg.channel_width / rng_m))
    bearing = rng.uniform(math.radians(6.0), max(widest, math.radians(8.0))) * (1.0 if rng.random() < 0.5 else -1.0)
    side = 1.0 if rng.random() < 0.5 else -1.0
    heading = math.pi / 2 if rng.random() < 0.5 else -math.pi / 2
    return _Meeting(frame, bearing, rng_m, side, heading)


def _meeting_start(
    m: _Meeting, second: bool, gap: float, speed: float, steps: np.ndarray, cfg: ScenarioConfig
) -> tuple[float, np.ndarray]:
    h0 = m.heading + (math.pi if second else 0.0)
    r = m.range + (m.side * gap if second else 0.0)
    meet = r * np.array([math.cos(m.bearing), math.sin(m.bearing)])
    heading = h0 + np.cumsum(steps)
    vel = speed * np.column_stack((np.cos(heading), np.sin(heading)))
    travelled = vel[: m.frame].sum(axis=0) / cfg.frame_rate
    return h0, meet - travelled


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    rng = _rng(cfg.seed, 0)
    calib = default_calibration(cfg.camera)
    T = cfg.duration
    dt = 1.0 / cfg.frame_rate
    yaw = _sway(cfg)
    half_fov = math.radians(min(cfg.camera.hfov_deg, cfg.radar.hfov_deg)) / 2.0 * 0.85
    classes = list(ObjectClass)
    objects: list[WorldObject] = []
    first_encounter = cfg.n_objects - 2 * len(cfg.encounters)
    meeting: _Meeting | None = None
    for k in range(cfg.n_objects):
        cls = classes[int(rng.choice(3, p=np.asarray(cfg.class_mix)))]
        second = k >= first_encounter and (k - first_encounter) % 2 == 1
        if second:
            cls = objects[-1].class_id  # a sister vessel, so the two boxes look alike
        prof = CLASS_PROFILES[cls]
        length = rng.uniform(*prof.length_range)
        beam = rng.uniform(*prof.beam_range)
        height = rng.uniform(*prof.height_range)
        speed = prof.mean_speed * rng.uniform(1.0 - SPEED_JITTER, 1.0 + SPEED_JITTER)
        steps = rng.normal(0.0, 0.002, T)
        steps[0] = 0.0
        if k < first_encounter:
            h0, p0 = _lane_start(cfg, half_fov, rng)
        elif not second:
            meeting = _plan_meeting(cfg, cfg.encounters[(k - first_encounter) // 2], rng)
            h0, p0 = _meeting_start(meeting, False, 0.0, speed, steps, cfg)
        else:
            gap = objects[-1].beam / 2.0 + beam / 2.0 + rng.uniform(4.0, 10.0)
            h0, p0 = _meeting_start(meeting, True, gap, speed, steps, cfg)
        heading = h0 + np.cumsum(steps)
        vel = speed * np.column_stack((np.cos(heading), np.sin(heading)))
        pos = p0 + np.vstack((np.zeros((1, 2)), np.cumsum(vel[:-1] * dt, axis=0)))
        boxes = project_target_boxes(pos, heading, length, beam, height, yaw, cfg, calib)
        rng_m = np.hypot(pos[:, 0], pos[:, 1])
        inside = (
            np.isfinite(boxes[:, 0])
            & (boxes[:, 0] >= 0) & (boxes[:, 1] >= 0)
            & (boxes[:, 0] + boxes[:, 2] <= calib.image_w)
            & (boxes[:, 1] + boxes[:, 3] <= calib.image_h)
            & (rng_m <= cfg.radar.max_range)
        )
        boxes = np.round(boxes, 6)
        boxes[~inside] = np.nan
        objects.append(
            WorldObject(k + 1, cls, length, beam, height, speed, pos, vel, heading, rng_m, inside, boxes)
        )
    rows = []
    for f in range(T):
        for o in objects:
            if o.visible[f]:
                rows.append((f + 1, o.id, int(o.class_id), *o.boxes[f]))
    return Scenario(cfg, calib, objects, yaw, TrajectorySet.from_rows(rows))


def base_confidence(range_m: float | np.ndarray):
    return np.clip(1.05 - np.asarray(range_m) / 250.0, 0.3, 0.98)


def _event_arrays(cfg: ScenarioConfig, obj_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame occlusion and dropout intensities for one object."""
    occ = np.zeros(cfg.duration)
    drop = np.zeros(cfg.duration)
    for ev in cfg.events:
        if not ev.hits(obj_id):
            continue
        sl = slice(ev.start - 1, ev.end)
        if ev.kind == "occlusion":
            occ[sl] = np.maximum(occ[sl], ev.intensity)
        elif ev.kind == "droplet_dropout":
            drop[sl] = np.maximum(drop[sl], ev.intensity)
    return occ, drop


def _longest_gap(lo: float, hi: float, covers: list[tuple[float, float]]) -> tuple[float, float]:
    """Longest sub-interval of [lo, hi] not covered by any interval in `covers`."""
    best = (lo, lo)
    cur = lo
    for c0, c1 in sorted(covers):
        if c0 > cur and min(c0, hi) - cur > best[1] - best[0]:
            best = (cur, min(c0, hi))
        cur = max(cur, c1)
        if cur >= hi:
            break
    if hi - cur > best[1] - best[0]:
        best = (cur, hi)
    return best


def visible_extent(objects: Sequence[WorldObject]) -> np.ndarray:
    """(n_objects, T, 2) widest unoccluded column span [x1, x2] of each box.

    A nearer target hides the columns it spans when its box covers at least
    half of the farther box's height. Spans of width zero mean fully hidden.
    """
    n = len(objects)
    T = len(objects[0].range) if n else 0
    out = np.full((n, T, 2), np.nan)
    for f in range(T):
        here = [k for k in range(n) if objects[k].visible[f]]
        for i in here:
            x, y, w, h = objects[i].boxes[f]
            covers = []
            for j in here:
                if j == i or objects[j].range[f] >= objects[i].range[f]:
                    continue
                bx, by, bw, bh = objects[j].boxes[f]
                if min(y + h, by + bh) - max(y, by) >= 0.5 * h and bx < x + w and bx + bw > x:
                    covers.append((bx, bx + bw))
            out[i, f] = _longest_gap(x, x + w, covers) if covers else (x, x + w)
    return out


def simulate_camera_detections(s: Scenario) -> dict[int, list[Detection]]:
    cfg = s.config
    nz = cfg.noise
    rng = _rng(cfg.seed, 1)
    W, H = s.calib.image_w, s.calib.image_h
    out: dict[int, list[Detection]] = {f: [] for f in range(1, cfg.duration + 1)}
    span = visible_extent(s.objects)
    for k, o in enumerate(s.objects):
        occ, drop = _event_arrays(cfg, o.id)
        with np.errstate(invalid="ignore"):
            seen = (span[k, :, 1] - span[k, :, 0]) / o.boxes[:, 2]
        occ = np.maximum(occ, nz.mutual_occlusion * np.nan_to_num(1.0 - seen))
        n = cfg.duration
        # draw every stream for every frame so one object's visibility never shifts another's noise
        miss_u = rng.random(n)
        jit = rng.normal(size=(n, 4))
        cnoise = rng.normal(size=n)
        for f in np.flatnonzero(o.visible):
            if miss_u[f] < max(drop[f], nz.dropout) or seen[f] < MIN_VISIBLE:
                continue
            # the detector boxes only what it can see
            _, y, _, h = o.boxes[f]
            x, w = span[k, f, 0], span[k, f, 1] - span[k, f, 0]
            sigma = nz.jitter + nz.occlusion_jitter * occ[f]
            cxp = x + w / 2.0 + jit[f, 0] * sigma * w
            cyp = y + h / 2.0 + jit[f, 1] * sigma * h
            wn = max(w * (1.0 + jit[f, 2] * sigma), 1.0)
            hn = max(h * (1.0 + jit[f, 3] * sigma), 1.0)
            x1 = max(cxp - wn / 2.0, 0.0)
            y1 = max(cyp - hn / 2.0, 0.0)
            x2 = min(cxp + wn / 2.0, W)
            y2 = min(cyp + hn / 2.0, H)
            if x2 - x1 < 1.0 or y2 - y1 < 1.0:
                continue
            conf = float(base_confidence(o.range[f])) + nz.conf_sigma * cnoise[f]
            conf *= 1.0 - occ[f]
            conf = min(max(conf, 0.0), 1.0)
            box = BBox(round(x1, 6), round(y1, 6), round(x2 - x1, 6), round(y2 - y1, 6))
            out[f + 1].append(Detection(box, round(conf, 6), o.class_id, f + 1))
    counts = rng.poisson(nz.clutter, cfg.duration) if nz.clutter > 0 else np.zeros(cfg.duration, int)
    classes = list(ObjectClass)
    for f in range(cfg.duration):
        for _ in range(int(counts[f])):
            w = rng.uniform(15.0, 120.0)
            h = w * rng.uniform(0.3, 0.8)
            x = rng.uniform(0.0, W - w)
            y = rng.uniform(s.calib.cy - 60.0, s.calib.cy + 120.0)
            conf = rng.uniform(0.1, 0.45)
            cls = classes[int(rng.integers(3))]
            box = BBox(round(x, 6), round(y, 6), round(w, 6), round(h, 6))
            out[f + 1].append(Detection(box, round(conf, 6), cls, f + 1))
    return {f: d for f, d in out.items() if d}


def expected_point_count(class_id: ObjectClass, range_m: float) -> float:
    mean = CLASS_PROFILES[class_id].mean_point_count
    return float(np.clip(mean * REFERENCE_RANGE / max(range_m, 1e-6), 1.0, 4.0 * mean))


def _object_points(o: WorldObject, f: int, n: int, cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    rs = cfg.radar
    prof = CLASS_PROFILES[o.class_id]
    # returns spread over the hull but concentrate toward the superstructure
    along = np.clip(rng.normal(0.0, o.length / 6, n), -o.length / 2, o.length / 2)
    across = np.clip(rng.normal(0.0, o.beam / 4, n), -o.beam / 2, o.beam / 2)
    up = rng.uniform(0.0, o.height, n)
    ch, sh = math.cos(o.heading[f]), math.sin(o.heading[f])
    px = o.position[f, 0] + along * ch - across * sh
    py = o.position[f, 1] + along * sh + across * ch
    pz = up - rs.height_m
    rng_true = np.sqrt(px * px + py * py + pz * pz)
    radial = (o.velocity[f, 0] * px + o.velocity[f, 1] * py) / rng_true
    half_a = math.radians(rs.angle_res_deg) / 2
    rng_meas = np.round(rng_true / rs.range_res) * rs.range_res
    az = np.arctan2(py, px) + rng.uniform(-half_a, half_a, n)
    el = np.arcsin(pz / rng_true) + rng.uniform(-half_a, half_a, n)
    dop = radial + rng.uniform(-rs.velocity_res / 2, rs.velocity_res / 2, n)
    # strongest near the superstructure; the offset averages out to zero over the hull
    end = np.abs(along) / (o.length / 2)
    shade = 1.0 - end / _MEAN_END_OFFSET
    pwr = prof.mean_power + np.clip(shade + rng.uniform(-1.0, 1.0, n), -POWER_SPREAD, POWER_SPREAD)
    return np.column_stack((rng_meas, az, el, dop, pwr))


def _in_radar_fov(pts: np.ndarray, rs: RadarSpec) -> np.ndarray:
    return (
        (pts[:, 0] > 0)
        & (pts[:, 0] <= rs.max_range)
        & (np.abs(pts[:, 1]) <= math.radians(rs.hfov_deg) / 2)
        & (np.abs(pts[:, 2]) <= math.radians(rs.vfov_deg) / 2)
    )


def _hull_shadow(o: WorldObject, f: int) -> tuple[float, float, float]:
    """(azimuth low, azimuth high, nearest range) subtended by the hull outline."""
    ch, sh = math.cos(o.heading[f]), math.sin(o.heading[f])
    a = np.array([-1.0, -1.0, 1.0, 1.0]) * o.length / 2
    b = np.array([-1.0, 1.0, -1.0, 1.0]) * o.beam / 2
    px = o.position[f, 0] + a * ch - b * sh
    py = o.position[f, 1] + a * sh + b * ch
    az = np.arctan2(py, px)
    return float(az.min()), float(az.max()), float(np.hypot(px, py).min())


def simulate_radar(s: Scenario) -> dict[int, np.ndarray]:
    """Per-frame (N, 5) radar arrays.

    Camera events have no effect here; a hull does block returns from targets
    directly behind it. Sway rotates the whole sensor rig, so azimuths turn with
    the camera.
    """
    cfg = s.config
    rs = cfg.radar
    rng = _rng(cfg.seed, 2)
    hfov = math.radians(rs.hfov_deg) / 2
    out: dict[int, np.ndarray] = {}
    for f in range(cfg.duration):
        parts = []
        shadows = [(o.range[f], _hull_shadow(o, f)) for o in s.objects]
        for o in s.objects:
            r = o.range[f]
            if r > rs.max_range or abs(math.atan2(o.position[f, 1], o.position[f, 0])) > hfov:
                continue
            n = int(rng.poisson(expected_point_count(o.class_id, r)))
            if n:
                pts = _object_points(o, f, n, cfg, rng)
                for r_other, (lo, hi, near) in shadows:
                    if r_other < r:
                        pts = pts[~((pts[:, 1] >= lo) & (pts[:, 1] <= hi) & (pts[:, 0] > near))]
                pts[:, 1] -= s.camera_yaw[f]
                parts.append(pts)
        k = int(rng.poisson(cfg.noise.radar_clutter)) if cfg.noise.radar_clutter > 0 else 0
        if k:
            parts.append(np.column_stack((
                np.round(rng.uniform(5.0, rs.max_range, k) / rs.range_res) * rs.range_res,
                rng.uniform(-hfov, hfov, k),
                rng.uniform(-math.radians(3.0), math.radians(3.0), k),
                rng.normal(0.0, 0.3, k),
                rng.uniform(3.0, 9.0, k),
            )))
        if parts:
            pts = np.vstack(parts)
            pts = pts[_in_radar_fov(pts, rs)]
            if len(pts):
                out[f + 1] = np.round(pts, 6)
    return out


def export_scenario(s: Scenario, detections: dict[int, list[Detection]], radar: dict[int, np.ndarray], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg = s.config
        write_seqinfo(out / "seqinfo.ini", SeqInfo(out.name, cfg.duration, cfg.frame_rate, s.calib.image_w, s.calib.image_h))
        gt_records = [
            MotRecord(f, i, BBox(x, y, w, h), 1.0, ObjectClass(c)) for f, i, c, x, y, w, h in s.gt.rows()
        ]
        write_mot_file(out / "gt.txt", gt_records)
        write_mot_file(out / "det.txt", detections_to_records(detections))
        write_radar_csv(out / "radar.csv", radar)
        write_calibration(out / "calib.json", s.calib)
    except OSError as e:
        raise OSError(f"cannot write scenario to {out}: {e}") from e
    return out


def build_sequence(cfg: ScenarioConfig, out_dir: str | Path | None = None):
    """Generate a scenario and its sensor streams; export when out_dir is given."""
    s = generate_scenario(cfg)
    dets = simulate_camera_detections(s)
    radar = simulate_radar(s)
    if out_dir is not None:
        export_scenario(s, dets, radar, out_dir)
    return s, dets, radar


def bench_config(seed: int, duration: int = 600) -> ScenarioConfig:
    """One member of the 20-sequence benchmark: 4-8 targets, occlusions, droplets, optional sway."""
    rng = _rng(seed, 7)
    n = int(rng.integers(4, 9))
    events: list[EventSpec] = []

    def span(lo: int, hi: int) -> tuple[int, int]:
        length = int(rng.integers(lo, hi))
        start = int(rng.integers(20, max(duration - length - 1, 21)))
        return start, min(start + length, duration)

    for _ in range(int(rng.integers(1, 3))):
        a, b = span(60, 180)
        events.append(EventSpec("occlusion", int(rng.integers(1, n + 1)), a, b, round(float(rng.uniform(0.5, 0.85)), 3)))
    for _ in range(int(rng.integers(1, 3))):
        a, b = span(20, 90)
        target = "ego" if rng.random() < 0.5 else int(rng.integers(1, n + 1))
        events.append(EventSpec("droplet_dropout", target, a, b, round(float(rng.uniform(0.5, 1.0)), 3)))
    if rng.random() < 0.5:
        a, b = span(60, 180)
        events.append(EventSpec("sway", "ego", a, b, round(float(rng.uniform(0.3, 1.0)), 3)))
    # encounter pairs meet inside a shared occluder (a bridge span), so both boxes weaken together
    meets = []
    first = n - 2 * int(rng.integers(1, 3))
    for pair in range(first, n, 2):
        meet = int(rng.integers(duration // 4, max(3 * duration // 4, duration // 4 + 1)))
        half = int(rng.integers(30, 75))
        level = round(float(rng.uniform(0.4, 0.7)), 3)
        a, b = max(meet - half, 0), min(meet + half, duration)
        events += [EventSpec("occlusion", pair + 1, a, b, level), EventSpec("occlusion", pair + 2, a, b, level)]
        meets.append(meet)
    return ScenarioConfig(n_objects=n, duration=duration, events=tuple(events), encounters=tuple(meets), seed=seed)


def bench_suite(duration: int = 600) -> list[tuple[str, ScenarioConfig]]:
    return [(f"usv-bench-{k + 1:02d}", bench_config(seed, duration)) for k, seed in enumerate(BENCH_SEEDS)]


# --- scenario config files --------------------------------------------------

_SCHEMA = {
    "scenario": {
        "n_objects": int, "class_mix": "mix", "duration": int, "frame_rate": float,
        "channel_width": float, "channel_length": float, "crossing_fraction": float, "encounters": "ints", "seed": int,
        "ego_velocity": "pair",
    },
    "camera": {"hfov_deg": float, "image_w": int, "image_h": int, "height_m": float},
    "radar": {
        "hfov_deg": float, "vfov_deg": float, "max_range": float, "range_res": float,
        "velocity_res": float, "angle_res_deg": float, "height_m": float,
    },
    "noise": {
        "jitter": float, "occlusion_jitter": float, "conf_sigma": float, "dropout": float,
        "clutter": float, "radar_clutter": float, "mutual_occlusion": float,
    },
}
_EVENT_KEYS = {"kind", "target", "start", "end", "intensity"}


def _conv(value: str, typ, key: str, where: str):
    if typ is float:
        return _float(value, f"value for {key}", where)
    if typ is int:
        return _int(value, f"value for {key}", where)
    if typ == "ints":
        return tuple(_int(p.strip(), f"value for {key}", where) for p in value.split(",") if p.strip())
    parts = [p.strip() for p in value.split(",")]
    want = 3 if typ == "mix" else 2
    if len(parts) != want:
        raise FormatError(f"{key} needs {want} comma-separated numbers {where}")
    return tuple(_float(p, f"value for {key}", where) for p in parts)


def read_scenario_config(path: str | Path) -> ScenarioConfig:
    raw = read_sectioned(path)
    where = f"in {path}"
    kw: dict = {}
    sub: dict[str, dict] = {"camera": {}, "radar": {}, "noise": {}}
    events = []
    for section, items in raw.items():
        if section.startswith("event"):
            unknown = set(items) - _EVENT_KEYS
            missing = _EVENT_KEYS - set(items)
            if unknown or missing:
                raise FormatError(f"[{section}] unknown keys {sorted(unknown)} / missing {sorted(missing)} {where}")
            target = items["target"]
            try:
                events.append(EventSpec(
                    items["kind"],
                    "ego" if target == "ego" else _int(target, "target", where),
                    _int(items["start"], "start", where),
                    _int(items["end"], "end", where),
                    _float(items["intensity"], "intensity", where),
                ))
            except ValueError as e:
                raise FormatError(f"[{section}] {e} {where}") from None
            continue
        schema = _SCHEMA.get(section)
        if schema is None:
            raise FormatError(f"unknown section [{section}] {where}")
        for key, value in items.items():
            if key not in schema:
                raise FormatError(f"unknown key {key!r} in [{section}] {where}")
            v = _conv(value, schema[key], key, where)
            if section == "scenario":
                kw[key] = v
            else:
                sub[section][key] = v
    try:
        return ScenarioConfig(
            camera=CameraSpec(**sub["camera"]),
            radar=RadarSpec(**sub["radar"]),
            noise=NoiseSpec(**sub["noise"]),
            events=tuple(events),
            **kw,
        )
    except ValueError as e:
        raise FormatError(f"{e} {where}") from None


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(cfg, seed=seed)
