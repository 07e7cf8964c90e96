"""Two-stage tracking-by-detection with a pluggable second-stage matcher."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .association import (
    RcmParams,
    TrackDynamics,
    coast_dynamics,
    iou_cost_matrix,
    linear_assignment,
    rcm_cost_matrix,
    update_track_dynamics,
)
from .core import BBox, Calibration, Detection, ObjectClass
from .motion import _init_arrays, mean_to_tlwh, predict_arrays, tlwh_to_measurement, update_arrays
from .radar import ClusterDynamics, DbscanParams, associate_clusters_to_boxes, cluster_frame


class Matcher(str, enum.Enum):
    IOU = "iou"
    RCM = "rcm"


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


class FrameOrderError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerParams:
    tau_high: float = 0.5
    tau_low: float = 0.1
    tau_new: float = 0.2
    max_lost: int = 100
    stage1_gate: float = 0.5
    stage2_gate: float = 0.5
    matcher: Matcher = Matcher.IOU
    rcm: RcmParams = field(default_factory=RcmParams)
    dbscan: DbscanParams = field(default_factory=DbscanParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "matcher", Matcher(self.matcher))
        if not 0.0 <= self.tau_low < self.tau_new <= self.tau_high <= 1.0:
            raise ValueError("thresholds must satisfy 0 <= tau_low < tau_new <= tau_high <= 1")
        if self.max_lost < 1:
            raise ValueError("max_lost must be >= 1")
        for name in ("stage1_gate", "stage2_gate"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} out of (0,1]")


@dataclass
class FrameInput:
    frame: int
    detections: list[Detection]
    radar: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))

    def __post_init__(self) -> None:
        self.radar = np.asarray(self.radar, dtype=np.float64).reshape(-1, 5)
        for d in self.detections:
            if d.frame != self.frame:
                raise ValueError(f"detection frame {d.frame} in input for frame {self.frame}")


@dataclass(frozen=True)
class TrackOutput:
    track_id: int
    class_id: ObjectClass
    bbox: BBox
    confidence: float


@dataclass(frozen=True)
class FrameOutput:
    frame: int
    tracks: tuple[TrackOutput, ...]


@dataclass
class Track:
    id: int
    mean: np.ndarray
    cov: np.ndarray
    status: TrackStatus
    start_frame: int
    last_frame: int
    last_confidence: float
    dynamics: TrackDynamics = field(default_factory=TrackDynamics)
    hits: int = 1
    age: int = 1
    votes: Counter = field(default_factory=Counter)
    radar_frame: int = 0  # frame of the last radar observation

    @property
    def class_id(self) -> ObjectClass:
        return self.votes.most_common(1)[0][0]

    @property
    def tlwh(self) -> np.ndarray:
        return mean_to_tlwh(self.mean)


class Tracker:
    def __init__(self, params: TrackerParams = TrackerParams(), calib: Calibration | None = None):
        self.params = params
        self.calib = calib
        self.tracks: list[Track] = []
        self.last_input_frame: int | None = None
        self._next_id = 1

    def _spawn(self, det: Detection, frame: int, active: bool) -> Track:
        mean, cov = _init_arrays(tlwh_to_measurement(det.bbox.as_tlwh()))
        t = Track(
            id=self._next_id,
            mean=mean,
            cov=cov,
            status=TrackStatus.ACTIVE if active else TrackStatus.TENTATIVE,
            start_frame=frame,
            last_frame=frame,
            last_confidence=det.confidence,
        )
        t.votes[det.class_id] += 1
        self._next_id += 1
        return t

    def _predicted_dynamics(self, t: Track, frame: int) -> TrackDynamics:
        return coast_dynamics(t.dynamics, frame - t.radar_frame)

    def _observe_radar(self, t: Track, c: ClusterDynamics, frame: int) -> None:
        t.dynamics = update_track_dynamics(self._predicted_dynamics(t, frame), c)
        t.radar_frame = frame

    def step(self, inp: FrameInput) -> FrameOutput:
        p = self.params
        frame = inp.frame
        if self.last_input_frame is not None and frame <= self.last_input_frame:
            raise FrameOrderError(f"frame {frame} after frame {self.last_input_frame}")
        first_frame = self.last_input_frame is None
        self.last_input_frame = frame

        live = [t for t in self.tracks if t.status is not TrackStatus.REMOVED]
        if live:
            for t in live:
                if t.status is not TrackStatus.ACTIVE:
                    t.mean[7] = 0.0  # coasting tracks keep their size
            means, covs = predict_arrays(np.stack([t.mean for t in live]), np.stack([t.cov for t in live]))
            for k, t in enumerate(live):
                t.mean, t.cov = means[k], covs[k]
                t.age += 1

        dets = [d for d in inp.detections if d.confidence >= p.tau_low]
        high = [k for k, d in enumerate(dets) if d.confidence >= p.tau_high]
        low = [k for k, d in enumerate(dets) if d.confidence < p.tau_high]
        det_boxes = np.array([d.bbox.as_tlwh() for d in dets]).reshape(-1, 4)

        updates: list[tuple[Track, int]] = []

        # stage 1: confirmed and lost tracks against high-confidence detections
        pool = [t for t in live if t.status in (TrackStatus.ACTIVE, TrackStatus.LOST)]
        pool_boxes = np.array([t.tlwh for t in pool]).reshape(-1, 4)
        cost = iou_cost_matrix(pool_boxes, det_boxes[high], p.stage1_gate)
        m1, um_tracks, um_high = linear_assignment(cost)
        for r, c in m1:
            updates.append((pool[r], high[c]))
        remaining = [pool[r] for r in um_tracks]
        high_left = [high[c] for c in um_high]

        # radar clusters attached to every retained detection
        det_dyn: dict[int, ClusterDynamics] = {}
        if p.matcher is Matcher.RCM and len(inp.radar) and dets:
            clusters = cluster_frame(inp.radar, self.calib, p.dbscan)
            mapping = associate_clusters_to_boxes(clusters, det_boxes)
            det_dyn = {d: clusters[c].dynamics for d, c in mapping.items()}
            for t, d in updates:
                if d in det_dyn:
                    self._observe_radar(t, det_dyn[d], frame)

        # stage 2: leftover tracks against low-confidence detections
        rem_boxes = np.array([t.tlwh for t in remaining]).reshape(-1, 4)
        low_boxes = det_boxes[low]
        if p.matcher is Matcher.RCM:
            low_dyn = {k: det_dyn[d] for k, d in enumerate(low) if d in det_dyn}
            dyn = [self._predicted_dynamics(t, frame) for t in remaining]
            cost = rcm_cost_matrix(rem_boxes, low_boxes, dyn, low_dyn, p.rcm)
        else:
            cost = iou_cost_matrix(rem_boxes, low_boxes, p.stage2_gate)
        m2, um2, _ = linear_assignment(cost)
        for r, c in m2:
            t, d = remaining[r], low[c]
            updates.append((t, d))
            if d in det_dyn:
                self._observe_radar(t, det_dyn[d], frame)
        unmatched = [remaining[r] for r in um2]

        # unconfirmed tracks get one chance against the leftover high detections
        tentative = [t for t in live if t.status is TrackStatus.TENTATIVE]
        tent_boxes = np.array([t.tlwh for t in tentative]).reshape(-1, 4)
        cost = iou_cost_matrix(tent_boxes, det_boxes[high_left], p.stage1_gate)
        m3, um3, um_new = linear_assignment(cost)
        for r, c in m3:
            updates.append((tentative[r], high_left[c]))
        for r in um3:
            tentative[r].status = TrackStatus.REMOVED

        if updates:
            tr = [t for t, _ in updates]
            z = tlwh_to_measurement(det_boxes[[d for _, d in updates]])
            means, covs = update_arrays(np.stack([t.mean for t in tr]), np.stack([t.cov for t in tr]), z)
            for k, (t, d) in enumerate(updates):
                t.mean, t.cov = means[k], covs[k]
                t.status = TrackStatus.ACTIVE
                t.last_frame = frame
                t.hits += 1
                t.last_confidence = dets[d].confidence
                t.votes[dets[d].class_id] += 1

        for t in unmatched:
            t.status = TrackStatus.LOST
        for t in live:
            if t.status is TrackStatus.LOST and frame - t.last_frame > p.max_lost:
                t.status = TrackStatus.REMOVED

        for c in um_new:
            d = dets[high_left[c]]
            if d.confidence > p.tau_new:
                self.tracks.append(self._spawn(d, frame, active=first_frame))

        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.REMOVED]
        out = []
        for t in self.tracks:
            if t.status is TrackStatus.ACTIVE and t.last_frame == frame:
                x, y, w, h = t.tlwh
                out.append(TrackOutput(t.id, t.class_id, BBox(float(x), float(y), float(w), float(h)), t.last_confidence))
        out.sort(key=lambda o: o.track_id)
        return FrameOutput(frame, tuple(out))


def run_sequence(
    inputs: Iterable[FrameInput],
    params: TrackerParams = TrackerParams(),
    calib: Calibration | None = None,
) -> list[FrameOutput]:
    tracker = Tracker(params, calib)
    return [tracker.step(inp) for inp in inputs]


def frames_from_arrays(
    detections: dict[int, list[Detection]], radar: dict[int, np.ndarray], n_frames: int
) -> list[FrameInput]:
    """Build contiguous 1-based frame inputs; frames without data are empty."""
    empty = np.zeros((0, 5))
    return [FrameInput(f, detections.get(f, []), radar.get(f, empty)) for f in range(1, n_frames + 1)]


def outputs_to_rows(outputs: Sequence[FrameOutput]):
    for fo in outputs:
        for t in fo.tracks:
            yield fo.frame, t
