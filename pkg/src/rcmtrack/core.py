"""Shared domain types and geometric primitives."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class ObjectClass(enum.IntEnum):
    SHIP = 1
    BOAT = 2
    VESSEL = 3

    @classmethod
    def parse(cls, value: int | str) -> "ObjectClass":
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            raise ValueError(f"unknown class id {value!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class BBox:
    """Axis-aligned image box, (left, top, width, height) in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"non-finite box {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"non-positive box dimension {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    def as_tlwh(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    def as_tlbr(self) -> np.ndarray:
        return np.array([self.x, self.y, self.x + self.w, self.y + self.h], dtype=np.float64)

    @classmethod
    def from_tlbr(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    confidence: float
    class_id: ObjectClass
    frame: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.frame < 1:
            raise ValueError(f"frame index must be >= 1, got {self.frame}")


@dataclass(frozen=True)
class RadarPoint:
    range: float
    azimuth: float
    elevation: float
    doppler: float
    power: float
    frame: int

    def __post_init__(self) -> None:
        if not self.range > 0:
            raise ValueError(f"non-positive range {self.range}")
        if not all(math.isfinite(v) for v in (self.range, self.azimuth, self.elevation, self.doppler, self.power)):
            raise ValueError("non-finite radar point")

    def as_row(self) -> tuple[float, float, float, float, float]:
        return (self.range, self.azimuth, self.elevation, self.doppler, self.power)


# Column order of per-frame radar arrays: range, azimuth, elevation, doppler, power.
RADAR_COLUMNS = ("range", "azimuth", "elevation", "doppler", "power")


def radar_array(points: list[RadarPoint]) -> np.ndarray:
    if not points:
        return np.zeros((0, 5), dtype=np.float64)
    return np.array([p.as_row() for p in points], dtype=np.float64)


@dataclass(frozen=True)
class Calibration:
    fx: float
    fy: float
    cx: float
    cy: float
    image_w: int
    image_h: int
    T_radar_to_cam: np.ndarray = field(default_factory=lambda: np.eye(4))

    @property
    def rotation(self) -> np.ndarray:
        return np.asarray(self.T_radar_to_cam, dtype=np.float64)[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return np.asarray(self.T_radar_to_cam, dtype=np.float64)[:3, 3]


def validate_calibration(c: Calibration) -> str | None:
    """Return the first violated calibration constraint, or None when valid."""
    if not (c.fx > 0 and c.fy > 0):
        return "focal length must be positive"
    if not all(math.isfinite(v) for v in (c.fx, c.fy, c.cx, c.cy)):
        return "intrinsics must be finite"
    if c.image_w <= 0 or c.image_h <= 0:
        return "image size must be positive"
    T = np.asarray(c.T_radar_to_cam, dtype=np.float64)
    if T.shape != (4, 4):
        return "extrinsic must be 4x4"
    if not np.all(np.isfinite(T)):
        return "extrinsic must be finite"
    if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12, rtol=0.0):
        return "extrinsic bottom row must be [0, 0, 0, 1]"
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-9:
        return "rotation not orthonormal"
    if np.linalg.det(R) < 0:
        return "improper rotation"
    return None


@dataclass(frozen=True)
class ClassProfile:
    class_id: ObjectClass
    mean_speed: float  # m/s
    mean_point_count: float  # radar points per frame at 50 m
    mean_power: float  # dB
    length_range: tuple[float, float]  # m
    beam_range: tuple[float, float]  # m
    height_range: tuple[float, float]  # m above waterline


# Radar statistics per class as measured on the real waterway data.
CLASS_PROFILES: dict[ObjectClass, ClassProfile] = {
    ObjectClass.SHIP: ClassProfile(ObjectClass.SHIP, 0.97, 70.80, 14.57, (20.0, 35.0), (5.0, 8.0), (5.0, 8.0)),
    ObjectClass.BOAT: ClassProfile(ObjectClass.BOAT, 0.90, 30.02, 11.62, (4.0, 8.0), (1.8, 3.0), (1.5, 2.5)),
    ObjectClass.VESSEL: ClassProfile(ObjectClass.VESSEL, 2.57, 75.56, 13.96, (15.0, 30.0), (4.0, 7.0), (4.0, 7.0)),
}


def bbox_iou(a: BBox, b: BBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # edge arithmetic can overshoot the true overlap by an ulp
    return min(inter / (a.area + b.area - inter), 1.0)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) tlwh arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)), dtype=np.float64)
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, 0][:, None], b[:, 0][None, :])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, 1][:, None], b[:, 1][None, :])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"cannot wrap non-finite angle {theta}")
    r = math.fmod(theta, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    elif r > math.pi:
        r -= 2.0 * math.pi
    return r


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    r = np.fmod(theta, 2.0 * np.pi)
    r = np.where(r <= -np.pi, r + 2.0 * np.pi, r)
    return np.where(r > np.pi, r - 2.0 * np.pi, r)
