"""Constant-velocity Kalman filter over image boxes.

State is (cx, cy, a, h, vcx, vcy, va, vh) with a = w / h. Noise scales with the
box height, following the SORT/ByteTrack convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import BBox

log = logging.getLogger(__name__)

STD_POSITION = 1.0 / 20
STD_VELOCITY = 1.0 / 160
MIN_SHAPE = 1e-3

_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


@dataclass(frozen=True)
class KfState:
    mean: np.ndarray
    cov: np.ndarray


def bbox_to_measurement(b: BBox) -> np.ndarray:
    return np.array([b.x + b.w / 2.0, b.y + b.h / 2.0, b.w / b.h, b.h], dtype=np.float64)


def tlwh_to_measurement(tlwh: np.ndarray) -> np.ndarray:
    tlwh = np.asarray(tlwh, dtype=np.float64)
    out = tlwh.copy()
    out[..., 0] += tlwh[..., 2] / 2.0
    out[..., 1] += tlwh[..., 3] / 2.0
    out[..., 2] = tlwh[..., 2] / tlwh[..., 3]
    return out


def mean_to_tlwh(mean: np.ndarray) -> np.ndarray:
    """(..., >=4) state means to (..., 4) tlwh boxes."""
    mean = np.asarray(mean)
    w = mean[..., 2] * mean[..., 3]
    h = mean[..., 3]
    return np.stack((mean[..., 0] - w / 2.0, mean[..., 1] - h / 2.0, w, h), axis=-1)


def _init_arrays(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.r_[z, np.zeros(4)]
    h = z[3]
    std = np.array([
        2 * STD_POSITION * h,
        2 * STD_POSITION * h,
        1e-2,
        2 * STD_POSITION * h,
        10 * STD_VELOCITY * h,
        10 * STD_VELOCITY * h,
        1e-5,
        10 * STD_VELOCITY * h,
    ])
    return mean, np.diag(std * std)


def kf_init(b: BBox) -> KfState:
    mean, cov = _init_arrays(bbox_to_measurement(b))
    return KfState(mean, cov)


def _floor_shape(mean: np.ndarray) -> np.ndarray:
    bad = mean[..., 2:4] < MIN_SHAPE
    if bad.any():
        log.warning("predicted aspect/height below %.0e, flooring", MIN_SHAPE)
        mean = mean.copy()
        mean[..., 2:4] = np.maximum(mean[..., 2:4], MIN_SHAPE)
    return mean


def predict_arrays(mean: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched predict: mean (N, 8), cov (N, 8, 8)."""
    h = mean[:, 3]
    std = np.empty((len(mean), 8))
    std[:, 0] = std[:, 1] = std[:, 3] = STD_POSITION * h
    std[:, 2] = 1e-2
    std[:, 4] = std[:, 5] = std[:, 7] = STD_VELOCITY * h
    std[:, 6] = 1e-5
    mean = mean @ _F.T
    cov = _F @ cov @ _F.T
    idx = np.arange(8)
    cov[:, idx, idx] += std * std
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))
    return _floor_shape(mean), cov


def kf_predict(s: KfState) -> KfState:
    mean, cov = predict_arrays(s.mean[None, :], s.cov[None, :, :])
    return KfState(mean[0], cov[0])


def update_arrays(mean: np.ndarray, cov: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched measurement update: mean (N, 8), cov (N, 8, 8), z (N, 4)."""
    h = mean[:, 3]
    r = np.empty((len(mean), 4))
    r[:, 0] = r[:, 1] = r[:, 3] = STD_POSITION * h
    r[:, 2] = 1e-1
    S = cov[:, :4, :4].copy()
    idx = np.arange(4)
    S[:, idx, idx] += r * r
    PHt = cov[:, :, :4]
    # K = P H^T S^-1, S symmetric positive definite
    K = np.linalg.solve(S, PHt.transpose(0, 2, 1)).transpose(0, 2, 1)
    innov = z - mean[:, :4]
    new_mean = mean + np.einsum("nij,nj->ni", K, innov)
    new_cov = cov - K @ S @ K.transpose(0, 2, 1)
    new_cov = 0.5 * (new_cov + new_cov.transpose(0, 2, 1))
    return _floor_shape(new_mean), new_cov


def kf_update(s: KfState, z: BBox) -> KfState:
    mean, cov = update_arrays(s.mean[None, :], s.cov[None, :, :], bbox_to_measurement(z)[None, :])
    return KfState(mean[0], cov[0])


def state_to_bbox(s: KfState) -> BBox:
    x, y, w, h = mean_to_tlwh(s.mean)
    return BBox(float(x), float(y), float(w), float(h))
