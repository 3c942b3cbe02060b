"""Constant-velocity Kalman filter over (cx, cy, aspect, height).

The state is the 8-vector (cx, cy, a, h, vcx, vcy, va, vh). Motion and
observation noise are chosen relative to the current box height so the
filter behaves the same for near and far machines.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from edgeidle.core import BBox
from edgeidle.errors import ValidationError

NDIM = 4
STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160
MIN_HEIGHT = 1e-3

_MOTION_MAT = np.eye(2 * NDIM)
for _i in range(NDIM):
    _MOTION_MAT[_i, NDIM + _i] = 1.0
_UPDATE_MAT = np.eye(NDIM, 2 * NDIM)


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def to_bbox(self) -> BBox:
        cx, cy, a, h = self.mean[:4]
        h = max(float(h), MIN_HEIGHT)
        a = max(float(a), MIN_HEIGHT)
        return BBox.from_xyah(float(cx), float(cy), a, h)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> KalmanState:
        mean = np.asarray(d["mean"], dtype=float)
        cov = np.asarray(d["covariance"], dtype=float)
        if mean.shape != (2 * NDIM,) or cov.shape != (2 * NDIM, 2 * NDIM):
            raise ValidationError("Kalman state must be an 8-vector and an 8x8 matrix")
        return cls(mean, cov)


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + np.swapaxes(m, -1, -2)) / 2


def _motion_cov(heights: np.ndarray) -> np.ndarray:
    """Process noise for one or many states, shape (..., 8, 8)."""
    heights = np.asarray(heights, dtype=float)
    pos = STD_WEIGHT_POSITION * heights
    vel = STD_WEIGHT_VELOCITY * heights
    std = np.stack([pos, pos, np.full_like(pos, 1e-2), pos,
                    vel, vel, np.full_like(vel, 1e-5), vel], axis=-1)
    var = np.square(std)
    out = np.zeros(var.shape + (2 * NDIM,))
    idx = np.arange(2 * NDIM)
    out[..., idx, idx] = var
    return out


def kalman_init(b: BBox) -> KalmanState:
    measurement = b.to_xyah()
    mean = np.r_[measurement, np.zeros(NDIM)]
    h = measurement[3]
    std = [
        2 * STD_WEIGHT_POSITION * h,
        2 * STD_WEIGHT_POSITION * h,
        1e-2,
        2 * STD_WEIGHT_POSITION * h,
        10 * STD_WEIGHT_VELOCITY * h,
        10 * STD_WEIGHT_VELOCITY * h,
        1e-5,
        10 * STD_WEIGHT_VELOCITY * h,
    ]
    return KalmanState(mean, np.diag(np.square(std)))


def kalman_predict(s: KalmanState) -> KalmanState:
    mean = _MOTION_MAT @ s.mean
    covariance = np.linalg.multi_dot((_MOTION_MAT, s.covariance, _MOTION_MAT.T)) + _motion_cov(s.mean[3])
    return KalmanState(mean, _symmetrize(covariance))


def kalman_predict_many(means: np.ndarray, covariances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized predict for (N, 8) means and (N, 8, 8) covariances."""
    if len(means) == 0:
        return means, covariances
    means = means @ _MOTION_MAT.T
    covariances = _MOTION_MAT @ covariances @ _MOTION_MAT.T + _motion_cov(means[:, 3])
    return means, _symmetrize(covariances)


def _project(s: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    h = s.mean[3]
    std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h]
    innovation_cov = np.diag(np.square(std))
    mean = _UPDATE_MAT @ s.mean
    covariance = np.linalg.multi_dot((_UPDATE_MAT, s.covariance, _UPDATE_MAT.T))
    return mean, covariance + innovation_cov


def kalman_update(s: KalmanState, b: BBox) -> KalmanState:
    measurement = b.to_xyah()
    if not np.all(np.isfinite(measurement)):
        raise ValidationError(f"Non-finite measurement {measurement!r}")

    projected_mean, projected_cov = _project(s)
    chol_factor, lower = scipy.linalg.cho_factor(projected_cov, lower=True, check_finite=False)
    kalman_gain = scipy.linalg.cho_solve(
        (chol_factor, lower), (s.covariance @ _UPDATE_MAT.T).T, check_finite=False
    ).T
    innovation = measurement - projected_mean

    new_mean = s.mean + kalman_gain @ innovation
    new_mean[3] = max(new_mean[3], MIN_HEIGHT)
    new_covariance = s.covariance - np.linalg.multi_dot((kalman_gain, projected_cov, kalman_gain.T))
    return KalmanState(new_mean, _symmetrize(new_covariance))
