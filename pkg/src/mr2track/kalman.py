"""Constant-velocity Kalman filter over ``(cx, cy, a, h)`` box states.

The state is ``(cx, cy, a, h, vcx, vcy, va, vh)`` where ``a = w / h``. Noise
standard deviations are proportional to the box height, so the filter
behaves identically at any image scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import BBox

_NDIM = 4
_MIN_HEIGHT = 1e-6


class FilterDivergence(RuntimeError):
    """The innovation covariance could not be factorized."""


@dataclass(frozen=True)
class MotionState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        self.mean.setflags(write=False)
        self.covariance.setflags(write=False)


def bbox_to_xyah(bbox: BBox) -> np.ndarray:
    w, h = bbox.width, bbox.height
    return np.array([bbox.x_min + w / 2, bbox.y_min + h / 2, w / h, h])


def state_to_bbox(state: MotionState) -> BBox:
    """Decode the mean of ``state`` into a box clipped to the unit square."""
    cx, cy, a, h = (float(v) for v in state.mean[:4])
    h = max(h, 0.0)
    w = max(a * h, 0.0)
    return BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2).clamp()


@dataclass(frozen=True)
class KalmanFilter:
    """Box motion model; ``process_noise_scale=0`` gives a deterministic predict."""

    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    process_noise_scale: float = 1.0

    @property
    def motion_mat(self) -> np.ndarray:
        f = np.eye(2 * _NDIM)
        f[:_NDIM, _NDIM:] = np.eye(_NDIM)
        return f

    @property
    def update_mat(self) -> np.ndarray:
        return np.eye(_NDIM, 2 * _NDIM)

    def initiate(self, bbox: BBox) -> MotionState:
        if bbox.area <= 0.0:
            raise ValueError(f"cannot start a filter from a zero-area box {bbox}")
        pos = bbox_to_xyah(bbox)
        mean = np.r_[pos, np.zeros(_NDIM)]
        h = pos[3]
        wp, wv = self.std_weight_position, self.std_weight_velocity
        std = [2 * wp * h, 2 * wp * h, 1e-2, 2 * wp * h, 10 * wv * h, 10 * wv * h, 1e-5, 10 * wv * h]
        return MotionState(mean, np.diag(np.square(std)))

    def predict(self, state: MotionState) -> MotionState:
        h = state.mean[3]
        wp, wv = self.std_weight_position, self.std_weight_velocity
        std = np.array([wp * h, wp * h, 1e-2, wp * h, wv * h, wv * h, 1e-5, wv * h])
        q = np.diag(np.square(std * self.process_noise_scale))
        f = self.motion_mat
        mean = f @ state.mean
        mean[3] = max(mean[3], _MIN_HEIGHT)
        cov = f @ state.covariance @ f.T + q
        return MotionState(mean, _symmetrize(cov))

    def measurement_noise(self, state: MotionState) -> np.ndarray:
        h = state.mean[3]
        wp = self.std_weight_position
        return np.diag(np.square([wp * h, wp * h, 1e-1, wp * h]))

    def project(self, state: MotionState) -> tuple[np.ndarray, np.ndarray]:
        """Map ``state`` into measurement space (mean, innovation covariance)."""
        hm = self.update_mat
        return hm @ state.mean, hm @ state.covariance @ hm.T + self.measurement_noise(state)

    def update(self, state: MotionState, measurement: BBox) -> MotionState:
        if measurement.area <= 0.0:
            raise ValueError(f"cannot update from a zero-area box {measurement}")
        z = bbox_to_xyah(measurement)
        proj_mean, proj_cov = self.project(state)
        try:
            chol = scipy.linalg.cho_factor(proj_cov, lower=True, check_finite=True)
            gain = scipy.linalg.cho_solve(chol, (state.covariance @ self.update_mat.T).T).T
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise FilterDivergence(str(exc)) from exc
        mean = state.mean + gain @ (z - proj_mean)
        mean[3] = max(mean[3], _MIN_HEIGHT)
        # Joseph form keeps the posterior PSD under rounding.
        ikh = np.eye(2 * _NDIM) - gain @ self.update_mat
        cov = ikh @ state.covariance @ ikh.T + gain @ self.measurement_noise(state) @ gain.T
        return MotionState(mean, _symmetrize(cov))


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


_DEFAULT = KalmanFilter()


def kf_initiate(bbox: BBox) -> MotionState:
    return _DEFAULT.initiate(bbox)


def kf_predict(state: MotionState) -> MotionState:
    return _DEFAULT.predict(state)


def kf_update(state: MotionState, measurement: BBox) -> MotionState:
    return _DEFAULT.update(state, measurement)


kf_state_to_bbox = state_to_bbox
