"""Constant-velocity Kalman filter over ``(cx, cy, aspect, height)``.

Noise scales with the box height, as in SORT-family trackers.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalWarning

NDIM = 4


@dataclass
class KalmanState:
    mean: np.ndarray  # 8
    covariance: np.ndarray  # 8 x 8

    def copy(self):
        return KalmanState(self.mean.copy(), self.covariance.copy())

    @property
    def xyah(self):
        return self.mean[:NDIM].copy()

    def box(self):
        return xyah_to_xyxy(self.mean[:NDIM])


def xyxy_to_xyah(box):
    x1, y1, x2, y2 = (float(v) for v in box)
    w, h = x2 - x1, y2 - y1
    return np.array([x1 + w / 2, y1 + h / 2, w / h, h])


def xyah_to_xyxy(xyah):
    cx, cy, a, h = xyah
    w = a * h
    return np.array([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])


def _repair(cov, what):
    asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
    cov = 0.5 * (cov + cov.T)
    scale = max(1.0, float(np.max(np.abs(np.diag(cov)))))
    if asym > 1e-9 * scale:
        warnings.warn(f"{what}: covariance asymmetry {asym:.3g} re-symmetrized", NumericalWarning)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-9 * scale:
        warnings.warn(f"{what}: covariance lost positive semi-definiteness; eigenvalues clipped",
                      NumericalWarning)
        cov = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return cov


class KalmanFilter:
    def __init__(self, std_weight_position=1.0 / 20, std_weight_velocity=1.0 / 160,
                 aspect_std=(1e-2, 1e-5, 1e-1), dt=1.0):
        self.std_weight_position = std_weight_position
        self.std_weight_velocity = std_weight_velocity
        # process position, process velocity, measurement
        self.aspect_std = aspect_std
        self.motion = np.eye(2 * NDIM)
        for i in range(NDIM):
            self.motion[i, NDIM + i] = dt
        self.observation = np.eye(NDIM, 2 * NDIM)

    def process_noise(self, mean):
        h = mean[3]
        wp, wv = self.std_weight_position, self.std_weight_velocity
        std = [wp * h, wp * h, self.aspect_std[0], wp * h,
               wv * h, wv * h, self.aspect_std[1], wv * h]
        return np.diag(np.square(std))

    def measurement_noise(self, mean):
        h = mean[3]
        wp = self.std_weight_position
        return np.diag(np.square([wp * h, wp * h, self.aspect_std[2], wp * h]))

    def initiate(self, measurement):
        measurement = np.asarray(measurement, dtype=np.float64)
        mean = np.concatenate([measurement, np.zeros(NDIM)])
        h = measurement[3]
        wp, wv = self.std_weight_position, self.std_weight_velocity
        std = [2 * wp * h, 2 * wp * h, self.aspect_std[0], 2 * wp * h,
               10 * wv * h, 10 * wv * h, self.aspect_std[1], 10 * wv * h]
        return KalmanState(mean, np.diag(np.square(std)))

    def predict(self, state):
        F = self.motion
        mean = F @ state.mean
        cov = F @ state.covariance @ F.T + self.process_noise(state.mean)
        return KalmanState(mean, _repair(cov, "predict"))

    def project(self, state):
        H = self.observation
        mean = H @ state.mean
        cov = H @ state.covariance @ H.T + self.measurement_noise(state.mean)
        return mean, cov

    def update(self, state, measurement):
        measurement = np.asarray(measurement, dtype=np.float64)
        H = self.observation
        proj_mean, proj_cov = self.project(state)
        # gain K = P H^T S^-1, solved rather than inverted
        gain = np.linalg.solve(proj_cov, H @ state.covariance).T
        mean = state.mean + gain @ (measurement - proj_mean)
        cov = state.covariance - gain @ proj_cov @ gain.T
        if mean[2] <= 0 or mean[3] <= 0:
            warnings.warn("update produced non-positive aspect/height; clamped", NumericalWarning)
            mean[2] = max(mean[2], 1e-6)
            mean[3] = max(mean[3], 1e-6)
        return KalmanState(mean, _repair(cov, "update"))


_DEFAULT = KalmanFilter()


def kalman_predict(state, kf=None):
    return (kf or _DEFAULT).predict(state)


def kalman_update(state, measurement, kf=None):
    return (kf or _DEFAULT).update(state, measurement)
