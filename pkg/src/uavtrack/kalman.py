"""Constant-velocity Kalman filter over (cx, cy, aspect, h) in grid cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import BBox

NDIM = 4
STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160

_F = np.eye(2 * NDIM)
_F[:NDIM, NDIM:] = np.eye(NDIM)
_H = np.eye(NDIM, 2 * NDIM)


class DegenerateKalmanError(ArithmeticError):
    """Innovation covariance is singular; R or P is degenerate."""


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray  # (8,)
    covariance: np.ndarray  # (8, 8)

    def bbox(self) -> BBox:
        cx, cy, a, h = self.mean[:4]
        h = max(float(h), 1e-6)
        return BBox(float(cx), float(cy), max(float(a) * h, 1e-6), h)

    @property
    def center(self) -> tuple[float, float]:
        return (float(self.mean[0]), float(self.mean[1]))


def _measure(b: BBox) -> np.ndarray:
    return np.array([b.cx, b.cy, b.w / b.h, b.h], dtype=np.float64)


def kf_init(b: BBox) -> KalmanState:
    mean = np.r_[_measure(b), np.zeros(NDIM)]
    h = b.h
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


def _process_noise(h: float) -> np.ndarray:
    std = [
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_POSITION * h,
        1e-2,
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h,
        STD_WEIGHT_VELOCITY * h,
        1e-5,
        STD_WEIGHT_VELOCITY * h,
    ]
    return np.diag(np.square(std))


def kf_predict(s: KalmanState) -> KalmanState:
    mean = _F @ s.mean
    cov = _F @ s.covariance @ _F.T + _process_noise(abs(float(s.mean[3])))
    return KalmanState(mean, 0.5 * (cov + cov.T))


def project(s: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """Measurement-space mean and innovation covariance."""
    h = abs(float(s.mean[3]))
    r = np.diag(np.square([STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1,
                           STD_WEIGHT_POSITION * h]))
    return _H @ s.mean, _H @ s.covariance @ _H.T + r


def kf_update(s: KalmanState, z: BBox) -> KalmanState:
    proj_mean, proj_cov = project(s)
    try:
        chol = np.linalg.cholesky(proj_cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateKalmanError(f"innovation covariance not positive definite: {exc}") from None
    # K = P H^T S^-1, solved through the Cholesky factor
    pht = s.covariance @ _H.T
    gain = np.linalg.solve(chol.T, np.linalg.solve(chol, pht.T)).T
    innovation = _measure(z) - proj_mean
    mean = s.mean + gain @ innovation
    # Joseph form keeps the posterior symmetric PSD
    ikh = np.eye(2 * NDIM) - gain @ _H
    r = proj_cov - _H @ s.covariance @ _H.T
    cov = ikh @ s.covariance @ ikh.T + gain @ r @ gain.T
    cov = 0.5 * (cov + cov.T)
    if mean[3] <= 0:
        mean[3] = z.h
    return KalmanState(mean, cov)
