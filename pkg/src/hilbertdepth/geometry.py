"""Pinhole camera model in homogeneous coordinates.

A LiDAR point ``p`` (homogeneous, sensor frame) maps to the image through
``P_rect @ R_rect @ T_range_cam @ p``.  The inverse direction turns a pixel
into a ray in the rectified camera frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

BEHIND_CAMERA_EPS = 1e-9


class InvalidCalibrationError(ValueError):
    """Calibration matrices violate a structural invariant."""


class Pixel(NamedTuple):
    u: float
    v: float
    depth: float


class Ray(NamedTuple):
    origin: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True)
class CalibrationBundle:
    p_rect: np.ndarray
    r_rect: np.ndarray
    t_range_cam: np.ndarray

    def __post_init__(self):
        p = np.array(self.p_rect, dtype=np.float64)
        r = np.array(self.r_rect, dtype=np.float64)
        t = np.array(self.t_range_cam, dtype=np.float64)
        if p.shape != (3, 4) or r.shape != (3, 3) or t.shape != (4, 4):
            raise InvalidCalibrationError(
                f"bad matrix shapes: P{p.shape} R{r.shape} T{t.shape}"
            )
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidCalibrationError("calibration contains non-finite values")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
            raise InvalidCalibrationError("R_rect is not orthonormal")
        if np.max(np.abs(t[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-9:
            raise InvalidCalibrationError("T_range_cam bottom row must be (0, 0, 0, 1)")
        if p[0, 0] == 0.0 or p[1, 1] == 0.0:
            raise InvalidCalibrationError("P_rect focal entries must be nonzero")
        for name, arr in (("p_rect", p), ("r_rect", r), ("t_range_cam", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls, focal: float = 1.0, cx: float = 0.0, cy: float = 0.0) -> "CalibrationBundle":
        p = np.array([[focal, 0.0, cx, 0.0], [0.0, focal, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
        return cls(p, np.eye(3), np.eye(4))

    @property
    def sensor_to_camera(self) -> np.ndarray:
        """4x4 rigid transform from the sensor frame to the rectified camera frame."""
        r4 = np.eye(4)
        r4[:3, :3] = self.r_rect
        return r4 @ self.t_range_cam

    @property
    def composite(self) -> np.ndarray:
        """The full 3x4 sensor-to-image matrix."""
        return self.p_rect @ self.sensor_to_camera

    def scaled(self, sx: float, sy: float) -> "CalibrationBundle":
        """Calibration for an image resampled by (sx, sy), pixel (0, 0) kept fixed."""
        p = np.diag([sx, sy, 1.0]) @ self.p_rect
        return CalibrationBundle(p, self.r_rect, self.t_range_cam)


def project_points(points: np.ndarray, calib: CalibrationBundle) -> tuple[np.ndarray, np.ndarray]:
    """Project (N, 3) sensor-frame points.

    Returns ``(uvz, in_front)``: an (N, 3) array of (u, v, depth) and a mask
    of points with depth above the behind-camera threshold.  Rows outside
    the mask hold NaN.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    proj = pts @ calib.composite[:, :3].T + calib.composite[:, 3]
    z = proj[:, 2]
    in_front = z > BEHIND_CAMERA_EPS
    out = np.full((len(pts), 3), np.nan)
    out[in_front, 0] = proj[in_front, 0] / z[in_front]
    out[in_front, 1] = proj[in_front, 1] / z[in_front]
    out[in_front, 2] = z[in_front]
    return out, in_front


def project_point(p, calib: CalibrationBundle) -> Optional[Pixel]:
    """Project one homogeneous sensor-frame point; None if it is behind the camera."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape == (4,):
        p = p[:3] / p[3]
    uvz, ok = project_points(p[None, :], calib)
    if not ok[0]:
        return None
    return Pixel(float(uvz[0, 0]), float(uvz[0, 1]), float(uvz[0, 2]))


def _intrinsic_inverse(calib: CalibrationBundle) -> np.ndarray:
    m = calib.p_rect[:, :3]
    if abs(np.linalg.det(m)) < 1e-12:
        raise InvalidCalibrationError("left 3x3 block of P_rect is singular")
    return np.linalg.inv(m)


def camera_center(calib: CalibrationBundle) -> np.ndarray:
    """Optical center in the rectified camera frame (the null vector of P_rect)."""
    return -_intrinsic_inverse(calib) @ calib.p_rect[:, 3]


def backproject_pixels(uv: np.ndarray, calib: CalibrationBundle) -> tuple[np.ndarray, np.ndarray]:
    """Rays for an (N, 2) array of pixels, in the rectified camera frame.

    Returns ``(origin, directions)`` where ``origin`` is shared by every ray
    and ``directions`` has unit rows.
    """
    m_inv = _intrinsic_inverse(calib)
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    homog = np.column_stack([uv, np.ones(len(uv))])
    d = homog @ m_inv.T
    # keep directions pointing to positive projected depth
    sign = np.sign(d @ calib.p_rect[2, :3])
    sign[sign == 0] = 1.0
    d *= sign[:, None]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return camera_center(calib), d


def backproject_ray(pixel, calib: CalibrationBundle) -> Ray:
    origin, d = backproject_pixels(np.asarray(pixel[:2], dtype=np.float64)[None, :], calib)
    return Ray(origin, d[0])


def camera_rays_to_sensor(origin: np.ndarray, directions: np.ndarray,
                          calib: CalibrationBundle) -> tuple[np.ndarray, np.ndarray]:
    """Re-express camera-frame rays in the sensor frame."""
    inv = np.linalg.inv(calib.sensor_to_camera)
    o = inv[:3, :3] @ origin + inv[:3, 3]
    d = directions @ inv[:3, :3].T
    return o, d
