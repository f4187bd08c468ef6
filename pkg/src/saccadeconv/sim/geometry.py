"""Pinhole optics and image motion under pure sensor rotation.

Image-plane coordinates follow the usual camera convention: x to the
right, y down, optical axis along +z. Angular velocities are about the
sensor axes. With zero translation the image velocity of a point at
normalised coordinates (x, y) is::

    Vx = -wy + wz*y + wx*x*y - wy*x**2
    Vy =  wx - wz*x - wy*x*y + wx*y**2

which is what :func:`image_velocity` evaluates and what the exact
rotation homography in :func:`warp_coordinates` integrates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SensorModel:
    width: int
    height: int
    pixels_per_degree: float = 6.0
    principal_point: tuple[float, float] | None = None
    log_epsilon: float = 0.01

    def __post_init__(self):
        if self.pixels_per_degree <= 0:
            raise ValueError("pixels_per_degree must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor size must be positive")
        if self.principal_point is None:
            object.__setattr__(
                self, "principal_point", ((self.width - 1) / 2.0, (self.height - 1) / 2.0)
            )
        cx, cy = self.principal_point
        if not (0 <= cx <= self.width - 1 and 0 <= cy <= self.height - 1):
            raise ValueError(f"principal point {self.principal_point} outside frame")

    @property
    def focal_px(self) -> float:
        """Focal length in pixels, i.e. pixels per radian."""
        return self.pixels_per_degree * 180.0 / math.pi

    def normalized(self, px, py):
        """Pixel coordinates to normalised image-plane coordinates."""
        cx, cy = self.principal_point
        f = self.focal_px
        return (np.asarray(px, float) - cx) / f, (np.asarray(py, float) - cy) / f


@dataclass(frozen=True)
class SensorMotion:
    """Sensor angular velocity in deg/s. Translation is always zero."""

    omega: tuple[float, float, float]
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    depth: float | None = None

    def __post_init__(self):
        if any(v != 0 for v in self.translation):
            raise ValueError("only pure rotation is supported")


def image_velocity(motion: SensorMotion, px, py, m: SensorModel):
    """Image-plane velocity (pixels/s) at pixel position(s) ``(px, py)``."""
    if any(v != 0 for v in motion.translation):
        raise ValueError("only pure rotation is supported")
    wx, wy, wz = np.radians(motion.omega)
    x, y = m.normalized(px, py)
    vx = -wy + wz * y + wx * x * y - wy * x**2
    vy = wx - wz * x - wy * x * y + wx * y**2
    f = m.focal_px
    return vx * f, vy * f


def rotation_matrix(pan_deg: float, tilt_deg: float) -> np.ndarray:
    """Camera-to-world rotation for a pan-over-tilt mount."""
    return rotation_matrices(np.array([pan_deg]), np.array([tilt_deg]))[0]


def rotation_matrices(pan_deg: np.ndarray, tilt_deg: np.ndarray) -> np.ndarray:
    p, t = np.radians(pan_deg), np.radians(tilt_deg)
    cp, sp, ct, st = np.cos(p), np.sin(p), np.cos(t), np.sin(t)
    n = p.shape[0]
    ry = np.zeros((n, 3, 3))
    ry[:, 0, 0], ry[:, 0, 2], ry[:, 1, 1], ry[:, 2, 0], ry[:, 2, 2] = cp, sp, 1, -sp, cp
    rx = np.zeros((n, 3, 3))
    rx[:, 0, 0], rx[:, 1, 1], rx[:, 1, 2], rx[:, 2, 1], rx[:, 2, 2] = 1, ct, -st, st, ct
    return ry @ rx


def camera_angular_velocity(pan_deg: float, tilt_deg: float,
                            pan_rate: float, tilt_rate: float) -> SensorMotion:
    """Angular velocity in the sensor frame for given mount rates (deg/s).

    The pan axis is fixed to the world, so it picks up a small roll
    component once the sensor is tilted.
    """
    t = math.radians(tilt_deg)
    return SensorMotion((tilt_rate, pan_rate * math.cos(t), -pan_rate * math.sin(t)))


def warp_coordinates(pan_deg, tilt_deg, m: SensorModel, src_shape: tuple[int, int],
                     exact: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Source-image sample positions for every sensor pixel.

    ``pan_deg``/``tilt_deg`` may be arrays of length n; the result then has
    shape (n, height, width). At pose (0, 0) the source image is centred on
    the principal point at one source pixel per sensor pixel.
    """
    pan = np.atleast_1d(np.asarray(pan_deg, float))
    tilt = np.atleast_1d(np.asarray(tilt_deg, float))
    h, w = src_shape
    scx, scy = (w - 1) / 2.0, (h - 1) / 2.0
    f = m.focal_px
    gx, gy = np.meshgrid(np.arange(m.width, dtype=float), np.arange(m.height, dtype=float))
    x, y = m.normalized(gx, gy)
    if exact:
        rays = np.stack([x.ravel(), y.ravel(), np.ones(x.size)])
        world = rotation_matrices(pan, tilt) @ rays
        u = world[:, 0] / world[:, 2]
        v = world[:, 1] / world[:, 2]
    else:
        u = x.ravel()[None, :] + np.radians(pan)[:, None]
        v = y.ravel()[None, :] - np.radians(tilt)[:, None]
    sx = (u * f + scx).reshape(-1, m.height, m.width)
    sy = (v * f + scy).reshape(-1, m.height, m.width)
    return sx, sy


def bilinear_sample(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional positions; NaN outside ``[0, size-1]``."""
    h, w = img.shape
    eps = 1e-9
    inside = (sx >= -eps) & (sx <= w - 1 + eps) & (sy >= -eps) & (sy <= h - 1 + eps)
    cx = np.clip(sx, 0, w - 1)
    cy = np.clip(sy, 0, h - 1)
    x0 = np.minimum(np.floor(cx).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(cy).astype(np.intp), max(h - 2, 0))
    fx = cx - x0
    fy = cy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.where(inside, out, np.nan)
