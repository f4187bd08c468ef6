"""Event generation for a rotating sensor viewing a static image.

Each pixel keeps a reference log intensity. Whenever the current log
intensity moves a full contrast threshold away from the reference, one
event is emitted and the reference steps by one threshold towards the
current value. The scene is sampled on a fixed time grid and crossing
times are interpolated linearly inside each step.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from ..events import EventStream, MAX_TIMESTAMP, make_events
from .geometry import SensorModel, bilinear_sample, warp_coordinates
from .image import IntensityImage
from .schedule import Pose, SaccadeSchedule, three_saccade_schedule

DEFAULT_THRESHOLD = 1.0
DEFAULT_STEP_US = 100


class ImageSizeError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    background_rate_hz: float = 0.5
    threshold_sigma: float = 0.03
    latency_jitter_us: float = 100.0
    seed: int = 0

    def __post_init__(self):
        for name in ("background_rate_hz", "threshold_sigma", "latency_jitter_us"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def off(cls, seed: int = 0) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, seed)

    def with_seed(self, seed: int) -> "NoiseConfig":
        return replace(self, seed=seed)


def derive_seed(global_seed: int, key: str) -> int:
    """Stable per-recording seed so parallel scheduling never changes output."""
    digest = hashlib.sha256(f"{global_seed}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def log_image(img: IntensityImage, log_epsilon: float) -> np.ndarray:
    """``ln(I + eps)`` shifted to be centred between black and white.

    Only differences of log intensity matter to the pixel model, so the
    shift is free. Black and white map to exactly -h and +h; together with
    sign-symmetric arithmetic downstream this makes a binary image and its
    inverse produce mirror-image event streams bit for bit.
    """
    lo, hi = math.log(log_epsilon), math.log(1.0 + log_epsilon)
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    out = np.log(img.pixels + log_epsilon) - mid
    out[img.pixels == 0.0] = -half
    out[img.pixels == 1.0] = half
    return out


def warp_image(img: IntensityImage, pose: Pose | tuple[float, float], m: SensorModel,
               exact: bool = True) -> np.ma.MaskedArray:
    """The sensor's view of ``img`` at ``pose``; out-of-frame pixels are masked."""
    pan, tilt = pose[0], pose[1]
    sx, sy = warp_coordinates(pan, tilt, m, img.shape, exact=exact)
    vals = bilinear_sample(img.pixels, sx[0], sy[0])
    mask = np.isnan(vals)
    return np.ma.MaskedArray(np.where(mask, 0.0, vals), mask=mask)


@numba.njit(cache=True)
def _grow(a, n):
    out = np.empty(max(2 * a.shape[0], n), a.dtype)
    out[: a.shape[0]] = a
    return out


@numba.njit(cache=True)
def _crossings(L, k0, step_us, lref, lprev, active, thr, out_pix, out_pol, out_t, n_out):
    """Threshold crossings for rows of ``L`` (steps x pixels); NaN = out of frame.

    Updates ``lref``, ``lprev`` and ``active`` in place and appends events to
    the output buffers, which are returned (possibly reallocated).
    """
    n_steps, n_pix = L.shape
    for r in range(n_steps):
        k = k0 + r
        t_base = (k - 1) * step_us
        for p in range(n_pix):
            cur = L[r, p]
            if math.isnan(cur):
                active[p] = False
                continue
            if not active[p]:
                active[p] = True
                lref[p] = cur
                lprev[p] = cur
                continue
            th = thr[p]
            prev = lprev[p]
            while True:
                d = cur - lref[p]
                if d >= th:
                    level = lref[p] + th
                    pol = 1
                elif -d >= th:
                    level = lref[p] - th
                    pol = 0
                else:
                    break
                frac = (level - prev) / (cur - prev)
                if n_out >= out_t.shape[0]:
                    out_pix = _grow(out_pix, n_out + 1)
                    out_pol = _grow(out_pol, n_out + 1)
                    out_t = _grow(out_t, n_out + 1)
                out_pix[n_out] = p
                out_pol[n_out] = pol
                out_t[n_out] = t_base + int(math.floor(frac * step_us))
                n_out += 1
                lref[p] = level
            lprev[p] = cur
    return out_pix, out_pol, out_t, n_out


@numba.njit(cache=True)
def _fused(logimg, pan, tilt, exact, k0, step_us, cx, cy, f, width, height,
           lref, lprev, active, thr, out_pix, out_pol, out_t, n_out):
    """Warp + bilinear sample + crossing detection for a run of time steps.

    Same arithmetic as :func:`sample_log_frames` followed by
    :func:`_crossings`, without materialising the frames.
    """
    h, w = logimg.shape
    scx = (w - 1) / 2.0
    scy = (h - 1) / 2.0
    row = np.empty((1, width * height))
    for r in range(pan.shape[0]):
        p = math.radians(pan[r])
        t = math.radians(tilt[r])
        cp, sp, ct, st = math.cos(p), math.sin(p), math.cos(t), math.sin(t)
        for j in range(height):
            y = (j - cy) / f
            for i in range(width):
                x = (i - cx) / f
                if exact:
                    # R = Ry(pan) @ Rx(tilt) applied to the ray (x, y, 1)
                    ry = ct * y - st
                    rz = st * y + ct
                    wx = cp * x + sp * rz
                    wz = -sp * x + cp * rz
                    u = wx / wz
                    v = ry / wz
                else:
                    u = x + p
                    v = y - t
                sx = u * f + scx
                sy = v * f + scy
                row[0, j * width + i] = _bilinear(logimg, sx, sy)
        out_pix, out_pol, out_t, n_out = _crossings(
            row, k0 + r, step_us, lref, lprev, active, thr, out_pix, out_pol, out_t, n_out
        )
    return out_pix, out_pol, out_t, n_out


@numba.njit(cache=True)
def _bilinear(img, sx, sy):
    h, w = img.shape
    eps = 1e-9
    if sx < -eps or sx > w - 1 + eps or sy < -eps or sy > h - 1 + eps:
        return np.nan
    cx = min(max(sx, 0.0), w - 1.0)
    cy = min(max(sy, 0.0), h - 1.0)
    x0 = min(int(math.floor(cx)), max(w - 2, 0))
    y0 = min(int(math.floor(cy)), max(h - 2, 0))
    fx = cx - x0
    fy = cy - y0
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def sample_log_frames(logimg: np.ndarray, schedule: SaccadeSchedule, m: SensorModel,
                      t_us: np.ndarray, exact: bool = True) -> np.ndarray:
    """Log intensity seen by every sensor pixel at times ``t_us`` (NaN outside)."""
    poses = schedule.poses(t_us)
    sx, sy = warp_coordinates(poses[:, 0], poses[:, 1], m, logimg.shape, exact=exact)
    return bilinear_sample(logimg, sx, sy).reshape(len(t_us), -1)


def simulate(img: IntensityImage, schedule: SaccadeSchedule | None = None,
             m: SensorModel | None = None, threshold: float = DEFAULT_THRESHOLD,
             step_us: int = DEFAULT_STEP_US, noise: NoiseConfig | None = None,
             exact_warp: bool = True) -> EventStream:
    """Convert a static image into an event stream.

    The image is interpolated in log-intensity, ``ln(I + log_epsilon)``, so
    contrast-inverted binary images give exactly mirrored event streams.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if step_us < 1:
        raise ValueError("step_us must be >= 1")
    schedule = schedule or three_saccade_schedule()
    m = m or SensorModel(img.width, img.height)
    noise = noise if noise is not None else NoiseConfig()
    if img.width > m.width or img.height > m.height:
        raise ImageSizeError(
            f"image {img.width}x{img.height} larger than sensor {m.width}x{m.height}"
        )
    duration = schedule.duration_us
    if duration > MAX_TIMESTAMP:
        raise ValueError("schedule longer than the 23-bit timestamp range")
    step_us = int(step_us)
    rng = np.random.default_rng(noise.seed)
    n_pix = m.width * m.height

    thr = np.full(n_pix, float(threshold))
    if noise.threshold_sigma > 0:
        thr *= np.maximum(1.0 + noise.threshold_sigma * rng.standard_normal(n_pix), 0.05)

    logimg = log_image(img, m.log_epsilon)
    n_steps = (duration + step_us - 1) // step_us
    lref = np.zeros(n_pix)
    lprev = np.zeros(n_pix)
    active = np.zeros(n_pix, dtype=np.bool_)
    cap = 4096
    out_pix = np.empty(cap, np.int64)
    out_pol = np.empty(cap, np.uint8)
    out_t = np.empty(cap, np.int64)
    n_out = 0
    poses = schedule.poses(np.arange(n_steps) * step_us)
    cx, cy = m.principal_point
    out_pix, out_pol, out_t, n_out = _fused(
        logimg, poses[:, 0].copy(), poses[:, 1].copy(), exact_warp, 0, step_us,
        float(cx), float(cy), m.focal_px, m.width, m.height,
        lref, lprev, active, thr, out_pix, out_pol, out_t, n_out,
    )
    pix, pol, t = out_pix[:n_out], out_pol[:n_out], out_t[:n_out]

    if noise.latency_jitter_us > 0 and n_out:
        t = t + np.rint(noise.latency_jitter_us * rng.standard_normal(n_out)).astype(np.int64)
        t = np.clip(t, 0, duration - 1)

    if noise.background_rate_hz > 0:
        counts = rng.poisson(noise.background_rate_hz * duration * 1e-6, n_pix)
        total = int(counts.sum())
        pix = np.concatenate([pix, np.repeat(np.arange(n_pix), counts)])
        pol = np.concatenate([pol, rng.integers(0, 2, total).astype(np.uint8)])
        t = np.concatenate([t, rng.integers(0, duration, total)])

    order = np.argsort(t, kind="stable")
    pix, pol, t = pix[order], pol[order], t[order]
    ev = make_events(pix % m.width, pix // m.width, pol, t)
    return EventStream(ev, m.width, m.height, duration)


def excursion_px(schedule: SaccadeSchedule, pixels_per_degree: float) -> tuple[int, int]:
    """Extra sensor pixels needed in x and y to keep the image in view."""
    (p0, p1), (t0, t1) = schedule.extent_deg()
    return (
        int(math.ceil((p1 - p0) * pixels_per_degree - 1e-9)),
        int(math.ceil((t1 - t0) * pixels_per_degree - 1e-9)),
    )


def sensor_for_image(img: IntensityImage, schedule: SaccadeSchedule,
                     pixels_per_degree: float = 6.0, log_epsilon: float = 0.01) -> SensorModel:
    """Smallest sensor frame that covers the image over the whole trajectory."""
    ex, ey = excursion_px(schedule, pixels_per_degree)
    return SensorModel(img.width + ex, img.height + ey, pixels_per_degree,
                       log_epsilon=log_epsilon)
