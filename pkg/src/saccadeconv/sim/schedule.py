"""Piecewise-linear pan/tilt saccade trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class ScheduleRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    onset_ms: float
    start_deg: tuple[float, float]
    end_deg: tuple[float, float]
    speed_deg_per_s: tuple[float, float]

    def motion_ms(self) -> float:
        """Duration of the motion part of the segment."""
        durations = [
            abs(e - s) / v * 1e3
            for s, e, v in zip(self.start_deg, self.end_deg, self.speed_deg_per_s)
            if v > 0
        ]
        return max(durations, default=0.0)


class Pose(NamedTuple):
    pan_deg: float
    tilt_deg: float
    omega_x: float  # tilt rate, deg/s
    omega_y: float  # pan rate, deg/s

    @property
    def moving(self) -> bool:
        return self.omega_x != 0.0 or self.omega_y != 0.0


@dataclass(frozen=True)
class SaccadeSchedule:
    """Ordered motion segments with onsets spaced ``period_ms`` apart.

    Positions are (pan, tilt) in degrees. Pan is rotation about the sensor
    y axis, tilt rotation about the x axis.
    """

    segments: tuple[Segment, ...]
    period_ms: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        self.validate()

    def validate(self, tol: float = 1e-9) -> None:
        if not self.segments:
            raise ValueError("schedule has no segments")
        for i, seg in enumerate(self.segments):
            durs = [
                abs(e - s) / v * 1e3
                for s, e, v in zip(seg.start_deg, seg.end_deg, seg.speed_deg_per_s)
                if v > 0
            ]
            for s, e, v in zip(seg.start_deg, seg.end_deg, seg.speed_deg_per_s):
                if v == 0 and s != e:
                    raise ValueError(f"segment {i}: displacement with zero speed")
            if durs and max(durs) - min(durs) > tol:
                raise ValueError(f"segment {i}: axes finish at different times {durs}")
            if seg.motion_ms() > self.period_ms + tol:
                raise ValueError(f"segment {i}: motion longer than period")
            if i and abs(seg.onset_ms - self.segments[i - 1].onset_ms - self.period_ms) > tol:
                raise ValueError(f"segment {i}: onset not spaced by period")
            if i and not np.allclose(seg.start_deg, self.segments[i - 1].end_deg):
                raise ValueError(f"segment {i}: does not start where segment {i - 1} ends")
        if not np.allclose(self.segments[-1].end_deg, self.segments[0].start_deg):
            raise ValueError("trajectory is not closed")

    @property
    def duration_ms(self) -> float:
        return self.segments[-1].onset_ms - self.segments[0].onset_ms + self.period_ms

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_ms * 1000))

    def motion_intervals_us(self) -> list[tuple[int, int]]:
        """[start, end) of each motion phase, relative to the first onset."""
        t0 = self.segments[0].onset_ms
        out = []
        for seg in self.segments:
            a = (seg.onset_ms - t0) * 1000
            out.append((int(round(a)), int(round(a + seg.motion_ms() * 1000))))
        return out

    def extent_deg(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """((pan_min, pan_max), (tilt_min, tilt_max)) over the trajectory."""
        pts = np.array([s.start_deg for s in self.segments] + [s.end_deg for s in self.segments])
        return (pts[:, 0].min(), pts[:, 0].max()), (pts[:, 1].min(), pts[:, 1].max())

    def pose(self, t_us: float) -> Pose:
        return saccade_pose(self, t_us)

    def poses(self, t_us: np.ndarray) -> np.ndarray:
        """Vectorised pose lookup; returns an (n, 4) array of Pose fields."""
        t_ms = np.asarray(t_us, dtype=float) / 1000.0
        if t_ms.size and (t_ms.min() < 0 or t_ms.max() >= self.duration_ms):
            raise ScheduleRangeError("time outside recording")
        t0 = self.segments[0].onset_ms
        idx = np.clip(((t_ms) // self.period_ms).astype(int), 0, len(self.segments) - 1)
        out = np.empty((t_ms.size, 4))
        for i, seg in enumerate(self.segments):
            sel = idx == i
            if not sel.any():
                continue
            local = t_ms[sel] - (seg.onset_ms - t0)
            m = seg.motion_ms()
            start, end = np.array(seg.start_deg), np.array(seg.end_deg)
            if m > 0:
                frac = np.clip(local / m, 0.0, 1.0)
            else:
                frac = np.ones_like(local)
            pos = start[None, :] + frac[:, None] * (end - start)[None, :]
            vel = np.zeros_like(pos)
            moving = local < m
            if m > 0:
                vel[moving] = (end - start) / (m / 1000.0)
            out[sel, 0] = pos[:, 0]
            out[sel, 1] = pos[:, 1]
            out[sel, 2] = vel[:, 1]
            out[sel, 3] = vel[:, 0]
        return out


def saccade_pose(schedule: SaccadeSchedule, t_us: float) -> Pose:
    """Pose at ``t_us`` microseconds after the first saccade onset.

    Position is piecewise linear; velocity is constant during motion and
    zero during the dwell that follows.
    """
    if not 0 <= t_us < schedule.duration_us:
        raise ScheduleRangeError(
            f"t={t_us} us outside recording [0, {schedule.duration_us})"
        )
    return Pose(*schedule.poses(np.array([t_us]))[0])


def three_saccade_schedule() -> SaccadeSchedule:
    """The isosceles-triangle trajectory used for both datasets.

    Onsets are rebased so the first saccade starts at t=0; each motion
    takes 50 ms followed by a 50 ms dwell.
    """
    return SaccadeSchedule(
        segments=(
            Segment(0.0, (-0.5, 0.5), (0.0, -0.5), (10.0, 20.0)),
            Segment(100.0, (0.0, -0.5), (0.5, 0.5), (10.0, 20.0)),
            Segment(200.0, (0.5, 0.5), (-0.5, 0.5), (20.0, 0.0)),
        ),
        period_ms=100.0,
    )


def custom_schedule(points: Sequence[tuple[float, float]], speed_deg_per_s: float,
                    period_ms: float) -> SaccadeSchedule:
    """Closed polygon through ``points`` at a fixed angular speed per segment."""
    segs = []
    n = len(points)
    for i in range(n):
        a, b = np.array(points[i], float), np.array(points[(i + 1) % n], float)
        d = b - a
        length = float(np.hypot(*d))
        speed = tuple(abs(d) / length * speed_deg_per_s) if length else (0.0, 0.0)
        segs.append(Segment(i * period_ms, tuple(a), tuple(b), speed))
    return SaccadeSchedule(tuple(segs), period_ms)
