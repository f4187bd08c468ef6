"""Recording statistics, event-rate profiles, temporal spectra and event frames."""

from __future__ import annotations

import contextlib
import csv
import math
import os
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .events import ON, EventStream

FEATURE_NAMES = (
    "total", "on", "off", "on_off_ratio",
    "mean_x", "mean_y", "std_x", "std_y", "max_x", "max_y",
)


@dataclass(frozen=True)
class FeatureVector:
    """Per-recording statistics used as classifier features.

    ``ratio_flagged`` marks recordings with no OFF events, whose ratio is
    set to the ON count instead of infinity. ``positional_defined`` is
    False for empty recordings; their positional statistics are NaN.
    """

    total: int
    on: int
    off: int
    on_off_ratio: float
    mean_x: float
    mean_y: float
    std_x: float
    std_y: float
    max_x: float
    max_y: float
    ratio_flagged: bool = False
    positional_defined: bool = True

    def values(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=float)

    def get(self, name: str) -> float:
        if name not in FEATURE_NAMES:
            raise KeyError(f"unknown feature {name!r}; choose from {FEATURE_NAMES}")
        return float(getattr(self, name))


def compute_features(s: EventStream) -> FeatureVector:
    ev = s.events
    n = len(ev)
    on = int(np.count_nonzero(ev["p"] == ON))
    off = n - on
    if off:
        ratio, flagged = on / off, False
    else:
        ratio, flagged = float(on), True
    if n == 0:
        nan = math.nan
        return FeatureVector(0, 0, 0, ratio, nan, nan, nan, nan, nan, nan, flagged, False)
    x = ev["x"].astype(float)
    y = ev["y"].astype(float)
    return FeatureVector(
        n, on, off, ratio,
        float(x.mean()), float(y.mean()), float(x.std()), float(y.std()),
        float(x.max()), float(y.max()), flagged, True,
    )


def address_range(s: EventStream) -> tuple[int, int]:
    """Extent of the address space a recording can occupy.

    Recordings are framed to the envelope swept by the image during the
    saccades, so this depends only on the (resized) image size.
    """
    return s.width, s.height


def aggregate_features(streams: Sequence[EventStream]) -> dict[str, tuple[float, float]]:
    """Sample mean and standard deviation of every statistic over a dataset.

    Besides the ten per-recording features this includes ``x_range`` and
    ``y_range`` from :func:`address_range`. Undefined positional values
    (empty recordings) are skipped.
    """
    if not streams:
        raise ValueError("need at least one recording")
    feats = np.array([compute_features(s).values() for s in streams])
    ranges = np.array([address_range(s) for s in streams], dtype=float)
    cols = dict(zip(FEATURE_NAMES, feats.T))
    cols["x_range"], cols["y_range"] = ranges.T
    out = {}
    for name, col in cols.items():
        col = col[np.isfinite(col)]
        if len(col) == 0:
            out[name] = (math.nan, math.nan)
            continue
        mean = float(col.mean())
        std = float(np.sqrt(((col - mean) ** 2).sum() / (len(col) - 1))) if len(col) > 1 else 0.0
        out[name] = (mean, std)
    return out


# --- rate profiles -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RateProfile:
    bin_us: int
    bin_start_us: np.ndarray
    mean: np.ndarray  # events/ms
    std: np.ndarray
    counts: np.ndarray  # (recordings, bins) raw counts

    def total_events(self) -> int:
        return int(self.counts.sum())


def rate_profile(streams: Sequence[EventStream], bin_us: int = 1000) -> RateProfile:
    """Mean and standard deviation of the event rate across recordings."""
    if not streams:
        raise ValueError("need at least one recording")
    if bin_us <= 0:
        raise ValueError("bin_us must be positive")
    durations = {s.duration for s in streams}
    if len(durations) != 1:
        raise ValueError(f"recordings have mixed durations: {sorted(durations)}")
    duration = durations.pop()
    n_bins = max(1, -(-duration // bin_us))
    edges = np.arange(n_bins + 1) * bin_us
    counts = np.array([np.histogram(s.events["t"], edges)[0] for s in streams])
    rates = counts / (bin_us / 1000.0)
    return RateProfile(bin_us, edges[:-1], rates.mean(axis=0), rates.std(axis=0), counts)


# --- temporal spectrum ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Spectrum:
    freq_hz: np.ndarray
    magnitude: np.ndarray
    length_exp: int

    def energy(self) -> float:
        return float(np.sum(self.magnitude**2))

    def peak_mask(self, factor: float = 5.0, half_width_hz: float = 2.0) -> np.ndarray:
        """Bins whose magnitude exceeds ``factor`` times the median of their
        ``+-half_width_hz`` neighbourhood."""
        df = self.freq_hz[1] - self.freq_hz[0]
        half = max(1, int(round(half_width_hz / df)))
        med = ndimage.median_filter(self.magnitude, size=2 * half + 1, mode="nearest")
        return self.magnitude > factor * med

    def has_peak_near(self, freq: float, tol_hz: float, **kw) -> bool:
        sel = np.abs(self.freq_hz - freq) <= tol_hz
        return bool(np.any(self.peak_mask(**kw)[sel]))


def concatenate_times(streams: Sequence[EventStream], length_us: int, seed: int) -> np.ndarray:
    """Timestamps of randomly chosen recordings laid end to end, cut at ``length_us``."""
    rng = np.random.default_rng(seed)
    parts, offset = [], 0
    if all(s.duration <= 0 for s in streams):
        raise ValueError("recordings have zero duration")
    while offset < length_us:
        s = streams[int(rng.integers(len(streams)))]
        if s.duration <= 0:
            continue
        parts.append(s.events["t"].astype(np.int64) + offset)
        offset += s.duration
    t = np.concatenate(parts)
    return t[t < length_us]


def temporal_spectrum(streams: Sequence[EventStream], length_exp: int = 22,
                      seed: int = 0) -> Spectrum:
    """Normalised magnitude spectrum of the per-microsecond event count.

    The count vector has its mean removed and is scaled to unit l2 norm, so
    the one-sided magnitudes satisfy ``sum(magnitude**2) == 1``.
    """
    if length_exp < 16:
        raise ValueError("length_exp must be >= 16")
    if not streams:
        raise ValueError("empty dataset")
    n = 1 << length_exp
    t = concatenate_times(streams, n, seed)
    x = np.bincount(t, minlength=n).astype(float)
    x -= x.mean()
    norm = np.linalg.norm(x)
    if norm == 0:
        raise ValueError("no events to analyse")
    x /= norm
    spec = np.fft.rfft(x)
    power = np.abs(spec) ** 2 / n
    power[1:-1] *= 2
    freq = np.fft.rfftfreq(n, d=1e-6)
    return Spectrum(freq, np.sqrt(power), length_exp)


# --- frames -------------------------------------------------------------------

RED = (255, 0, 0)
BLUE = (0, 0, 255)


def render_frames(s: EventStream, window_us: int = 10_000) -> np.ndarray:
    """RGB rasters of consecutive windows: ON red, OFF blue, last event wins."""
    if window_us <= 0:
        raise ValueError("window must be positive")
    n = max(1, -(-s.duration // window_us))
    frames = np.zeros((n, s.height, s.width, 3), dtype=np.uint8)
    ev = s.events
    k = (ev["t"] // window_us).astype(np.intp)
    key = (k * s.height + ev["y"]) * s.width + ev["x"]
    # events are time ordered: keep the last event at each (frame, pixel)
    _, rev_idx = np.unique(key[::-1], return_index=True)
    last = len(ev) - 1 - rev_idx
    colours = np.where((ev["p"][last] == ON)[:, None], RED, BLUE).astype(np.uint8)
    frames[k[last], ev["y"][last], ev["x"][last]] = colours
    return frames


def save_frames(frames: np.ndarray, out_dir: str | os.PathLike, prefix: str = "frame") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(frames):
        p = out_dir / f"{prefix}_{i:04d}.ppm"
        Image.fromarray(f, "RGB").save(p)
        paths.append(p)
    return paths


# --- CSV output ---------------------------------------------------------------

@contextlib.contextmanager
def _text_out(dest):
    """Open ``dest`` for CSV writing unless it is already a file object."""
    if hasattr(dest, "write"):
        yield dest
    else:
        with open(dest, "w", newline="") as fh:
            yield fh


def write_features_csv(dest, rows: Sequence[tuple[str, str, FeatureVector]]) -> None:
    names = [f.name for f in fields(FeatureVector)]
    with _text_out(dest) as fh:
        w = csv.writer(fh)
        w.writerow(["path", "label", *names])
        for p, label, fv in rows:
            w.writerow([p, label, *(_cell(v) for v in astuple(fv))])


def write_spectrum_csv(dest, spec: Spectrum, max_hz: float | None = None) -> None:
    sel = slice(None) if max_hz is None else spec.freq_hz <= max_hz
    with _text_out(dest) as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "magnitude"])
        for f, m in zip(spec.freq_hz[sel], spec.magnitude[sel]):
            w.writerow([repr(float(f)), repr(float(m))])


def write_rate_csv(dest, prof: RateProfile) -> None:
    with _text_out(dest) as fh:
        w = csv.writer(fh)
        w.writerow(["bin_start_us", "mean", "std"])
        for b, m, s in zip(prof.bin_start_us, prof.mean, prof.std):
            w.writerow([int(b), repr(float(m)), repr(float(s))])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v
