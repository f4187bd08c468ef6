"""Dataset-scale conversion: resize profiles, mirrored output trees, splits.

A converted tree mirrors the input tree. Every image ``a/b/name.png``
becomes ``a/b/name.bin`` and each output directory gets a ``meta.txt``
(see :mod:`saccadeconv.events`) plus the root gets ``report.csv``.
"""

from __future__ import annotations

import csv
import logging
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .events import (
    EventStream,
    load_stream,
    save_stream,
    write_meta_entries,
)
from .sim import (
    IntensityImage,
    NoiseConfig,
    SaccadeSchedule,
    SensorModel,
    derive_seed,
    excursion_px,
    simulate,
    three_saccade_schedule,
)
from .sim.simulate import DEFAULT_STEP_US, DEFAULT_THRESHOLD

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".pnm", ".pbm", ".bmp", ".tif", ".tiff"}

MNIST_SIZE = 28
CALTECH_MAX = (240, 180)


@dataclass(frozen=True)
class ConversionProfile:
    """How a dataset's images are sized and recorded.

    ``resize_rule`` is ``"mnist"`` (project to 28x28), ``"caltech"`` (largest
    size within 240x180 keeping aspect ratio) or ``"custom"`` (exactly
    ``custom_size``).
    """

    name: str
    resize_rule: str = "mnist"
    custom_size: tuple[int, int] | None = None
    pixels_per_degree: float = 6.0
    log_epsilon: float = 0.01
    schedule: SaccadeSchedule = field(default_factory=three_saccade_schedule)
    threshold: float = DEFAULT_THRESHOLD
    step_us: int = DEFAULT_STEP_US
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    exact_warp: bool = True

    def __post_init__(self):
        if self.resize_rule not in ("mnist", "caltech", "custom"):
            raise ValueError(f"unknown resize rule {self.resize_rule!r}")
        if self.resize_rule == "custom" and not self.custom_size:
            raise ValueError("custom resize rule needs custom_size")
        w, h = self.max_frame()
        if w > 256 or h > 256:
            raise ValueError(f"profile frame {w}x{h} not addressable with 8-bit addresses")

    def content_limit(self) -> tuple[int, int]:
        if self.resize_rule == "mnist":
            return MNIST_SIZE, MNIST_SIZE
        if self.resize_rule == "caltech":
            return CALTECH_MAX
        return tuple(self.custom_size)

    def max_frame(self) -> tuple[int, int]:
        ex, ey = excursion_px(self.schedule, self.pixels_per_degree)
        w, h = self.content_limit()
        return w + ex, h + ey

    def sensor_for(self, img: IntensityImage) -> SensorModel:
        ex, ey = excursion_px(self.schedule, self.pixels_per_degree)
        return SensorModel(img.width + ex, img.height + ey, self.pixels_per_degree,
                           log_epsilon=self.log_epsilon)


PROFILES = {
    "nmnist": ConversionProfile("nmnist", "mnist"),
    "ncaltech101": ConversionProfile("ncaltech101", "caltech"),
}


def get_profile(name: str, **overrides) -> ConversionProfile:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return replace(base, **overrides) if overrides else base


def _resize(pixels: np.ndarray, w: int, h: int) -> np.ndarray:
    if pixels.shape == (h, w):
        return pixels.copy()
    im = Image.fromarray(pixels.astype(np.float32), mode="F")
    out = np.asarray(im.resize((w, h), Image.BILINEAR, reducing_gap=None), dtype=float)
    return np.clip(out, 0.0, 1.0)


def fit_within(w: int, h: int, max_w: int, max_h: int) -> tuple[int, int]:
    """Largest size with the aspect ratio of ``w x h`` inside ``max_w x max_h``."""
    scale = min(max_w / w, max_h / h)
    nw = min(max_w, max(1, int(round(w * scale))))
    nh = min(max_h, max(1, int(round(h * scale))))
    return nw, nh


def resize_for_profile(img: IntensityImage, profile: ConversionProfile) -> IntensityImage:
    if img.width == 0 or img.height == 0:
        raise ValueError("cannot resize an empty image")
    if profile.resize_rule == "mnist":
        w = h = MNIST_SIZE
    elif profile.resize_rule == "caltech":
        w, h = fit_within(img.width, img.height, *CALTECH_MAX)
    else:
        w, h = profile.custom_size
    return IntensityImage(_resize(img.pixels, w, h))


def load_image(path: str | os.PathLike) -> IntensityImage:
    """Read a raster as luminance in [0, 1] (0.299 R + 0.587 G + 0.114 B)."""
    with Image.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=float)
            scale = 65535.0 if im.mode.startswith("I;16") or arr.max() > 255 else 255.0
            return IntensityImage(np.clip(arr / scale, 0, 1))
        if im.mode == "F":
            return IntensityImage(np.clip(np.asarray(im, dtype=float), 0, 1))
        if im.mode in ("1", "L"):
            return IntensityImage(np.asarray(im.convert("L"), dtype=float) / 255.0)
        rgb = np.asarray(im.convert("RGB"), dtype=float) / 255.0
    lum = rgb @ np.array([0.299, 0.587, 0.114])
    return IntensityImage(np.clip(lum, 0.0, 1.0))


def convert_image(img: IntensityImage, profile: ConversionProfile, seed: int) -> EventStream:
    """Resize and record one image with the given per-recording seed."""
    img = resize_for_profile(img, profile)
    m = profile.sensor_for(img)
    return simulate(img, profile.schedule, m, profile.threshold, profile.step_us,
                    profile.noise.with_seed(seed), profile.exact_warp)


# --- directory conversion ----------------------------------------------------

@dataclass
class RecordingEntry:
    path: str
    on_count: int = 0
    off_count: int = 0
    duration_us: int = 0
    wall_time_s: float = 0.0
    status: str = "ok"
    message: str = ""
    width: int = 0
    height: int = 0


@dataclass
class ConversionReport:
    entries: list[RecordingEntry] = field(default_factory=list)

    @property
    def total_on(self) -> int:
        return sum(e.on_count for e in self.entries)

    @property
    def total_off(self) -> int:
        return sum(e.off_count for e in self.entries)

    @property
    def failures(self) -> list[RecordingEntry]:
        return [e for e in self.entries if e.status == "failed"]

    @property
    def converted(self) -> list[RecordingEntry]:
        return [e for e in self.entries if e.status == "ok"]

    def seconds_per_image(self) -> float:
        done = self.converted
        return sum(e.wall_time_s for e in done) / len(done) if done else 0.0

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "on_count", "off_count", "duration_us", "status"])
            for e in sorted(self.entries, key=lambda e: e.path):
                w.writerow([e.path, e.on_count, e.off_count, e.duration_us, e.status])

    def summary(self) -> str:
        return (
            f"{len(self.entries)} images: {len(self.converted)} converted, "
            f"{sum(e.status == 'skipped' for e in self.entries)} skipped, "
            f"{len(self.failures)} failed; {self.total_on} ON / {self.total_off} OFF events; "
            f"{1e3 * self.seconds_per_image():.1f} ms/image"
        )


def find_images(root: str | os.PathLike) -> list[Path]:
    root = Path(root)
    return sorted(
        p.relative_to(root)
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )


def _convert_one(args) -> tuple[RecordingEntry, bytes | None]:
    src, rel, profile, seed = args
    entry = RecordingEntry(rel.with_suffix(".bin").as_posix())
    t0 = time.perf_counter()
    try:
        img = load_image(src)
        s = convert_image(img, profile, derive_seed(seed, rel.as_posix()))
    except Exception as exc:  # a bad image must never abort the batch
        entry.status = "failed"
        entry.message = f"{type(exc).__name__}: {exc}"
        return entry, None
    entry.wall_time_s = time.perf_counter() - t0
    entry.on_count, entry.off_count = s.on_count, s.off_count
    entry.duration_us, entry.width, entry.height = s.duration, s.width, s.height
    return entry, s


def convert_directory(in_dir: str | os.PathLike, out_dir: str | os.PathLike,
                      profile: ConversionProfile, seed: int = 0, force: bool = False,
                      jobs: int = 1) -> ConversionReport:
    """Convert every image below ``in_dir`` into a mirrored tree of ``.bin`` files.

    Existing outputs are kept (and reported as ``skipped``) unless ``force``.
    Unreadable images are recorded as failures; the batch continues.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    for d in sorted(p for p in in_dir.rglob("*") if p.is_dir()):
        (out_dir / d.relative_to(in_dir)).mkdir(parents=True, exist_ok=True)

    report = ConversionReport()
    todo = []
    for rel in find_images(in_dir):
        dst = out_dir / rel.with_suffix(".bin")
        if dst.exists() and not force:
            report.entries.append(_existing_entry(out_dir, rel))
            continue
        todo.append((in_dir / rel, rel, profile, seed))

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = pool.map(_convert_one, todo, chunksize=8)
            _collect(results, out_dir, report)
    else:
        _collect(map(_convert_one, todo), out_dir, report)

    _write_all_meta(out_dir, report, profile)
    report.write_csv(out_dir / "report.csv")
    log.info(report.summary())
    return report


def _collect(results: Iterable, out_dir: Path, report: ConversionReport) -> None:
    for entry, stream in results:
        if stream is not None:
            save_stream(out_dir / entry.path, stream)
        else:
            log.warning("failed %s: %s", entry.path, entry.message)
        report.entries.append(entry)


def _existing_entry(out_dir: Path, rel: Path) -> RecordingEntry:
    entry = RecordingEntry(rel.with_suffix(".bin").as_posix(), status="skipped")
    try:
        s = load_stream(out_dir / entry.path)
    except Exception as exc:
        entry.message = f"existing output unreadable: {exc}"
        return entry
    entry.on_count, entry.off_count, entry.duration_us = s.on_count, s.off_count, s.duration
    entry.width, entry.height = s.width, s.height
    return entry


def _write_all_meta(out_dir: Path, report: ConversionReport, profile: ConversionProfile) -> None:
    frames: dict[Path, dict[str, tuple[int, int]]] = {}
    for e in report.entries:
        if e.status == "failed" or not e.width:
            continue
        p = Path(e.path)
        frames.setdefault(p.parent, {})[p.name] = (e.width, e.height)
    w, h = profile.max_frame()
    for d in [out_dir / p.relative_to(out_dir) for p in [out_dir, *out_dir.rglob("*")] if p.is_dir()]:
        rel = d.relative_to(out_dir)
        entries = frames.get(rel, {})
        if not entries and not any(d.glob("*.bin")):
            continue
        overrides = {n: wh for n, wh in entries.items() if wh != (w, h)}
        write_meta_entries(d, w, h, profile.schedule.duration_us, overrides)


# --- datasets and splits -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class Recording:
    path: Path
    label: str
    stream: EventStream


def load_dataset(root: str | os.PathLike) -> list[Recording]:
    """Every ``.bin`` below ``root``, labelled by its parent directory name."""
    root = Path(root)
    out = []
    for p in sorted(root.rglob("*.bin")):
        out.append(Recording(p.relative_to(root), p.parent.name, load_stream(p)))
    return out


def group_by_label(items: Iterable, label=lambda r: r.label) -> dict[Hashable, list]:
    groups: dict[Hashable, list] = {}
    for it in items:
        groups.setdefault(label(it), []).append(it)
    return groups


@dataclass
class Split:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter((self.train, self.test))


def split_fixed(dataset: Mapping[Hashable, Sequence], per_class_train: int,
                per_class_test: int, seed: int = 0) -> Split:
    """Disjoint per-class train/test selection of fixed size.

    ``dataset`` maps each label to its samples. Returns ``(sample, label)``
    pairs. A class with too few samples gives train the first
    ``per_class_train`` of its shuffled samples and test the rest, and a
    warning is recorded.
    """
    out = Split()
    for label in sorted(dataset, key=str):
        items = list(dataset[label])
        rng = random.Random(derive_seed(seed, str(label)))
        order = list(range(len(items)))
        rng.shuffle(order)
        need = per_class_train + per_class_test
        if len(items) < need:
            out.warnings.append(
                f"class {label!r}: {len(items)} samples < {need} requested, using all"
            )
        tr = order[:per_class_train]
        te = order[per_class_train:need]
        out.train += [(items[i], label) for i in tr]
        out.test += [(items[i], label) for i in te]
    return out
