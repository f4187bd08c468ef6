"""Address-event data model and the 40-bit binary event file codec.

Each event is stored as five bytes, most significant byte first::

    byte 0      x address
    byte 1      y address
    byte 2      polarity (bit 7) | timestamp bits 22-16
    byte 3      timestamp bits 15-8
    byte 4      timestamp bits 7-0

Files carry no header. Frame size and duration live in a per-directory
``meta.txt`` sidecar (see :func:`write_meta` / :func:`read_meta`).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

BYTES_PER_EVENT = 5
MAX_ADDRESS = 255
TIMESTAMP_BITS = 23
MAX_TIMESTAMP = (1 << TIMESTAMP_BITS) - 1

ON = 1
OFF = 0

EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("t", "<u4")])


class EventFormatError(ValueError):
    """Base class for malformed event data."""


class TruncatedRecordError(EventFormatError):
    def __init__(self, offset: int, length: int):
        self.offset = offset
        super().__init__(
            f"truncated event record at byte offset {offset} "
            f"({length - offset} trailing bytes, need {BYTES_PER_EVENT})"
        )


class AddressRangeError(EventFormatError):
    def __init__(self, index: int, x: int, y: int, width: int, height: int):
        self.index = index
        super().__init__(
            f"event {index} at ({x}, {y}) outside {width}x{height} frame"
        )


class MonotonicityError(EventFormatError):
    def __init__(self, index: int, prev: int, t: int):
        self.index = index
        super().__init__(f"event {index} timestamp {t} < previous timestamp {prev}")


class AnnotationParseError(EventFormatError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class Event(NamedTuple):
    x: int
    y: int
    polarity: int
    timestamp: int

    def validate(self) -> None:
        if not (0 <= self.x <= MAX_ADDRESS and 0 <= self.y <= MAX_ADDRESS):
            raise ValueError(f"address ({self.x}, {self.y}) does not fit in 8 bits")
        if self.polarity not in (ON, OFF):
            raise ValueError(f"polarity must be 0 or 1, got {self.polarity!r}")
        if not 0 <= self.timestamp <= MAX_TIMESTAMP:
            raise ValueError(f"timestamp {self.timestamp} does not fit in 23 bits")


def encode_event(e: Event) -> bytes:
    e.validate()
    t = e.timestamp
    return bytes(
        (e.x, e.y, (e.polarity << 7) | (t >> 16), (t >> 8) & 0xFF, t & 0xFF)
    )


def decode_event(block: bytes, offset: int = 0) -> Event:
    """Decode one 5-byte block; ``offset`` is only used for error reporting."""
    if len(block) != BYTES_PER_EVENT:
        raise TruncatedRecordError(offset, offset + len(block))
    b0, b1, b2, b3, b4 = block
    return Event(b0, b1, b2 >> 7, ((b2 & 0x7F) << 16) | (b3 << 8) | b4)


def make_events(x, y, p, t) -> np.ndarray:
    """Pack parallel arrays into a structured event array."""
    x = np.asarray(x)
    out = np.empty(x.shape[0], dtype=EVENT_DTYPE)
    out["x"] = x
    out["y"] = y
    out["p"] = p
    out["t"] = t
    return out


@dataclass(frozen=True, eq=False)
class EventStream:
    """Timestamp-ordered events on a ``width`` x ``height`` frame.

    ``events`` is a structured array with fields ``x``, ``y``, ``p``, ``t``.
    The array is made read-only on construction.
    """

    events: np.ndarray
    width: int
    height: int
    duration: int = field(default=-1)

    def __post_init__(self):
        ev = np.asarray(self.events)
        if ev.dtype != EVENT_DTYPE:
            ev = ev.astype(EVENT_DTYPE)
        ev = ev.copy() if ev.flags.writeable else ev
        ev.flags.writeable = False
        object.__setattr__(self, "events", ev)
        last = int(ev["t"][-1]) if len(ev) else 0
        if self.duration < 0:
            object.__setattr__(self, "duration", last + 1 if len(ev) else 0)
        self.validate()

    @classmethod
    def empty(cls, width: int, height: int, duration: int = 0) -> "EventStream":
        return cls(np.empty(0, EVENT_DTYPE), width, height, duration)

    @classmethod
    def from_events(cls, events: Iterable[Event], width: int, height: int,
                    duration: int = -1) -> "EventStream":
        rows = [tuple(e) for e in events]
        if not rows:
            return cls.empty(width, height, max(duration, 0))
        x, y, p, t = zip(*rows)
        return cls(make_events(x, y, p, t), width, height, duration)

    def validate(self) -> None:
        ev = self.events
        if not (0 < self.width <= MAX_ADDRESS + 1 and 0 < self.height <= MAX_ADDRESS + 1):
            raise ValueError(f"frame {self.width}x{self.height} not addressable in 8 bits")
        _check_addresses(ev, self.width, self.height)
        _check_monotonic(ev)
        if len(ev) and int(ev["t"][-1]) > MAX_TIMESTAMP:
            raise ValueError("timestamp exceeds 23 bits")
        if len(ev) and self.duration < int(ev["t"][-1]):
            raise ValueError(
                f"duration {self.duration} shorter than last timestamp {int(ev['t'][-1])}"
            )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        for x, y, p, t in self.events.tolist():
            yield Event(x, y, p, t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.duration == other.duration
            and np.array_equal(self.events, other.events)
        )

    @property
    def on_count(self) -> int:
        return int(np.count_nonzero(self.events["p"] == ON))

    @property
    def off_count(self) -> int:
        return len(self) - self.on_count


def _check_addresses(ev: np.ndarray, width: int, height: int) -> None:
    bad = np.flatnonzero((ev["x"] >= width) | (ev["y"] >= height))
    if len(bad):
        i = int(bad[0])
        raise AddressRangeError(i, int(ev["x"][i]), int(ev["y"][i]), width, height)


def _check_monotonic(ev: np.ndarray) -> None:
    if len(ev) < 2:
        return
    t = ev["t"].astype(np.int64)
    bad = np.flatnonzero(np.diff(t) < 0)
    if len(bad):
        i = int(bad[0]) + 1
        raise MonotonicityError(i, int(t[i - 1]), int(t[i]))


def read_stream(data: bytes, width: int, height: int,
                duration: int | None = None) -> EventStream:
    """Decode a whole event file.

    Raises :class:`TruncatedRecordError`, :class:`AddressRangeError` or
    :class:`MonotonicityError`; nothing else is rejected.
    """
    n, rem = divmod(len(data), BYTES_PER_EVENT)
    if rem:
        raise TruncatedRecordError(n * BYTES_PER_EVENT, len(data))
    raw = np.frombuffer(data, dtype=np.uint8).reshape(n, BYTES_PER_EVENT)
    b2 = raw[:, 2].astype(np.uint32)
    t = ((b2 & 0x7F) << 16) | (raw[:, 3].astype(np.uint32) << 8) | raw[:, 4]
    ev = make_events(raw[:, 0], raw[:, 1], b2 >> 7, t)
    _check_addresses(ev, width, height)
    _check_monotonic(ev)
    if duration is None:
        duration = -1
    elif n and duration < int(t[-1]):
        duration = int(t[-1]) + 1
    return EventStream(ev, width, height, duration)


def write_stream(s: EventStream) -> bytes:
    ev = s.events
    t = ev["t"].astype(np.uint32)
    raw = np.empty((len(ev), BYTES_PER_EVENT), dtype=np.uint8)
    raw[:, 0] = ev["x"]
    raw[:, 1] = ev["y"]
    raw[:, 2] = (ev["p"].astype(np.uint32) << 7) | (t >> 16)
    raw[:, 3] = (t >> 8) & 0xFF
    raw[:, 4] = t & 0xFF
    return raw.tobytes()


def crop_spatial(s: EventStream, box: Sequence[int]) -> EventStream:
    """Keep events strictly inside ``box = (x_min, y_min, x_max, y_max)``.

    Strictly inside means ``x_min <= x < x_max`` (half-open on the far edge),
    so the full frame ``(0, 0, width, height)`` is the identity. Coordinates
    are rebased to the box origin.
    """
    x0, y0, x1, y1 = (int(v) for v in box)
    if not (0 <= x0 <= x1 <= s.width and 0 <= y0 <= y1 <= s.height):
        raise ValueError(f"box {tuple(box)} outside {s.width}x{s.height} frame")
    w, h = x1 - x0, y1 - y0
    if w == 0 or h == 0:
        # zero-area boxes are legal; keep a 1x1 frame so the stream stays valid
        return EventStream.empty(max(w, 1), max(h, 1), s.duration)
    ev = s.events
    keep = (ev["x"] >= x0) & (ev["x"] < x1) & (ev["y"] >= y0) & (ev["y"] < y1)
    out = ev[keep].copy()
    out["x"] -= x0
    out["y"] -= y0
    return EventStream(out, w, h, s.duration)


def time_slice(s: EventStream, t0: int, t1: int) -> EventStream:
    if t0 > t1:
        raise ValueError(f"t0={t0} > t1={t1}")
    t = s.events["t"]
    lo, hi = np.searchsorted(t, t0, "left"), np.searchsorted(t, t1, "left")
    return EventStream(s.events[lo:hi], s.width, s.height, s.duration)


# --- annotations ---------------------------------------------------------

@dataclass(frozen=True)
class Annotation:
    box: tuple[int, int, int, int]
    contour: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if x0 > x1 or y0 > y1:
            raise ValueError(f"bounding box corners out of order: {self.box}")
        object.__setattr__(self, "box", tuple(self.box))
        object.__setattr__(self, "contour", tuple(tuple(v) for v in self.contour))

    def check_bounds(self, width: int, height: int) -> None:
        for i, (x, y) in enumerate(self.contour):
            if not (0 <= x < width and 0 <= y < height):
                raise ValueError(f"contour vertex {i} ({x}, {y}) outside {width}x{height}")


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def _num(tok: str, line_no: int):
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        raise AnnotationParseError(line_no, f"not a number: {tok!r}") from None


def write_annotation(a: Annotation) -> str:
    lines = ["BBOX " + " ".join(_fmt(v) for v in a.box)]
    lines += [f"V {_fmt(x)} {_fmt(y)}" for x, y in a.contour]
    return "\n".join(lines) + "\n"


def read_annotation(text: str) -> Annotation:
    box = None
    contour = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        tag, args = parts[0], parts[1:]
        if tag == "BBOX":
            if box is not None:
                raise AnnotationParseError(line_no, "duplicate BBOX line")
            if len(args) != 4:
                raise AnnotationParseError(line_no, f"BBOX needs 4 fields, got {len(args)}")
            box = tuple(_num(a, line_no) for a in args)
        elif tag == "V":
            if box is None:
                raise AnnotationParseError(line_no, "vertex before BBOX line")
            if len(args) != 2:
                raise AnnotationParseError(line_no, f"vertex needs 2 fields, got {len(args)}")
            contour.append(tuple(_num(a, line_no) for a in args))
        else:
            raise AnnotationParseError(line_no, f"unknown record {tag!r}")
    if box is None:
        raise AnnotationParseError(1, "missing BBOX line")
    try:
        return Annotation(box, tuple(contour))
    except ValueError as exc:
        raise AnnotationParseError(1, str(exc)) from None


# --- files -------------------------------------------------------------------

META_NAME = "meta.txt"


def write_meta(directory: str | os.PathLike, width: int, height: int, duration: int) -> None:
    write_meta_entries(directory, width, height, duration)


def write_meta_entries(directory: str | os.PathLike, width: int, height: int, duration: int,
                       frames: Mapping[str, tuple[int, int]] | None = None) -> None:
    """Write ``meta.txt``: ``width height duration_us`` on the first line.

    Recordings whose frame differs from the directory default get an extra
    ``<file>.bin width height`` line.
    """
    lines = [f"{width} {height} {duration}"]
    for name in sorted(frames or {}):
        w, h = frames[name]
        lines.append(f"{name} {w} {h}")
    Path(directory, META_NAME).write_text("\n".join(lines) + "\n")


def read_meta_entries(directory: str | os.PathLike):
    """Return ``((width, height, duration), {file: (width, height)})``."""
    path = Path(directory, META_NAME)
    lines = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 3:
        raise EventFormatError(f"{path}: expected 'width height duration_us' on line 1")
    try:
        w, h, d = (int(f) for f in lines[0])
        frames = {}
        for n, fields in enumerate(lines[1:], start=2):
            if len(fields) != 3:
                raise EventFormatError(f"{path}: line {n}: expected 'file width height'")
            frames[fields[0]] = (int(fields[1]), int(fields[2]))
    except ValueError as exc:
        raise EventFormatError(f"{path}: {exc}") from None
    return (w, h, d), frames


def read_meta(directory: str | os.PathLike) -> tuple[int, int, int]:
    return read_meta_entries(directory)[0]


def save_stream(path: str | os.PathLike, s: EventStream) -> None:
    Path(path).write_bytes(write_stream(s))


def load_stream(path: str | os.PathLike) -> EventStream:
    """Load a ``.bin`` file using the ``meta.txt`` found next to it."""
    path = Path(path)
    (w, h, d), frames = read_meta_entries(path.parent)
    w, h = frames.get(path.name, (w, h))
    return read_stream(path.read_bytes(), w, h, d)
