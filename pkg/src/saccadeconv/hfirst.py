"""Event-driven S1 -> C1 -> S2 -> C2 spiking hierarchy with integrate-and-fire
neurons.

Every layer is described by a fixed fan-out connectivity table: input
address ``s`` drives neurons ``targets[s, k]`` with ``weights[s, k]``
(``-1`` pads unused slots). Inputs that share a timestamp are summed
before the neurons are updated, so the result does not depend on their
order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numba
import numpy as np

from .events import EventStream


@dataclass(frozen=True)
class LayerSpec:
    v_thresh: float  # mV
    leak_rate: float  # mV/ms
    t_refr: float  # ms
    kernel_size: tuple[int, int, int]
    layer_size: tuple[int, int, int]

    def __post_init__(self):
        if self.v_thresh <= 0:
            raise ValueError("v_thresh must be positive")
        if self.t_refr < 0 or self.leak_rate < 0:
            raise ValueError("t_refr and leak_rate must be >= 0")
        if min(self.kernel_size) <= 0 or min(self.layer_size) <= 0:
            raise ValueError("sizes must be positive")

    @property
    def n_neurons(self) -> int:
        w, h, c = self.layer_size
        return w * h * c


S1_SPEC = LayerSpec(150.0, 25.0, 5.0, (7, 7, 1), (34, 34, 12))
C1_SPEC = LayerSpec(1.0, 0.0, 5.0, (4, 4, 1), (9, 9, 12))
S2_SPEC = LayerSpec(150.0, 1.0, 5.0, (9, 9, 12), (1, 1, 10))
C2_SPEC = LayerSpec(1.0, 0.0, 5.0, (1, 1, 1), (1, 1, 10))


@dataclass
class NeuronState:
    """Membrane potential (mV), last update time and refractory end (us)."""

    v: np.ndarray
    last_t: np.ndarray
    refr_until: np.ndarray

    @classmethod
    def fresh(cls, n: int) -> "NeuronState":
        return cls(np.zeros(n), np.zeros(n, np.int64), np.full(n, -(1 << 62), np.int64))


@dataclass(frozen=True, eq=False)
class Connectivity:
    targets: np.ndarray  # (n_inputs, fan_out) int64, -1 = unused
    weights: np.ndarray  # (n_inputs, fan_out) float64


@numba.njit(cache=True)
def _run_layer(src, t, targets, weights, thresh, leak_per_us, refr_us, v, last_t, refr_until):
    n = src.shape[0]
    n_out = v.shape[0]
    delta = np.zeros(n_out)
    touched = np.empty(n_out, np.int64)
    is_touched = np.zeros(n_out, np.bool_)
    cap = 1024
    out_n = np.empty(cap, np.int64)
    out_t = np.empty(cap, np.int64)
    n_spk = 0
    i = 0
    while i < n:
        ti = t[i]
        n_touched = 0
        j = i
        while j < n and t[j] == ti:
            s = src[j]
            for k in range(targets.shape[1]):
                q = targets[s, k]
                if q < 0:
                    continue
                if not is_touched[q]:
                    is_touched[q] = True
                    touched[n_touched] = q
                    n_touched += 1
                delta[q] += weights[s, k]
            j += 1
        for m in range(n_touched):
            q = touched[m]
            is_touched[q] = False
            d = delta[q]
            delta[q] = 0.0
            if ti < refr_until[q]:
                last_t[q] = ti
                continue
            vq = v[q] - leak_per_us * (ti - last_t[q])
            if vq < 0.0:
                vq = 0.0
            vq += d
            if vq < 0.0:
                vq = 0.0
            last_t[q] = ti
            if vq >= thresh:
                vq = 0.0
                refr_until[q] = ti + refr_us
                if n_spk >= out_n.shape[0]:
                    bigger_n = np.empty(2 * out_n.shape[0], np.int64)
                    bigger_t = np.empty(2 * out_n.shape[0], np.int64)
                    bigger_n[:n_spk] = out_n[:n_spk]
                    bigger_t[:n_spk] = out_t[:n_spk]
                    out_n, out_t = bigger_n, bigger_t
                out_n[n_spk] = q
                out_t[n_spk] = ti
                n_spk += 1
            v[q] = vq
        i = j
    return out_n[:n_spk].copy(), out_t[:n_spk].copy()


def run_layer(spec: LayerSpec, conn: Connectivity, src: np.ndarray, t: np.ndarray,
              state: NeuronState | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Propagate time-ordered input spikes ``(src, t)`` through one layer.

    On each input the target's potential leaks towards 0 at ``leak_rate``
    (never below 0), the summed synaptic input is added, and the neuron
    fires and resets when it reaches ``v_thresh`` outside its refractory
    period. Inputs arriving during the refractory period are dropped.
    Returns output ``(neuron, t)`` arrays; ``state`` is updated in place.
    """
    src = np.ascontiguousarray(src, dtype=np.int64)
    t = np.ascontiguousarray(t, dtype=np.int64)
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError("input spikes must be time ordered")
    state = state or NeuronState.fresh(spec.n_neurons)
    n, tt = _run_layer(src, t, conn.targets, conn.weights, spec.v_thresh,
                       spec.leak_rate / 1000.0, int(round(spec.t_refr * 1000)),
                       state.v, state.last_t, state.refr_until)
    # spikes sharing a timestamp come out in neuron order
    order = np.lexsort((n, tt))
    return n[order], tt[order]


def run_layer_dense(spec: LayerSpec, conn: Connectivity, src: np.ndarray, t: np.ndarray,
                    duration_us: int, step_us: int = 1000) -> np.ndarray:
    """Clock-driven reference simulation; returns spike counts per neuron.

    All inputs inside a step are applied together at the start of the step.
    """
    n = spec.n_neurons
    n_steps = max(1, -(-duration_us // step_us))
    drive = np.zeros((n_steps, n))
    b = np.asarray(t) // step_us
    for s, k in zip(np.asarray(src), b):
        tg = conn.targets[s]
        ok = tg >= 0
        np.add.at(drive[k], tg[ok], conn.weights[s][ok])
    has_input = np.zeros((n_steps, n), bool)
    for s, k in zip(np.asarray(src), b):
        tg = conn.targets[s]
        has_input[k, tg[tg >= 0]] = True
    v = np.zeros(n)
    refr_until = np.full(n, -np.inf)
    counts = np.zeros(n, np.int64)
    leak = spec.leak_rate * step_us / 1000.0
    refr = spec.t_refr * 1000.0
    last = np.zeros(n)
    for k in range(n_steps):
        now = k * step_us
        upd = has_input[k] & (now >= refr_until)
        v[upd] = np.maximum(v[upd] - leak * (now - last[upd]) / step_us, 0.0)
        v[upd] = np.maximum(v[upd] + drive[k, upd], 0.0)
        last[has_input[k]] = now
        fire = upd & (v >= spec.v_thresh)
        counts[fire] += 1
        v[fire] = 0.0
        refr_until[fire] = now + refr
    return counts


# --- connectivity builders -----------------------------------------------------

@dataclass(frozen=True)
class GaborParams:
    wavelength: float = 5.0
    aspect: float = 0.5
    sigma: float = 2.8
    phase: float = 0.0
    weight_scale: float = 20.0


def build_s1_kernels(orientations: int = 12, size: int = 7,
                     params: GaborParams = GaborParams()) -> np.ndarray:
    """Zero-mean oriented Gabor kernels, shape (orientations, size, size).

    Kernel ``k`` is oriented at ``k * 180 / orientations`` degrees and
    indexed ``[row (y), col (x)]``. Each kernel is scaled so its largest
    absolute weight equals ``params.weight_scale``.
    """
    r = (size - 1) / 2.0
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    out = np.empty((orientations, size, size))
    for k in range(orientations):
        th = math.pi * k / orientations
        c, s = _cos_sin(th)
        xr = x * c + y * s
        yr = -x * s + y * c
        g = np.exp(-(xr**2 + params.aspect**2 * yr**2) / (2 * params.sigma**2))
        g = g * np.cos(2 * math.pi * xr / params.wavelength + params.phase)
        g -= g.mean()
        out[k] = g / np.abs(g).max() * params.weight_scale
    return out


def _cos_sin(th: float) -> tuple[float, float]:
    # exact values on the axes keep the 90-degree kernels exact transposes
    c, s = math.cos(th), math.sin(th)
    return (0.0 if abs(c) < 1e-15 else c), (0.0 if abs(s) < 1e-15 else s)


def s1_connectivity(kernels: np.ndarray, width: int = 34, height: int = 34) -> Connectivity:
    """Same-size convolution: pixel (x, y) drives S1 neurons around it."""
    n_or, size, _ = kernels.shape
    r = size // 2
    fan = n_or * size * size
    targets = -np.ones((width * height, fan), np.int64)
    weights = np.zeros((width * height, fan))
    for y in range(height):
        for x in range(width):
            s = y * width + x
            k = 0
            for o in range(n_or):
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        # neuron at (x - dx, y - dy) sees this pixel at kernel offset (dx, dy)
                        nx, ny = x - dx, y - dy
                        if 0 <= nx < width and 0 <= ny < height:
                            targets[s, k] = (o * height + ny) * width + nx
                            weights[s, k] = kernels[o, dy + r, dx + r]
                        k += 1
    return Connectivity(targets, weights)


def c1_connectivity(width: int = 34, height: int = 34, channels: int = 12,
                    pool: int = 4) -> tuple[Connectivity, tuple[int, int]]:
    """Non-overlapping ``pool`` x ``pool`` max-style pooling with unit weights."""
    cw, ch = -(-width // pool), -(-height // pool)
    n = width * height * channels
    targets = np.empty((n, 1), np.int64)
    for o in range(channels):
        for y in range(height):
            for x in range(width):
                targets[(o * height + y) * width + x, 0] = (o * ch + y // pool) * cw + x // pool
    return Connectivity(targets, np.ones((n, 1))), (cw, ch)


def dense_connectivity(weight_matrix: np.ndarray) -> Connectivity:
    """All-to-all; ``weight_matrix`` has shape (n_inputs, n_outputs)."""
    n_in, n_out = weight_matrix.shape
    targets = np.tile(np.arange(n_out, dtype=np.int64), (n_in, 1))
    return Connectivity(targets, np.ascontiguousarray(weight_matrix, dtype=float))


def identity_connectivity(n: int) -> Connectivity:
    return Connectivity(np.arange(n, dtype=np.int64)[:, None], np.ones((n, 1)))


# --- network -----------------------------------------------------------------------

@dataclass
class HfirstNetwork:
    """S1 (oriented filters) -> C1 (pooling) -> S2 (class templates) -> C2."""

    width: int = 34
    height: int = 34
    gabor: GaborParams = field(default_factory=GaborParams)
    s2_l1_scale: float = 1500.0
    merge_polarity: bool = True
    on_only: bool = False
    s1: LayerSpec = S1_SPEC
    c1: LayerSpec = C1_SPEC
    s2: LayerSpec = S2_SPEC
    c2: LayerSpec = C2_SPEC
    classes: tuple = ()
    s2_kernels: np.ndarray | None = None  # (classes, orientations, rows, cols)

    def __post_init__(self):
        n_or = self.s1.layer_size[2]
        self.kernels = build_s1_kernels(n_or, self.s1.kernel_size[0], self.gabor)
        self._s1 = s1_connectivity(self.kernels, self.width, self.height)
        self._c1, (cw, chh) = c1_connectivity(self.width, self.height, n_or,
                                              self.c1.kernel_size[0])
        self.c1 = LayerSpec(self.c1.v_thresh, self.c1.leak_rate, self.c1.t_refr,
                            self.c1.kernel_size, (cw, chh, n_or))
        self.s1 = LayerSpec(self.s1.v_thresh, self.s1.leak_rate, self.s1.t_refr,
                            self.s1.kernel_size, (self.width, self.height, n_or))

    @property
    def c1_shape(self) -> tuple[int, int, int]:
        """(orientations, rows, cols) of the C1 map."""
        cw, ch, n_or = self.c1.layer_size
        return n_or, ch, cw

    def input_spikes(self, s: EventStream) -> tuple[np.ndarray, np.ndarray]:
        ev = s.events
        if self.on_only:
            ev = ev[ev["p"] == 1]
        if s.width != self.width or s.height != self.height:
            raise ValueError(f"recording is {s.width}x{s.height}, network expects "
                             f"{self.width}x{self.height}")
        src = ev["y"].astype(np.int64) * self.width + ev["x"]
        return src, ev["t"].astype(np.int64)

    def c1_spikes(self, s: EventStream) -> tuple[np.ndarray, np.ndarray]:
        src, t = self.input_spikes(s)
        n1, t1 = run_layer(self.s1, self._s1, src, t)
        return run_layer(self.c1, self._c1, n1, t1)

    def c1_counts(self, s: EventStream) -> np.ndarray:
        n, _ = self.c1_spikes(s)
        n_or, ch, cw = self.c1_shape
        return np.bincount(n, minlength=n_or * ch * cw).reshape(n_or, ch, cw)

    def output_counts(self, s: EventStream) -> np.ndarray:
        """C2 spike count per class for one recording (fresh neuron state)."""
        if self.s2_kernels is None:
            raise RuntimeError("S2 layer not trained")
        n_cls = len(self.classes)
        n_c1, t_c1 = self.c1_spikes(s)
        w = self.s2_kernels.reshape(n_cls, -1).T  # (c1 neurons, classes)
        s2 = LayerSpec(self.s2.v_thresh, self.s2.leak_rate, self.s2.t_refr,
                       self.s2.kernel_size, (1, 1, n_cls))
        c2 = LayerSpec(self.c2.v_thresh, self.c2.leak_rate, self.c2.t_refr,
                       self.c2.kernel_size, (1, 1, n_cls))
        n2, t2 = run_layer(s2, dense_connectivity(w), n_c1, t_c1)
        n3, _ = run_layer(c2, identity_connectivity(n_cls), n2, t2)
        return np.bincount(n3, minlength=n_cls)


def train_s2(net: HfirstNetwork, recordings: Sequence[tuple[EventStream, Hashable]]) -> np.ndarray:
    """Set each class template to its summed C1 spike counts, l1-normalised.

    The kernels are stored on ``net`` (ordered by sorted class label) and
    also returned.
    """
    sums: dict = {}
    for s, label in recordings:
        counts = net.c1_counts(s).astype(float)
        sums[label] = sums.get(label, 0.0) + counts
    if not sums:
        raise ValueError("no training recordings")
    classes = tuple(sorted(sums, key=_label_key))
    kernels = []
    for c in classes:
        total = float(np.sum(sums[c]))
        if total == 0:
            raise ValueError(f"class {c!r} produced no C1 spikes")
        kernels.append(sums[c] / total * net.s2_l1_scale)
    net.classes = classes
    net.s2_kernels = np.array(kernels)
    return net.s2_kernels


def write_kernels_csv(path, net: HfirstNetwork) -> None:
    """Dump the S2 templates, one row per weight."""
    if net.s2_kernels is None:
        raise RuntimeError("S2 layer not trained")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "orientation", "row", "col", "weight"])
        for idx in np.ndindex(net.s2_kernels.shape):
            w.writerow([net.classes[idx[0]], *idx[1:], repr(float(net.s2_kernels[idx]))])


def _label_key(label):
    return (0, label) if isinstance(label, (int, float, np.integer)) else (1, str(label))


def classify_hard(counts: np.ndarray) -> int | None:
    """Index of the class with most output spikes; lowest index on ties.

    Returns None when no output spike was produced.
    """
    counts = np.asarray(counts)
    if counts.sum() == 0:
        return None
    return int(np.argmax(counts))


def classify_soft(counts: np.ndarray) -> np.ndarray:
    """Fraction of output spikes per class (all zero if no spikes)."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    return counts / total if total > 0 else np.zeros_like(counts)


@dataclass(frozen=True)
class HfirstResult:
    hard: "object"
    soft: "object"


def evaluate_hfirst(net: HfirstNetwork, test: Sequence[tuple[EventStream, Hashable]]) -> HfirstResult:
    """Balanced accuracy of the hard and soft read-outs.

    The soft score of a sample is the fraction of output spikes for its
    true class; samples with no output spikes score 0 in both.
    """
    from .knn import balanced_accuracy

    truth, hard, soft = [], [], []
    index = {c: i for i, c in enumerate(net.classes)}
    for s, label in test:
        counts = net.output_counts(s)
        truth.append(label)
        h = classify_hard(counts)
        i = index.get(label)
        hard.append(1.0 if h is not None and h == i else 0.0)
        soft.append(float(classify_soft(counts)[i]) if i is not None else 0.0)
    return HfirstResult(balanced_accuracy(truth, hard), balanced_accuracy(truth, soft))
