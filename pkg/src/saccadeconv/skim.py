"""Synaptic Kernel Inverse Method classifier.

Each pixel is an input channel binned at 1 ms. A hidden neuron sums its
randomly weighted inputs, filters the sum with its own delayed alpha
kernel and applies a logistic sigmoid. The linear output layer is fitted
by ridge-regularised least squares to a 10 ms target pulse at the end of
each recording, accumulating the normal equations one recording at a
time.
"""

from __future__ import annotations

import logging
import math
import struct
import warnings
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.special import expit

from .events import EventStream

log = logging.getLogger(__name__)

TIMESTEP_US = 1000
MAX_DURATION_MS = 316
# alpha(x) = x * exp(1 - x) drops below 1e-3 of its peak for x beyond this
ALPHA_SUPPORT = 10.7


def alpha_kernel(n_steps: int, delay: float, tau: float) -> np.ndarray:
    """Sampled ``h(t) = (t-d)/tau * exp(1 - (t-d)/tau)`` for ``t >= d``, peak 1."""
    t = np.arange(n_steps, dtype=float)
    x = (t - delay) / tau
    return np.where(x >= 0, x * np.exp(1 - x), 0.0)


@dataclass(frozen=True)
class SkimConfig:
    hidden: int = 500
    delay_max_ms: float = 200.0
    tau_min_ms: float = 5.0
    tau_max_ms: float = 40.0
    max_duration_ms: int = MAX_DURATION_MS
    input_gain: float = 1.0
    ridge: float = 1e-4
    pulse_ms: int = 10
    two_channel: bool = False
    downsample: int = 1
    seed: int = 0


class SkimNetwork:
    """Random hidden layer plus trained linear read-out."""

    def __init__(self, width: int, height: int, n_classes: int, config: SkimConfig = SkimConfig()):
        if config.hidden < 1:
            raise ValueError("need at least one hidden neuron")
        self.config = config
        self.width, self.height = width, height
        self.n_classes = n_classes
        ds = config.downsample
        self.grid = (-(-width // ds), -(-height // ds))
        self.n_inputs = self.grid[0] * self.grid[1] * (2 if config.two_channel else 1)
        rng = np.random.default_rng(config.seed)
        n = config.hidden
        self.input_weights = (
            rng.uniform(-1.0, 1.0, (self.n_inputs, n)) * config.input_gain / math.sqrt(self.n_inputs)
        )
        self.delays = rng.uniform(0.0, config.delay_max_ms, n)
        # keep delay + effective kernel length inside the longest recording
        tau_hi = np.minimum(config.tau_max_ms,
                            (config.max_duration_ms - self.delays) / ALPHA_SUPPORT)
        tau_hi = np.maximum(tau_hi, config.tau_min_ms)
        self.taus = config.tau_min_ms + rng.random(n) * (tau_hi - config.tau_min_ms)
        self.delays = np.minimum(self.delays, config.max_duration_ms - ALPHA_SUPPORT * self.taus)
        self.kernels = np.stack(
            [alpha_kernel(config.max_duration_ms, d, tau) for d, tau in zip(self.delays, self.taus)],
            axis=1,
        )  # (time, hidden)
        self.output_weights: np.ndarray | None = None
        self.classes: tuple = ()

    # -- forward pass --------------------------------------------------------

    def n_steps(self, s: EventStream) -> int:
        steps = max(1, -(-s.duration // TIMESTEP_US))
        if steps > self.config.max_duration_ms:
            warnings.warn(
                f"recording of {s.duration} us truncated to {self.config.max_duration_ms} ms",
                stacklevel=3,
            )
            steps = self.config.max_duration_ms
        return steps

    def input_matrix(self, s: EventStream) -> scipy.sparse.csr_matrix:
        """Spike counts per (1 ms bin, input channel)."""
        if (s.width, s.height) != (self.width, self.height):
            raise ValueError(f"recording is {s.width}x{s.height}, network expects "
                             f"{self.width}x{self.height}")
        steps = self.n_steps(s)
        ev = s.events
        tb = ev["t"] // TIMESTEP_US
        keep = tb < steps
        ds = self.config.downsample
        gx, _ = self.grid
        ch = (ev["y"][keep] // ds).astype(np.int64) * gx + ev["x"][keep] // ds
        if self.config.two_channel:
            ch = 2 * ch + ev["p"][keep]
        data = np.ones(len(ch))
        return scipy.sparse.csr_matrix((data, (tb[keep], ch)), shape=(steps, self.n_inputs))

    def pre_activation(self, s: EventStream) -> np.ndarray:
        drive = np.asarray(self.input_matrix(s) @ self.input_weights)
        steps = drive.shape[0]
        nfft = 1 << (2 * steps - 1).bit_length()
        spec = np.fft.rfft(drive, nfft, axis=0) * np.fft.rfft(self.kernels[:steps], nfft, axis=0)
        return np.fft.irfft(spec, nfft, axis=0)[:steps]

    def forward(self, s: EventStream) -> np.ndarray:
        """Hidden activations, shape (timesteps, hidden), values in (0, 1)."""
        # beyond +-36 the float64 logistic rounds to exactly 0 or 1
        return expit(np.clip(self.pre_activation(s), -36.0, 36.0))

    # -- read-out -------------------------------------------------------------

    def target(self, steps: int, class_index: int) -> np.ndarray:
        y = np.zeros((steps, self.n_classes))
        y[max(0, steps - self.config.pulse_ms):, class_index] = 1.0
        return y

    def outputs(self, s: EventStream) -> np.ndarray:
        if self.output_weights is None:
            raise RuntimeError("network not trained")
        return self.forward(s) @ self.output_weights

    def classify(self, s: EventStream) -> int:
        """Class index whose output peaks highest in the final pulse window."""
        return classify_outputs(self.outputs(s), self.config.pulse_ms)

    def save_weights(self, path) -> None:
        write_matrix(path, self.output_weights)


def classify_outputs(outputs: np.ndarray, window: int) -> int:
    peak = outputs[-window:].max(axis=0)
    return int(np.argmax(peak))  # argmax keeps the lowest index on ties


class RidgeAccumulator:
    """Normal equations of a ridge regression, summed one block at a time."""

    def __init__(self, n_features: int, n_targets: int):
        self.gram = np.zeros((n_features, n_features))
        self.cross = np.zeros((n_features, n_targets))
        self.rows = 0

    def add(self, h: np.ndarray, y: np.ndarray) -> None:
        self.gram += h.T @ h
        self.cross += h.T @ y
        self.rows += h.shape[0]

    def solve(self, ridge: float) -> np.ndarray:
        lam = ridge
        eye = np.eye(self.gram.shape[0])
        for _ in range(12):
            try:
                return scipy.linalg.solve(self.gram + lam * eye, self.cross, assume_a="pos")
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                pass
            new = lam * 10 if lam > 0 else 1e-8
            warnings.warn(f"normal equations singular at ridge {lam:g}; retrying with {new:g}",
                          stacklevel=2)
            lam = new
        raise np.linalg.LinAlgError("normal equations remain singular")


def batch_ridge(blocks_h: Sequence[np.ndarray], blocks_y: Sequence[np.ndarray],
                ridge: float) -> np.ndarray:
    """Reference solve: least squares on the stacked, ridge-augmented system."""
    h = np.vstack(blocks_h)
    y = np.vstack(blocks_y)
    n = h.shape[1]
    a = np.vstack([h, math.sqrt(ridge) * np.eye(n)])
    b = np.vstack([y, np.zeros((n, y.shape[1]))])
    return np.linalg.lstsq(a, b, rcond=None)[0]


def train(net: SkimNetwork, recordings: Sequence[tuple[EventStream, Hashable]]) -> np.ndarray:
    """Fit the output layer; labels are mapped to indices in sorted order."""
    labels = sorted({lab for _, lab in recordings}, key=_label_key)
    if len(labels) > net.n_classes:
        raise ValueError(f"{len(labels)} labels but network has {net.n_classes} outputs")
    index = {lab: i for i, lab in enumerate(labels)}
    acc = RidgeAccumulator(net.config.hidden, net.n_classes)
    for s, lab in recordings:
        h = net.forward(s)
        acc.add(h, net.target(h.shape[0], index[lab]))
    net.output_weights = acc.solve(net.config.ridge)
    net.classes = tuple(labels)
    return net.output_weights


def evaluate_skim(net: SkimNetwork, test: Sequence[tuple[EventStream, Hashable]]):
    from .knn import balanced_accuracy

    truth, scores = [], []
    for s, lab in test:
        k = net.classify(s)
        pred = net.classes[k] if k < len(net.classes) else None
        truth.append(lab)
        scores.append(1.0 if pred == lab else 0.0)
    return balanced_accuracy(truth, scores)


def _label_key(label):
    return (0, label) if isinstance(label, (int, float, np.integer)) else (1, str(label))


# --- weight files ----------------------------------------------------------------

MATRIX_MAGIC = b"SKIMWGT1"


def write_matrix(path, m: np.ndarray) -> None:
    """Flat little-endian float64 matrix behind a 16-byte header:
    8-byte magic, uint32 rows, uint32 cols."""
    m = np.ascontiguousarray(m, dtype="<f8")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC + struct.pack("<II", rows, cols))
        fh.write(m.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != MATRIX_MAGIC:
            raise ValueError(f"{path}: not a weight matrix file")
        rows, cols = struct.unpack("<II", head[8:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).copy()
