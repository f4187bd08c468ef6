"""Shared fixtures: MNIST digits as PNG trees and one converted dataset.

The digits come from the 5,000-image MNIST sample bundled with mlxtend
(500 per class), so the suite runs without network access.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from saccadeconv import pipeline


def _mnist():
    mlxtend_data = pytest.importorskip("mlxtend.data")
    x, y = mlxtend_data.mnist_data()
    return x.reshape(-1, 28, 28).astype(np.uint8), y.astype(int)


def write_mnist_tree(root: Path, per_class_train: int, per_class_test: int = 0,
                     seed: int = 0) -> Path:
    """``root/train/<digit>/<index>.png`` (and ``root/test/...`` when asked)."""
    x, y = _mnist()
    rng = np.random.default_rng(seed)
    for digit in range(10):
        idx = rng.permutation(np.flatnonzero(y == digit))
        parts = {"train": idx[:per_class_train],
                 "test": idx[per_class_train:per_class_train + per_class_test]}
        for part, chosen in parts.items():
            if not len(chosen):
                continue
            d = root / part / str(digit)
            d.mkdir(parents=True, exist_ok=True)
            for i in chosen:
                Image.fromarray(x[i], "L").save(d / f"{i:05d}.png")
    return root


@pytest.fixture(scope="session")
def mnist_digits():
    return _mnist()


@pytest.fixture
def small_mnist_tree(tmp_path):
    return write_mnist_tree(tmp_path / "mnist", 3, 2)


class ConvertedDataset:
    def __init__(self, root, report, seconds):
        self.root = root
        self.report = report
        self.seconds = seconds
        self._cache = {}

    def part(self, name):
        if name not in self._cache:
            self._cache[name] = pipeline.load_dataset(self.root / name)
        return self._cache[name]

    def pairs(self, name):
        return [(r.stream, int(r.label)) for r in self.part(name)]


@pytest.fixture(scope="session")
def nmnist(tmp_path_factory):
    """1,000 training and 1,000 test digits converted with the default profile."""
    base = tmp_path_factory.mktemp("nmnist")
    src = write_mnist_tree(base / "mnist", 100, 100)
    t0 = time.perf_counter()
    report = pipeline.convert_directory(src, base / "out", pipeline.get_profile("nmnist"),
                                        seed=1, jobs=1)
    return ConvertedDataset(base / "out", report, time.perf_counter() - t0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
