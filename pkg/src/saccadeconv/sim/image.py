from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """Grayscale image with values in [0, 1], indexed ``pixels[row, col]``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.ndim != 2:
            raise ValueError(f"expected a 2-D image, got shape {px.shape}")
        if not np.all(np.isfinite(px)) or px.size and (px.min() < 0 or px.max() > 1):
            raise ValueError("pixel values must be finite and within [0, 1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """(I_x, I_y) by central differences, one-sided at the borders."""
        iy, ix = np.gradient(self.pixels)
        return ix, iy

    def inverted(self) -> "IntensityImage":
        return IntensityImage(1.0 - self.pixels)


class FlowSample(NamedTuple):
    vx: float
    vy: float
    i_t: float


def brightness_derivative(img: IntensityImage, px: int, py: int,
                          v: tuple[float, float]) -> float:
    """Temporal brightness change at pixel (px, py) for image velocity ``v``."""
    if not (0 <= px < img.width and 0 <= py < img.height):
        raise ValueError(f"({px}, {py}) outside {img.width}x{img.height} image")
    ix, iy = img.gradient()
    vx, vy = v
    # written as a sum rather than -(...) so a zero gradient gives exactly +0.0
    return float(-ix[py, px] * vx + -iy[py, px] * vy) + 0.0


def flow_sample(img: IntensityImage, px: int, py: int, v: tuple[float, float]) -> FlowSample:
    return FlowSample(float(v[0]), float(v[1]), brightness_derivative(img, px, py, v))
