"""Binary edge maps: directional USAN masks and a Canny detector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import as_gray, rescale_to

VERTICAL = "vertical"
HORIZONTAL = "horizontal"


@dataclass(frozen=True)
class UsanParams:
    long: int = 5  # H: window extent across the structure of interest
    short: int = 3  # h
    area_fraction: float = 0.4  # p
    threshold: float = 0.5  # t, standardized intensity units

    def __post_init__(self):
        if not (self.long >= self.short >= 1):
            raise ValueError("USAN window needs long >= short >= 1")
        if self.long % 2 == 0 or self.short % 2 == 0:
            raise ValueError("USAN window sides must be odd")
        if not 0 < self.area_fraction < 1:
            raise ValueError("area_fraction must lie in (0, 1)")
        if self.threshold <= 0:
            raise ValueError("similarity threshold must be positive")


@dataclass(frozen=True)
class CannyParams:
    low: float = 25.0
    high: float = 75.0
    kernel_size: int = 3

    def __post_init__(self):
        if not 0 < self.low < self.high:
            raise ValueError("Canny thresholds need 0 < low < high")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError("Canny kernel size must be odd and >= 3")


def usan_window(params: UsanParams, orientation: str) -> tuple[int, int]:
    """(rows, cols) of the USAN window for ``orientation``.

    The window is elongated across the structures it should respond to: a
    vertical line crosses few pixels of a short, wide window, so its USAN
    area stays small and the pixel is kept.
    """
    if orientation == VERTICAL:
        return params.short, params.long
    if orientation == HORIZONTAL:
        return params.long, params.short
    raise ValueError(f"unknown orientation {orientation!r}")


def usan_count(img: np.ndarray, rows: int, cols: int, threshold: float) -> np.ndarray:
    """Number of window pixels within ``threshold`` of the nucleus.

    Pixels whose window leaves the image get -1.
    """
    img = as_gray(img)
    h, w = img.shape
    ry, rx = rows // 2, cols // 2
    if rows > h or cols > w:
        raise ValueError(f"USAN window {rows}x{cols} larger than image {h}x{w}")
    centre = img[ry:h - ry, rx:w - rx]
    count = np.zeros(centre.shape, dtype=np.int32)
    for dy in range(-ry, ry + 1):
        for dx in range(-rx, rx + 1):
            shifted = img[ry + dy:h - ry + dy, rx + dx:w - rx + dx]
            count += np.abs(shifted - centre) <= threshold
    out = np.full((h, w), -1, dtype=np.int32)
    out[ry:h - ry, rx:w - rx] = count
    return out


def usan_edges(img: np.ndarray, params: UsanParams = UsanParams(), orientation: str = VERTICAL) -> np.ndarray:
    rows, cols = usan_window(params, orientation)
    count = usan_count(img, rows, cols, params.threshold)
    return (count >= 0) & (count <= params.area_fraction * rows * cols)


def sobel_gradients(img: np.ndarray, kernel_size: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Sobel derivatives normalised so a unit step gives a unit response."""
    img = as_gray(img)
    if kernel_size == 3:
        smooth = np.array([1.0, 2.0, 1.0])
        diff = np.array([-1.0, 0.0, 1.0])
    else:
        # binomial smoothing convolved with a central difference (OpenCV-style)
        smooth = np.array([1.0])
        for _ in range(kernel_size - 1):
            smooth = np.convolve(smooth, [1.0, 1.0])
        diff = np.array([1.0])
        for _ in range(kernel_size - 3):
            diff = np.convolve(diff, [1.0, 1.0])
        diff = np.convolve(diff, [-1.0, 0.0, 1.0])
    # response of the raw kernel pair to a unit step
    norm = smooth.sum() * np.abs(diff[diff < 0]).sum()
    gx = ndimage.correlate1d(ndimage.correlate1d(img, smooth, axis=0, mode="nearest"), diff, axis=1, mode="nearest")
    gy = ndimage.correlate1d(ndimage.correlate1d(img, smooth, axis=1, mode="nearest"), diff, axis=0, mode="nearest")
    return gx / norm, gy / norm


def non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are local maxima along the quantised gradient direction.

    Ties keep the first pixel along the direction (strict on one side, weak
    on the other) so plateaus of equal magnitude stay one pixel wide.
    """
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # neighbour offsets (dy, dx) for the four direction bins
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros((h, w), dtype=bool)
    for sel, (dy, dx) in bins:
        fwd = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        bwd = padded[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        keep |= sel & (mag > bwd) & (mag >= fwd)
    return keep & (mag > 0)


def hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(weak | strong, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros_like(strong)
    hit = np.zeros(n + 1, dtype=bool)
    hit[np.unique(labels[strong])] = True
    hit[0] = False
    return hit[labels]


def canny_edges(img: np.ndarray, params: CannyParams = CannyParams(), rescale: bool | None = None) -> np.ndarray:
    """Canny edges without Gaussian pre-smoothing.

    Gradients are Sobel responses divided by their step gain (4 for the 3x3
    kernel), so the thresholds are in gray levels per pixel step. The image
    is first mapped to [0, 255] when ``rescale`` is true, or, with
    ``rescale=None``, whenever it leaves that range.
    """
    img = as_gray(img)
    if rescale is None:
        rescale = bool(img.min() < 0 or img.max() > 255)
    if rescale:
        img = rescale_to(img, 0.0, 255.0)
    gx, gy = sobel_gradients(img, params.kernel_size)
    mag = np.hypot(gx, gy)
    thin = non_maximum_suppression(mag, gx, gy)
    strong = thin & (mag >= params.high)
    weak = thin & (mag >= params.low)
    return hysteresis(strong, weak)
