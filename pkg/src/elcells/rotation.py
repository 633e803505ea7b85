"""Rotation correction by maximising the spread of row and column sums."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imgcore import as_gray, downsample, projections, rotate, standardize

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # golden ratio conjugate, ~0.618


@dataclass
class RotationResult:
    angle: float  # radians; rotate(img, angle) straightens the module
    objective: float
    corrected: np.ndarray = field(repr=False)
    degenerate: bool = False


def population_sd(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


def rotation_objective(img: np.ndarray, alpha: float, fill: float = 0.0, order: int = 1) -> float:
    """sd(row sums) + sd(column sums) of the image rotated by ``alpha``."""
    p = projections(rotate(img, alpha, fill=fill, order=order))
    return population_sd(p.rows) + population_sd(p.cols)


def golden_section_maximize(fn, a: float, b: float, eps: float, trace: list | None = None) -> float:
    """Maximise a unimodal ``fn`` on [a, b] to within ``eps``.

    Runs ceil(log((b - a) / eps) / log(1 / 0.618...)) shrink steps, each with a
    single new evaluation. If ``trace`` is a list, the bracket (a, x0, x1, b)
    is appended before every step.
    """
    if not a < b:
        raise ValueError("golden section needs a < b")
    if eps <= 0:
        raise ValueError("eps must be positive")
    n_steps = max(0, math.ceil(math.log((b - a) / eps) / math.log(1.0 / INV_PHI)))
    x0 = b - INV_PHI * (b - a)
    x1 = a + INV_PHI * (b - a)
    f0, f1 = fn(x0), fn(x1)
    for _ in range(n_steps):
        if trace is not None:
            trace.append((a, x0, x1, b))
        # the surviving probe keeps its value but its position is recomputed
        # from the new bracket, so rounding cannot drift the golden ratio
        if f0 >= f1:
            b, f1 = x1, f0
            f0 = None
        else:
            a, f0 = x0, f1
            f1 = None
        x0 = b - INV_PHI * (b - a)
        x1 = a + INV_PHI * (b - a)
        if f0 is None:
            f0 = fn(x0)
        else:
            f1 = fn(x1)
    # the final bracket has width <= eps; its midpoint is within eps/2 of any point inside
    return (a + b) / 2.0


def background_level(img: np.ndarray) -> float:
    """Robust dark level used as the fill value while searching."""
    return float(np.percentile(img, 5))


def correct_rotation(img: np.ndarray, eps: float = math.radians(0.05), coarse_steps: int = 46,
                     downsample_factor: int = 4, span: float = math.pi / 4,
                     smooth: float = 0.0, order: int = 3) -> RotationResult:
    """Find the angle that maximises the objective and rotate by it.

    A coarse grid of ``coarse_steps`` angles on [-span, span] picks the
    bracket, golden-section search refines inside it. ``coarse_steps=0``
    runs golden-section over the whole interval.

    The search samples with cubic splines (``order=3``): bilinear sampling
    smooths least near 0 degrees and drags small angles towards zero. The
    returned image is rotated bilinearly at full resolution.
    """
    img = as_gray(img)
    work = downsample(img, downsample_factor)
    if smooth > 0:
        work = ndimage.gaussian_filter(work, smooth)
    work = standardize(work)
    if not work.any():
        return RotationResult(0.0, 0.0, img.copy(), degenerate=True)
    fill = background_level(work)

    def objective(alpha):
        return rotation_objective(work, alpha, fill=fill, order=order)

    if coarse_steps and coarse_steps > 1:
        grid = np.linspace(-span, span, coarse_steps)
        values = [objective(a) for a in grid]
        best = int(np.argmax(values))
        step = grid[1] - grid[0]
        lo, hi = max(-span, grid[best] - step), min(span, grid[best] + step)
    else:
        lo, hi = -span, span
    angle = golden_section_maximize(objective, lo, hi, eps)
    value = objective(angle)
    full_fill = background_level(img)
    return RotationResult(angle, value, rotate(img, angle, fill=full_fill))
