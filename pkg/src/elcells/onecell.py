"""Single-cell extraction for mini-modules via least-squares change points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import as_gray

UL, UR, LL, LR = "UL", "UR", "LL", "LR"


@dataclass(frozen=True)
class ChangePoint:
    index: int  # first post-change sample
    rss: float
    pre_mean: float
    post_mean: float


def rss_profile(seq) -> np.ndarray:
    """RSS(k) for k = 1..n-1 (entry k-1), from running sums of X and X^2.

    Sums are taken about the overall mean, which leaves RSS unchanged and
    keeps the two-pass cancellation small.
    """
    x = np.asarray(seq, dtype=np.float64)
    n = x.size
    x = x - x.mean()
    k = np.arange(1, n)
    s1 = np.cumsum(x)[:-1]
    s2 = np.cumsum(x * x)[:-1]
    t1, t2 = s1[-1] + x[-1], s2[-1] + x[-1] ** 2
    left = s2 - s1**2 / k
    right = (t2 - s2) - (t1 - s1) ** 2 / (n - k)
    return np.maximum(left, 0.0) + np.maximum(right, 0.0)


def cusum(seq) -> ChangePoint:
    """Least-squares change point: argmin_k RSS(k), smallest k on ties."""
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("change-point search needs at least 2 samples")
    rss = rss_profile(x)
    # round-off can split exact ties; treat values within a relative hair as equal
    best = rss.min()
    tol = 1e-9 * max(1.0, float(np.sum((x - x.mean()) ** 2)))
    q = int(np.flatnonzero(rss <= best + tol)[0]) + 1
    return ChangePoint(q, float(rss[q - 1]), float(x[:q].mean()), float(x[q:].mean()))


def naive_rss(seq, k: int) -> float:
    x = [float(v) for v in seq]
    pre, post = x[:k], x[k:]
    m0 = sum(pre) / len(pre)
    m1 = sum(post) / len(post)
    return sum((v - m0) ** 2 for v in pre) + sum((v - m1) ** 2 for v in post)


@dataclass(frozen=True)
class CellQuadrilateral:
    """Corners (x, y) in order upper-left, upper-right, lower-left, lower-right."""

    ul: tuple
    ur: tuple
    ll: tuple
    lr: tuple

    def array(self) -> np.ndarray:
        return np.array([self.ul, self.ur, self.ll, self.lr], dtype=np.float64)


def default_seeds(shape) -> tuple:
    h, w = shape[:2]
    x0, x1 = int(0.25 * w), int(0.75 * w)
    y0, y1 = int(0.25 * h), int(0.75 * h)
    return ((x0, y0), (x1, y0), (x0, y1), (x1, y1))


def detect_corner(img: np.ndarray, seed, which: str) -> tuple[int, int]:
    """Corner nearest ``which`` from two scans running from the image border to the seed.

    Coordinates are pixel-edge positions: the left/top boundary is the first
    cell pixel, the right/bottom boundary is one past the last cell pixel,
    so a cell occupying columns 30..229 spans x in [30, 230].
    """
    img = as_gray(img)
    h, w = img.shape
    sx, sy = int(seed[0]), int(seed[1])
    if not (0 <= sx < w and 0 <= sy < h):
        raise ValueError(f"seed {seed} outside the image")
    row, col = img[sy, :], img[:, sx]
    if which in (UL, LL):
        seq_x = row[:sx + 1]
    else:
        seq_x = row[sx:][::-1]
    if which in (UL, UR):
        seq_y = col[:sy + 1]
    else:
        seq_y = col[sy:][::-1]
    if seq_x.size < 2 or seq_y.size < 2:
        raise ValueError("scan segment shorter than 2 samples")
    qx = cusum(seq_x).index
    qy = cusum(seq_y).index
    x = qx if which in (UL, LL) else w - qx
    y = qy if which in (UL, UR) else h - qy
    return x, y


def detect_quadrilateral(img: np.ndarray, seeds=None) -> CellQuadrilateral:
    img = as_gray(img)
    if seeds is None:
        seeds = default_seeds(img.shape)
    corners = [detect_corner(img, s, c) for s, c in zip(seeds, (UL, UR, LL, LR))]
    return CellQuadrilateral(*corners)


def source_coordinates(quad, out_w: int, out_h: int, symmetric: bool = True):
    """Real-valued source (x', y') for every output pixel, before flooring.

    x' blends the top edge (x1 -> x2) and bottom edge (x3 -> x4); y' blends
    the left edge (y1 -> y3) and right edge. With ``symmetric=False`` the
    right edge term uses (y4 - y3) instead of (y4 - y2), reproducing the
    asymmetric printed form of the map.
    """
    q = quad.array() if isinstance(quad, CellQuadrilateral) else np.asarray(quad, dtype=np.float64)
    (x1, y1), (x2, y2), (x3, y3), (x4, y4) = q
    xs = np.arange(out_w, dtype=np.float64) / out_w
    ys = np.arange(out_h, dtype=np.float64) / out_h
    ys_, xs_ = np.meshgrid(ys, xs, indexing="ij")
    return map_unit(xs_, ys_, q, symmetric)


def map_unit(xs, ys, quad, symmetric: bool = True):
    """Bilinear map of unit coordinates onto the quadrilateral.

    The terms are grouped as blends of edge points so the corners come out
    bit-exact; expanded, this is the printed form x1 + y (x3 - x1) +
    x ((1 - y)(x2 - x1) + y (x4 - x3)) and likewise for y'.
    """
    (x1, y1), (x2, y2), (x3, y3), (x4, y4) = np.asarray(quad, dtype=np.float64)
    if symmetric:
        xp = (1 - ys) * ((1 - xs) * x1 + xs * x2) + ys * ((1 - xs) * x3 + xs * x4)
        yp = (1 - xs) * ((1 - ys) * y1 + ys * y3) + xs * ((1 - ys) * y2 + ys * y4)
    else:
        # right edge term y4 - y3 as printed; (1, 1) lands on (x4, y2 + y4 - y3)
        xp = (1 - ys) * ((1 - xs) * x1 + xs * x2) + ys * (x3 + xs * (x4 - x3))
        yp = (1 - xs) * ((1 - ys) * y1 + ys * y3) + xs * (y2 + ys * (y4 - y3))
    return xp, yp


def extract_cell(img: np.ndarray, seeds=None, out_w: int | None = None, out_h: int | None = None,
                 quad=None, interpolate: bool = False, symmetric: bool = True) -> np.ndarray:
    """Map the detected quadrilateral onto an ``out_w`` x ``out_h`` rectangle.

    Default sampling takes the pixel at floor(x'), floor(y'); ``interpolate``
    switches to bilinear.
    """
    img = as_gray(img)
    if quad is None:
        quad = detect_quadrilateral(img, seeds)
    q = quad.array() if isinstance(quad, CellQuadrilateral) else np.asarray(quad, dtype=np.float64)
    if out_w is None or out_h is None:
        w0 = int(round(max(q[1, 0] - q[0, 0], q[3, 0] - q[2, 0])))
        h0 = int(round(max(q[2, 1] - q[0, 1], q[3, 1] - q[1, 1])))
        out_w = out_w or max(1, w0)
        out_h = out_h or max(1, h0)
    xp, yp = source_coordinates(q, out_w, out_h, symmetric)
    h, w = img.shape
    if interpolate:
        from scipy import ndimage

        if xp.min() < 0 or yp.min() < 0 or xp.max() > w - 1 or yp.max() > h - 1:
            raise ValueError("quadrilateral maps outside the image")
        return ndimage.map_coordinates(img, [yp, xp], order=1)
    # snap values a hair below an integer (round-off of exact lattice points)
    xi = np.floor(xp + 1e-9).astype(np.int64)
    yi = np.floor(yp + 1e-9).astype(np.int64)
    if xi.min() < 0 or yi.min() < 0 or xi.max() >= w or yi.max() >= h:
        raise ValueError("quadrilateral maps outside the image")
    return img[yi, xi]
