"""Synthetic EL module images, simulated distortions and accuracy bookkeeping.

Geometry uses pixel-centre coordinates: pixel (i, j) covers
[i - 0.5, i + 0.5] x [j - 0.5, j + 0.5].
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import perspective as persp
from .celldetect import CellGrid, ModuleSpec
from .imgcore import rotate, rotate_points

BACKGROUND = 20.0
FULL_SCALE = 200.0
MAX_TILT_DEG = 5.0
# corner displacement bound, as a fraction of the adjacent side length: two
# corners moving in opposite directions by tan(5 deg)/2 each tilt the side by
# 5 degrees. A draw that also shortens the side can tilt it further; those
# draws are rejected
PERSPECTIVE_FRACTION = math.tan(math.radians(MAX_TILT_DEG)) / 2.0

DEFAULT_SPEC = ModuleSpec.uniform("synthetic-6x4", cols=6, rows=4, min_width_frac=0.35, max_width_frac=0.95)


@dataclass
class ModuleTruth:
    corners: np.ndarray  # (4, 2): UL, UR, LR, LL in pixel-centre coordinates
    vertical_lines: np.ndarray  # x of every vertical grid line (boundaries included)
    horizontal_lines: np.ndarray

    def grid(self) -> CellGrid:
        return CellGrid([int(round(v)) for v in self.vertical_lines],
                        [int(round(v)) for v in self.horizontal_lines])

    @property
    def size(self) -> tuple[float, float]:
        return (float(self.vertical_lines[-1] - self.vertical_lines[0]),
                float(self.horizontal_lines[-1] - self.horizontal_lines[0]))


def _coverage(lo: float, hi: float, n: int) -> np.ndarray:
    """Fraction of each pixel's extent [i - .5, i + .5] inside [lo, hi]."""
    i = np.arange(n, dtype=np.float64)
    return np.clip(np.minimum(hi, i + 0.5) - np.maximum(lo, i - 0.5), 0.0, 1.0)


def _line_cover(centres, width: float, n: int) -> np.ndarray:
    cov = np.zeros(n)
    for c in centres:
        cov = np.maximum(cov, _coverage(c - width / 2.0, c + width / 2.0, n))
    return cov


def render_module(spec: ModuleSpec = DEFAULT_SPEC, canvas: tuple[int, int] = (1024, 768),
                  module_size: tuple[float, float] | None = None, origin: tuple[float, float] | None = None,
                  contrast: float = 1.0, noise_sigma: float = 0.0, vignette: float = 0.0,
                  seed: int = 0, line_width: float = 2.5, texture: float = 0.04,
                  cell_spread: float = 0.06):
    """Bright cells separated by dark grid lines on a dark background.

    ``contrast`` scales the cell-to-background step (1.0 is 200 gray levels),
    ``noise_sigma`` is the additive Gaussian noise sd as a fraction of 255,
    ``vignette`` the relative darkening at the canvas corners. Returns the
    image and the ground truth.
    """
    w, h = canvas
    rng = np.random.default_rng(seed)
    if module_size is None:
        module_size = (0.62 * w, 0.55 * h)
    mw, mh = module_size
    if origin is None:
        origin = ((w - mw) / 2.0, (h - mh) / 2.0)
    ox, oy = origin
    if mw <= 0 or mh <= 0 or ox < 0 or oy < 0 or ox + mw > w or oy + mh > h:
        raise ValueError("module does not fit in the canvas")
    left, top = ox - 0.5, oy - 0.5  # pixel-edge of the first module pixel
    vx = left + np.concatenate([[0.0], np.cumsum(spec.vertical_gaps)]) / sum(spec.vertical_gaps) * mw
    hy = top + np.concatenate([[0.0], np.cumsum(spec.horizontal_gaps)]) / sum(spec.horizontal_gaps) * mh

    mod = np.outer(_coverage(hy[0], hy[-1], h), _coverage(vx[0], vx[-1], w))
    lines = np.maximum(_line_cover(vx[1:-1], line_width, w)[None, :],
                       _line_cover(hy[1:-1], line_width, h)[:, None])

    step = contrast * FULL_SCALE
    # per-cell brightness, looked up by the cell index of every pixel
    levels = 1.0 + cell_spread * rng.standard_normal((len(hy) - 1, len(vx) - 1))
    col_idx = np.clip(np.searchsorted(vx, np.arange(w), side="right") - 1, 0, len(vx) - 2)
    row_idx = np.clip(np.searchsorted(hy, np.arange(h), side="right") - 1, 0, len(hy) - 2)
    cells = levels[row_idx[:, None], col_idx[None, :]]
    if texture > 0:
        field_ = ndimage.gaussian_filter(rng.standard_normal((h, w)), 3.0)
        field_ /= field_.std() or 1.0
        cells = cells + texture * field_
    cell_val = BACKGROUND + step * cells
    line_val = BACKGROUND + 0.12 * step
    img = BACKGROUND + mod * ((1.0 - lines) * cell_val + lines * line_val - BACKGROUND)
    img = camera_effects(img, vignette, noise_sigma, rng)

    corners = np.array([[vx[0], hy[0]], [vx[-1], hy[0]], [vx[-1], hy[-1]], [vx[0], hy[-1]]])
    return img, ModuleTruth(corners, vx, hy)


def render_mini_module(canvas: tuple[int, int] = (320, 260), box: tuple[int, int, int, int] = (60, 50, 260, 210),
                       corner_radius: float = 15.0, contrast: float = 1.0, noise_sigma: float = 0.1,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One bright cell with rounded corners on a dark background.

    ``box`` is (x0, y0, x1, y1) in pixel-edge coordinates: the cell covers
    columns x0..x1-1 and rows y0..y1-1. ``noise_sigma`` is the Gaussian
    noise sd as a fraction of the cell-to-background step. Returns the image
    and the corners UL, UR, LL, LR of the enclosing rectangle, which is where
    the side lines of a rounded cell meet.
    """
    w, h = canvas
    x0, y0, x1, y1 = box
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValueError("cell box does not fit in the canvas")
    r = float(corner_radius)
    if 2 * r > min(x1 - x0, y1 - y0):
        raise ValueError("corner radius too large for the cell")
    yy, xx = np.mgrid[0:h, 0:w] + 0.5  # pixel centres in pixel-edge coordinates
    # distance outside the rectangle shrunk by r, compared with r
    dx = np.maximum(np.maximum(x0 + r - xx, xx - (x1 - r)), 0.0)
    dy = np.maximum(np.maximum(y0 + r - yy, yy - (y1 - r)), 0.0)
    inside = (xx > x0) & (xx < x1) & (yy > y0) & (yy < y1) & (dx**2 + dy**2 <= r * r)
    step = contrast * FULL_SCALE
    img = BACKGROUND + step * inside
    if noise_sigma > 0:
        img = img + noise_sigma * step * np.random.default_rng(seed).standard_normal(img.shape)
    corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]], dtype=np.float64)
    return img, corners


def camera_effects(img: np.ndarray, vignette: float, noise_sigma: float, rng) -> np.ndarray:
    h, w = img.shape
    out = img
    if vignette > 0:
        yy, xx = np.mgrid[0:h, 0:w]
        r2 = ((xx - (w - 1) / 2.0) ** 2 + (yy - (h - 1) / 2.0) ** 2) / (((w - 1) / 2.0) ** 2 + ((h - 1) / 2.0) ** 2)
        out = out * (1.0 - vignette * r2)
    if noise_sigma > 0:
        out = out + noise_sigma * 255.0 * rng.standard_normal(out.shape)
    return np.clip(out, 0.0, 255.0)


@dataclass
class DistortionParams:
    rotation: float = 0.0  # degrees
    corner_offsets: tuple = (0.0,) * 8  # (dx, dy) for UL, UR, LR, LL
    shift: tuple = (0, 0)  # integer pixels, periodic
    module_size: tuple = (0.0, 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["corner_offsets"] = list(self.corner_offsets)
        d["shift"] = list(self.shift)
        d["module_size"] = list(self.module_size)
        return d


IDENTITY = DistortionParams()


def perspective_homography(truth: ModuleTruth, params: DistortionParams) -> np.ndarray:
    offsets = np.asarray(params.corner_offsets, dtype=np.float64).reshape(4, 2)
    if not offsets.any():
        return np.eye(3)
    return persp.homography_from_correspondences(truth.corners, truth.corners + offsets)


def distortion_point_map(truth: ModuleTruth, params: DistortionParams, shape):
    """Function taking undistorted (x, y) points to their distorted position."""
    hmat = perspective_homography(truth, params)
    alpha = math.radians(params.rotation)
    sx, sy = params.shift
    h, w = shape

    def fwd(points):
        p = persp.apply_homography(hmat, points)
        p = rotate_points(p, alpha, shape)
        p = p + np.array([sx, sy], dtype=np.float64)
        return np.column_stack([np.mod(p[:, 0] + 0.5, w) - 0.5, np.mod(p[:, 1] + 0.5, h) - 0.5])

    return fwd


def apply_distortion(img: np.ndarray, truth: ModuleTruth, params: DistortionParams,
                     fill: float = BACKGROUND) -> np.ndarray:
    """Perspective warp, then rotation about the centre, then a periodic shift."""
    out = img
    hmat = perspective_homography(truth, params)
    if not np.array_equal(hmat, np.eye(3)):
        out = persp.warp_perspective(out, hmat, fill=fill)
    if params.rotation != 0:
        out = rotate(out, math.radians(params.rotation), fill=fill)
    sx, sy = int(params.shift[0]), int(params.shift[1])
    if sx or sy:
        out = np.roll(out, (sy, sx), axis=(0, 1))
    return out if out is not img else img.copy()


@dataclass(frozen=True)
class DistortionRanges:
    rotation: float = 20.0  # degrees, symmetric
    perspective: float = PERSPECTIVE_FRACTION  # fraction of side length, 0 disables
    shift: bool = True
    margin: float = 8.0  # pixels kept between the module and the canvas edge


def _bbox_margin_ok(points, shape, margin) -> bool:
    h, w = shape
    return bool(points[:, 0].min() >= margin and points[:, 1].min() >= margin
                and points[:, 0].max() <= w - 1 - margin and points[:, 1].max() <= h - 1 - margin)


def sample_distortions(count: int, truth: ModuleTruth, shape, ranges: DistortionRanges = DistortionRanges(),
                       seed: int = 0) -> list[DistortionParams]:
    """Uniform draws of rotation, corner offsets and shift.

    Shifts are rejection-sampled so the distorted module, and the same
    module turned back upright about the canvas centre, stay inside the
    canvas.
    """
    rng = np.random.default_rng(seed)
    mw, mh = truth.size
    out = []
    for _ in range(count):
        rot = float(rng.uniform(-ranges.rotation, ranges.rotation)) if ranges.rotation > 0 else 0.0
        if ranges.perspective > 0:
            while True:
                dx = rng.uniform(-1, 1, 4) * ranges.perspective * mh
                dy = rng.uniform(-1, 1, 4) * ranges.perspective * mw
                quad = truth.corners + np.column_stack([dx, dy])
                if np.max(np.abs(side_angles(quad))) <= MAX_TILT_DEG:
                    break
            offsets = tuple(float(v) for pair in zip(dx, dy) for v in pair)
        else:
            offsets = (0.0,) * 8
        base = DistortionParams(rot, offsets, (0, 0), (mw, mh))
        shift = (0, 0)
        if ranges.shift:
            pts = distortion_point_map(truth, base, shape)(truth.corners)
            h, w = shape
            lo_x = int(math.ceil(ranges.margin - pts[:, 0].min()))
            hi_x = int(math.floor(w - 1 - ranges.margin - pts[:, 0].max()))
            lo_y = int(math.ceil(ranges.margin - pts[:, 1].min()))
            hi_y = int(math.floor(h - 1 - ranges.margin - pts[:, 1].max()))
            for _attempt in range(50):
                if lo_x > hi_x or lo_y > hi_y:
                    break
                cand = (int(rng.integers(lo_x, hi_x + 1)), int(rng.integers(lo_y, hi_y + 1)))
                moved = pts + np.array(cand)
                upright = rotate_points(moved, -math.radians(rot), shape)
                if _bbox_margin_ok(upright, shape, ranges.margin):
                    shift = cand
                    break
        out.append(DistortionParams(rot, offsets, shift, (mw, mh)))
    return out


def side_angles(quad: np.ndarray) -> np.ndarray:
    """Deviation (degrees) of the four sides of UL, UR, LR, LL from the axes: top, right, bottom, left."""
    ul, ur, lr, ll = quad
    top = math.degrees(math.atan2(ur[1] - ul[1], ur[0] - ul[0]))
    bottom = math.degrees(math.atan2(lr[1] - ll[1], lr[0] - ll[0]))
    left = -math.degrees(math.atan2(ll[0] - ul[0], ll[1] - ul[1]))
    right = -math.degrees(math.atan2(lr[0] - ur[0], lr[1] - ur[1]))
    return np.array([top, right, bottom, left])


@dataclass
class SadReport:
    rotation: float = float("nan")
    perspective: float = float("nan")
    position: float = float("nan")
    size: float = float("nan")
    status: str = "ok"
    error: str = ""
    estimates: dict = field(default_factory=dict)


def sad(truth, estimate) -> float:
    return float(np.sum(np.abs(np.asarray(truth, dtype=np.float64) - np.asarray(estimate, dtype=np.float64))))
