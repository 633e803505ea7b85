"""Line segments from binary edge maps and their vertical/horizontal split."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from skimage.transform import probabilistic_hough_line

VERTICAL = "vertical"
HORIZONTAL = "horizontal"


@dataclass(frozen=True)
class LineSegment:
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)


@dataclass(frozen=True)
class OrientedLine:
    """A near-axis line.

    ``position`` is the x where a vertical line crosses the horizontal
    midline of the image (y where a horizontal line crosses the vertical
    midline). ``angle`` is the signed deviation from the axis, positive when
    the line is turned from +x towards +y (clockwise on screen); this makes
    vertical lines of an image the horizontal lines of its transpose with the
    sign flipped.
    """

    orientation: str
    position: float
    angle: float
    segment: LineSegment


@dataclass(frozen=True)
class HoughParams:
    threshold: int = 50
    max_gap: int = 75
    min_length: int | None = None  # default 0.2 * min(W, H)
    seed: int = 0
    refine: bool = True
    refine_band: float = 2.0
    min_contrast: float = 0.1
    max_flank_ratio: float = 0.5


def hough_line_transform(binary: np.ndarray, threshold: int = 50, max_gap: int = 75,
                         min_length: int | None = None, seed: int = 0,
                         refine: bool = True, refine_band: float = 2.0,
                         min_contrast: float = 0.0,
                         max_flank_ratio: float = math.inf) -> list[LineSegment]:
    """Progressive probabilistic Hough transform (1 px rho bins, 1 degree theta bins).

    With ``refine`` each segment is re-fitted by total least squares to the
    foreground pixels within ``refine_band`` of it; the raw detector only
    traces along the quantised accumulator direction.

    Segments whose support (see ``segment_support``) has core minus flank
    density below ``min_contrast``, or flank above ``max_flank_ratio`` times
    core, are dropped. On a dense random mask the accumulator finds long
    "lines" whose surroundings are as dense as the line itself.
    """
    binary = np.asarray(binary, dtype=bool)
    if not binary.any():
        return []
    h, w = binary.shape
    if min_length is None:
        min_length = max(2, int(round(0.2 * min(w, h))))
    theta = np.deg2rad(np.arange(-90.0, 90.0, 1.0))
    raw = probabilistic_hough_line(binary, threshold=threshold, line_length=min_length,
                                   line_gap=max_gap, theta=theta, rng=seed)
    segments = []
    for (x0, y0), (x1, y1) in raw:
        seg = LineSegment(float(x0), float(y0), float(x1), float(y1))
        if refine:
            seg = refine_segment(binary, seg, refine_band)
        if seg.length == 0:
            continue
        if min_contrast > 0 or math.isfinite(max_flank_ratio):
            core, flank = segment_support(binary, seg)
            if core - flank < min_contrast or flank > max_flank_ratio * core:
                continue
        segments.append(seg)
    return segments


def segment_support(binary: np.ndarray, seg: LineSegment, core: int = 1,
                    flank: tuple[int, int] = (3, 6)) -> tuple[float, float]:
    """Foreground density on the segment and in two parallel flanking bands.

    Samples at unit steps along the segment; the core covers normal offsets
    ``-core..core`` and the flanks ``flank[0]..flank[1]`` on either side.
    """
    p0 = np.array([seg.x1, seg.y1])
    d = np.array([seg.x2 - seg.x1, seg.y2 - seg.y1])
    length = float(np.hypot(*d))
    if length == 0:
        return 0.0, 0.0
    u = d / length
    nrm = np.array([-u[1], u[0]])
    t = np.arange(0.0, length + 1e-9, 1.0)
    base = p0 + np.outer(t, u)
    h, w = binary.shape

    def density(offsets):
        pts = base[None, :, :] + np.asarray(offsets, float)[:, None, None] * nrm
        x = np.rint(pts[..., 0]).astype(int)
        y = np.rint(pts[..., 1]).astype(int)
        ok = (x >= 0) & (x < w) & (y >= 0) & (y < h)
        return float(binary[y[ok], x[ok]].mean()) if ok.any() else 0.0

    offs = [s * o for o in range(flank[0], flank[1] + 1) for s in (-1, 1)]
    return density(range(-core, core + 1)), density(offs)


def refine_segment(binary: np.ndarray, seg: LineSegment, band: float = 2.0) -> LineSegment:
    p0 = np.array([seg.x1, seg.y1])
    p1 = np.array([seg.x2, seg.y2])
    d = p1 - p0
    length = np.hypot(*d)
    if length == 0:
        return seg
    u = d / length
    nrm = np.array([-u[1], u[0]])
    h, w = binary.shape
    # candidate pixels from the segment's bounding box, padded by the band
    pad = int(math.ceil(band)) + 1
    xa, xb = int(max(0, min(p0[0], p1[0]) - pad)), int(min(w - 1, max(p0[0], p1[0]) + pad))
    ya, yb = int(max(0, min(p0[1], p1[1]) - pad)), int(min(h - 1, max(p0[1], p1[1]) + pad))
    ys, xs = np.nonzero(binary[ya:yb + 1, xa:xb + 1])
    if xs.size < 2:
        return seg
    pts = np.column_stack([xs + xa, ys + ya]).astype(np.float64)
    rel = pts - p0
    t = rel @ u
    dist = np.abs(rel @ nrm)
    sel = (dist <= band) & (t >= 0) & (t <= length)
    if sel.sum() < 2:
        return seg
    pts = pts[sel]
    centre = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centre, full_matrices=False)
    direction = vt[0]
    if direction @ u < 0:
        direction = -direction
    a = centre + ((p0 - centre) @ direction) * direction
    b = centre + ((p1 - centre) @ direction) * direction
    return LineSegment(float(a[0]), float(a[1]), float(b[0]), float(b[1]))


def segment_angle(seg: LineSegment, orientation: str) -> float:
    dx, dy = seg.x2 - seg.x1, seg.y2 - seg.y1
    if orientation == VERTICAL:
        if dy < 0:
            dx, dy = -dx, -dy
        return -math.atan2(dx, dy)
    if dx < 0:
        dx, dy = -dx, -dy
    return math.atan2(dy, dx)


def classify_and_filter(segments, max_angle: float = math.radians(10.0),
                        shape: tuple[int, int] | None = None):
    """Split segments into near-vertical and near-horizontal OrientedLines.

    ``shape`` is the (H, W) of the image and fixes the midlines used for the
    position; without it the midline is taken from the segments' extent.
    """
    if not 0 < max_angle < math.pi / 4:
        raise ValueError("max_angle must lie in (0, pi/4)")
    segments = list(segments)
    if shape is not None:
        mid_y, mid_x = shape[0] / 2.0, shape[1] / 2.0
    elif segments:
        ys = [c for s in segments for c in (s.y1, s.y2)]
        xs = [c for s in segments for c in (s.x1, s.x2)]
        mid_y, mid_x = (min(ys) + max(ys)) / 2.0, (min(xs) + max(xs)) / 2.0
    else:
        return [], []
    vertical, horizontal = [], []
    for seg in segments:
        av = segment_angle(seg, VERTICAL)
        ah = segment_angle(seg, HORIZONTAL)
        if abs(av) <= max_angle:
            dy = seg.y2 - seg.y1
            x = seg.x1 if dy == 0 else seg.x1 + (mid_y - seg.y1) * (seg.x2 - seg.x1) / dy
            if shape is None or 0 <= x <= shape[1]:
                vertical.append(OrientedLine(VERTICAL, x, av, seg))
        elif abs(ah) <= max_angle:
            dx = seg.x2 - seg.x1
            y = seg.y1 if dx == 0 else seg.y1 + (mid_x - seg.x1) * (seg.y2 - seg.y1) / dx
            if shape is None or 0 <= y <= shape[0]:
                horizontal.append(OrientedLine(HORIZONTAL, y, ah, seg))
    return vertical, horizontal


def write_segments_csv(segments, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x1", "y1", "x2", "y2"])
        for s in segments:
            out.writerow([f"{s.x1:.3f}", f"{s.y1:.3f}", f"{s.x2:.3f}", f"{s.y2:.3f}"])
