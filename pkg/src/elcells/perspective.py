"""Perspective correction from the fan of detected grid-line angles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import edges, houghlines
from .houghlines import HORIZONTAL, VERTICAL, HoughParams, OrientedLine
from .imgcore import as_gray, standardize

OLS = "ols"
THEILSEN = "theilsen"


class PerspectiveError(RuntimeError):
    pass


class InsufficientLines(PerspectiveError):
    def __init__(self, orientation: str, found: int):
        super().__init__(f"insufficient lines: {found} {orientation} line(s) detected, need 2")
        self.orientation = orientation
        self.found = found


class DegenerateQuadrangle(PerspectiveError):
    def __init__(self, msg: str = "degenerate quadrangle"):
        super().__init__(msg)


@dataclass(frozen=True)
class SlopeRegression:
    """angle = intercept + slope * position."""

    slope: float
    intercept: float
    method: str = THEILSEN
    support: int = 0

    def __call__(self, position):
        return self.intercept + self.slope * position


ZERO = SlopeRegression(0.0, 0.0, OLS, 2)


@dataclass(frozen=True)
class Quadrangle:
    """Corners as (x, y): A lower-left, B upper-left, C upper-right, D lower-right (y down)."""

    a: tuple
    b: tuple
    c: tuple
    d: tuple

    def array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=np.float64)

    def area(self) -> float:
        p = self.array()
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def theil_sen(x, y) -> tuple[float, float]:
    """Median pairwise slope; intercept = median(y - slope * x)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    i, j = np.triu_indices(len(x), k=1)
    dx = x[j] - x[i]
    ok = dx != 0
    if not ok.any():
        slope = 0.0
    else:
        slope = float(np.median((y[j] - y[i])[ok] / dx[ok]))
    return slope, float(np.median(y - slope * x))


def ordinary_least_squares(x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = 0.0 if sxx == 0 else float(np.sum((x - xm) * (y - ym)) / sxx)
    return slope, float(ym - slope * xm)


def merge_lines(lines, tol: float = 2.0) -> list[OrientedLine]:
    """Collapse lines whose positions chain within ``tol`` px into one.

    The merged line takes the length-weighted mean position and angle. The
    detector often reports one grid line several times; left alone, those
    copies outvote the other lines in the regression.
    """
    ordered = sorted(lines, key=lambda ln: ln.position)
    groups: list[list[OrientedLine]] = []
    for ln in ordered:
        if groups and ln.position - groups[-1][-1].position <= tol:
            groups[-1].append(ln)
        else:
            groups.append([ln])
    out = []
    for g in groups:
        w = np.array([ln.segment.length if ln.segment is not None else 1.0 for ln in g])
        longest = g[int(np.argmax(w))]
        out.append(OrientedLine(longest.orientation,
                                float(np.average([ln.position for ln in g], weights=w)),
                                float(np.average([ln.angle for ln in g], weights=w)),
                                longest.segment))
    return out


def fit_slope_regression(lines, method: str = THEILSEN) -> SlopeRegression:
    lines = list(lines)
    if len(lines) < 2:
        orient = lines[0].orientation if lines else "grid"
        raise InsufficientLines(orient, len(lines))
    pos = [ln.position for ln in lines]
    ang = [ln.angle for ln in lines]
    if method == THEILSEN:
        slope, icpt = theil_sen(pos, ang)
    elif method == OLS:
        slope, icpt = ordinary_least_squares(pos, ang)
    else:
        raise ValueError(f"unknown regression method {method!r}")
    if not (math.isfinite(slope) and math.isfinite(icpt)):
        raise PerspectiveError("regression produced non-finite coefficients")
    return SlopeRegression(slope, icpt, method, len(lines))


def _intersect(p, u, q, v):
    """Intersection of lines p + s u and q + t v."""
    m = np.array([[u[0], -v[0]], [u[1], -v[1]]])
    det = np.linalg.det(m)
    if abs(det) < 1e-12:
        return None
    s, _ = np.linalg.solve(m, np.asarray(q) - np.asarray(p))
    return np.asarray(p) + s * np.asarray(u)


def build_quadrangles(vreg: SlopeRegression, hreg: SlopeRegression, half_width: float,
                      centre: tuple[float, float], diagonal: float | None = None):
    """Source quadrangle from the regressions, target square of ``half_width`` around ``centre``.

    Lines go through the frame's side midpoints M (left), P (right), N
    (top), Q (bottom), tilted by the regression angle evaluated at each
    midpoint's position across its orientation.
    """
    cx, cy = centre
    s = half_width
    m, p = (cx - s, cy), (cx + s, cy)
    n, q = (cx, cy - s), (cx, cy + s)

    def vdir(x):
        t = vreg(x)
        return (-math.sin(t), math.cos(t))

    def hdir(y):
        t = hreg(y)
        return (math.cos(t), math.sin(t))

    lm, lp = (m, vdir(m[0])), (p, vdir(p[0]))
    ln, lq = (n, hdir(n[1])), (q, hdir(q[1]))
    limit = 10.0 * (diagonal if diagonal is not None else 2.0 * math.sqrt(2.0) * s * 2.0)
    corners = []
    for v_line, h_line in ((lm, lq), (lm, ln), (lp, ln), (lp, lq)):
        pt = _intersect(v_line[0], v_line[1], h_line[0], h_line[1])
        if pt is None or math.hypot(pt[0] - cx, pt[1] - cy) > limit:
            raise DegenerateQuadrangle()
        corners.append((float(pt[0]), float(pt[1])))
    source = Quadrangle(*corners)
    target = Quadrangle((cx - s, cy + s), (cx - s, cy - s), (cx + s, cy - s), (cx + s, cy + s))
    if source.area() == 0 or not _is_simple(source.array()):
        raise DegenerateQuadrangle()
    return source, target


def _is_simple(pts: np.ndarray) -> bool:
    """Convex-or-simple check: consecutive cross products share one sign."""
    cross = []
    for i in range(4):
        a, b, c = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
        cross.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    cross = np.array(cross)
    return bool(np.all(cross > 0) or np.all(cross < 0))


def homography_from_correspondences(src, dst) -> np.ndarray:
    """3x3 projective map sending the 4 source corners to the destination corners.

    Solved as the standard 8x8 linear system with h33 = 1.
    """
    s = src.array() if isinstance(src, Quadrangle) else np.asarray(src, dtype=np.float64)
    d = dst.array() if isinstance(dst, Quadrangle) else np.asarray(dst, dtype=np.float64)
    a = np.zeros((8, 8))
    rhs = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(s, d)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        rhs[2 * i], rhs[2 * i + 1] = u, v
    # scale-aware rank test; collinear corners make the system singular
    if np.linalg.matrix_rank(a, tol=1e-10 * np.abs(a).max()) < 8:
        raise DegenerateQuadrangle("singular correspondence system (collinear corners)")
    sol = np.linalg.solve(a, rhs)
    # one step of iterative refinement against round-off
    sol = sol + np.linalg.solve(a, rhs - a @ sol)
    return np.append(sol, 1.0).reshape(3, 3)


def normalize_homography(hmat: np.ndarray) -> np.ndarray:
    hmat = np.asarray(hmat, dtype=np.float64)
    return hmat / hmat[2, 2]


def homography_distance(hmat: np.ndarray, shape) -> float:
    """Frobenius distance from identity in normalised image coordinates.

    Coordinates are centred and divided by half the larger image extent, so
    the translation column is dimensionless like the rest of the matrix.
    """
    h, w = shape[:2]
    s = max(w - 1, h - 1) / 2.0 or 1.0
    t = np.array([[1 / s, 0, -(w - 1) / (2 * s)], [0, 1 / s, -(h - 1) / (2 * s)], [0, 0, 1.0]])
    m = normalize_homography(t @ np.asarray(hmat, float) @ np.linalg.inv(t))
    return float(np.linalg.norm(m - np.eye(3)))


def apply_homography(hmat: np.ndarray, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    hom = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(hmat).T
    return hom[:, :2] / hom[:, 2:3]


def warp_perspective(img: np.ndarray, hmat: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Warp so that output(p) = input(H^-1 p); bilinear, same canvas."""
    img = as_gray(img)
    hmat = normalize_homography(hmat)
    if np.array_equal(hmat, np.eye(3)):
        return img.copy()
    det = np.linalg.det(hmat)
    if abs(det) < 1e-12 * np.abs(hmat).max() ** 3:
        raise PerspectiveError("homography is not invertible")
    inv = np.linalg.inv(hmat)
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    den = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / den
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / den
    # integer-exact source coordinates (pure translations) must not pick up round-off
    sx_r, sy_r = np.rint(sx), np.rint(sy)
    sx = np.where(np.abs(sx - sx_r) < 1e-9, sx_r, sx)
    sy = np.where(np.abs(sy - sy_r) < 1e-9, sy_r, sy)
    return ndimage.map_coordinates(img, [sy, sx], order=1, mode="grid-constant", cval=fill)


@dataclass
class PerspectiveResult:
    corrected: np.ndarray
    homography: np.ndarray
    vertical: list
    horizontal: list
    vreg: SlopeRegression
    hreg: SlopeRegression
    source: Quadrangle
    target: Quadrangle


def correct_perspective(img: np.ndarray, usan: edges.UsanParams = edges.UsanParams(),
                        hough: HoughParams = HoughParams(), max_angle: float = math.radians(10.0),
                        method: str = THEILSEN, frame_fraction: float = 0.25,
                        fill: float | None = None, keep_extent: bool = True,
                        merge_tol: float = 2.0) -> PerspectiveResult:
    """Standardize, USAN both ways, Hough, filter, regress, build quadrangles, warp.

    The quadrangle-to-square map is exact near the frame but can shift and
    enlarge content far from it. With ``keep_extent`` a uniform scale plus
    translation is composed on top so the outline spanned by the outermost
    detected lines keeps its centre and area; axis alignment is unaffected.
    Duplicate detections within ``merge_tol`` px are merged before the
    regression (0 disables merging).
    """
    img = as_gray(img)
    std = standardize(img)
    iv = edges.usan_edges(std, usan, edges.VERTICAL)
    ih = edges.usan_edges(std, usan, edges.HORIZONTAL)
    shape = img.shape
    kw = dict(threshold=hough.threshold, max_gap=hough.max_gap, min_length=hough.min_length,
              seed=hough.seed, refine=hough.refine, refine_band=hough.refine_band,
              min_contrast=hough.min_contrast, max_flank_ratio=hough.max_flank_ratio)
    vsegs = houghlines.hough_line_transform(iv, **kw)
    hsegs = houghlines.hough_line_transform(ih, **kw)
    vertical, _ = houghlines.classify_and_filter(vsegs, max_angle, shape)
    _, horizontal = houghlines.classify_and_filter(hsegs, max_angle, shape)
    if len(vertical) < 2:
        raise InsufficientLines(VERTICAL, len(vertical))
    if len(horizontal) < 2:
        raise InsufficientLines(HORIZONTAL, len(horizontal))
    if merge_tol > 0:
        vmerged, hmerged = merge_lines(vertical, merge_tol), merge_lines(horizontal, merge_tol)
    else:
        vmerged, hmerged = vertical, horizontal
    vreg = fit_slope_regression(vmerged if len(vmerged) >= 2 else vertical, method)
    hreg = fit_slope_regression(hmerged if len(hmerged) >= 2 else horizontal, method)
    h, w = shape
    centre = ((w - 1) / 2.0, (h - 1) / 2.0)
    source, target = build_quadrangles(vreg, hreg, frame_fraction * min(w, h), centre,
                                       diagonal=math.hypot(w, h))
    hmat = homography_from_correspondences(source, target)
    if keep_extent:
        hmat = _extent_preserving(hmat, vertical, horizontal, vreg, hreg) @ hmat
    if fill is None:
        fill = float(np.percentile(img, 5))
    return PerspectiveResult(warp_perspective(img, hmat, fill=fill), hmat, vertical, horizontal,
                             vreg, hreg, source, target)


def _outline(vertical, horizontal, vreg, hreg, mid):
    """Corners where the outermost vertical and horizontal lines meet."""
    xs = [ln.position for ln in vertical]
    ys = [ln.position for ln in horizontal]
    cx, cy = mid
    pts = []
    for x in (min(xs), max(xs)):
        for y in (min(ys), max(ys)):
            tv, th = vreg(x), hreg(y)
            pt = _intersect((x, cy), (-math.sin(tv), math.cos(tv)), (cx, y), (math.cos(th), math.sin(th)))
            if pt is None:
                return None
            pts.append(pt)
    return np.array(pts)


def _extent_preserving(hmat, vertical, horizontal, vreg, hreg) -> np.ndarray:
    xs = [ln.position for ln in vertical]
    ys = [ln.position for ln in horizontal]
    mid = ((min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0)
    src = _outline(vertical, horizontal, vreg, hreg, mid)
    if src is None:
        return np.eye(3)
    dst = apply_homography(hmat, src)

    def box(p):
        lo, hi = p.min(axis=0), p.max(axis=0)
        return (lo + hi) / 2.0, float(np.prod(hi - lo))

    (c0, a0), (c1, a1) = box(src), box(dst)
    if a0 <= 0 or a1 <= 0:
        return np.eye(3)
    k = math.sqrt(a0 / a1)
    return np.array([[k, 0.0, c0[0] - k * c1[0]], [0.0, k, c0[1] - k * c1[1]], [0.0, 0.0, 1.0]])


def lines_from_positions(orientation: str, positions, angles) -> list[OrientedLine]:
    """Bare OrientedLines (no segment geometry) for regression fixtures."""
    return [OrientedLine(orientation, float(p), float(a), None) for p, a in zip(positions, angles)]
