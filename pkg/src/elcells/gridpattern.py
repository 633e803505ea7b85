"""Hough search for a family of parallel lines with known relative spacing.

A candidate h = (a, b) puts line l at a + delta_l (b - a), delta_0 = 0 and
delta_{n-1} = 1, so a and b are the first and last line. A profile column x
counts towards h when some line passes within R d_l of it, where
d_l = sqrt((1 - delta_l)^2 + delta_l^2) is the length of the gradient of
a (1 - delta_l) + b delta_l in (a, b); that turns a Euclidean ball of radius R
around h into a band of half-width R d_l around each line.

Positions are 0-based pixel indices: a, b, x in {0, ..., W - 1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class PatternNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class GapSpec:
    gaps: tuple
    deltas: np.ndarray

    @property
    def n(self) -> int:
        return len(self.deltas)

    @property
    def widths(self) -> np.ndarray:
        """R-ball scaling d_l of every line."""
        return np.sqrt((1.0 - self.deltas) ** 2 + self.deltas**2)


@dataclass(frozen=True)
class PatternConstraints:
    min_extent: int  # L
    max_extent: int  # U
    radius: float = 5.0  # R

    def __post_init__(self):
        if self.min_extent <= 0 or self.min_extent > self.max_extent:
            raise ValueError("need 0 < L <= U")
        if self.radius < 0:
            raise ValueError("R must be non-negative")


def cumulative_deltas(gaps) -> GapSpec:
    gaps = [float(g) for g in gaps]
    if not gaps:
        raise ValueError("gap list is empty")
    if any(not (g > 0) or not math.isfinite(g) for g in gaps):
        raise ValueError("gaps must be positive and finite")
    total = math.fsum(gaps)
    partial = [0.0]
    for g in gaps[:-1]:
        partial.append(partial[-1] + g)
    deltas = np.array([p / total for p in partial] + [1.0])
    return GapSpec(tuple(gaps), deltas)


def column_profile(binary: np.ndarray, axis: str = "x") -> np.ndarray:
    """Foreground count per column (``axis='x'``) or per row (``axis='y'``)."""
    binary = np.asarray(binary)
    if axis in ("x", "X"):
        return binary.sum(axis=0).astype(np.int64)
    if axis in ("y", "Y"):
        return binary.sum(axis=1).astype(np.int64)
    raise ValueError(f"axis must be 'x' or 'y', not {axis!r}")


def line_hits(a, b, delta, x, radius, width):
    """|a (1 - delta) + b delta - x| <= R d, the single predicate every path uses."""
    return np.abs(a * (1.0 - delta) + b * delta - x) <= radius * width


def feasible_line_hit(h, gaps: GapSpec, x, radius: float) -> bool:
    a, b = h
    return bool(np.any(line_hits(a, b, gaps.deltas, x, radius, gaps.widths)))


def line_positions(h, gaps: GapSpec) -> np.ndarray:
    a, b = h
    return a * (1.0 - gaps.deltas) + b * gaps.deltas


def pattern_score(profile, h, gaps: GapSpec, radius: float):
    """Profile mass at columns hit by at least one line of pattern ``h``."""
    profile = np.asarray(profile)
    x = np.arange(len(profile))
    a, b = h
    hit = np.zeros(len(profile), dtype=bool)
    for delta, width in zip(gaps.deltas, gaps.widths):
        hit |= line_hits(a, b, delta, x, radius, width)
    return profile[hit].sum()


def candidate_grid(width: int, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    """All integer (a, b) with 0 <= a < b <= width - 1 and lo <= b - a <= hi.

    Ordered by extent, then a, which is the tie-break order.
    """
    lo = max(1, int(lo))
    hi = min(int(hi), width - 1)
    if lo > hi:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    extents = np.arange(lo, hi + 1)
    counts = width - extents
    ext = np.repeat(extents, counts)
    starts = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    return starts.astype(np.int64), (starts + ext).astype(np.int64)


def _hit_interval(a, b, delta, radius, width, size):
    """Integer columns [lo, hi] satisfying ``line_hits`` for each candidate, clipped to the profile.

    The closed-form ceil/floor bounds are nudged by one column where rounding
    disagrees with the predicate, so membership matches ``line_hits`` exactly.
    """
    c = a * (1.0 - delta) + b * delta
    r = radius * width
    lo = np.ceil(c - r)
    hi = np.floor(c + r)
    lo = np.where(line_hits(a, b, delta, lo - 1, radius, width), lo - 1, lo)
    lo = np.where(line_hits(a, b, delta, lo, radius, width), lo, lo + 1)
    hi = np.where(line_hits(a, b, delta, hi + 1, radius, width), hi + 1, hi)
    hi = np.where(line_hits(a, b, delta, hi, radius, width), hi, hi - 1)
    lo = np.clip(lo, 0, size).astype(np.int64)
    hi = np.clip(hi, -1, size - 1).astype(np.int64)
    return lo, hi


def batch_scores(profile, a, b, gaps: GapSpec, radius: float) -> np.ndarray:
    """Scores of many candidates in O(n log n) each via a prefix sum of the profile.

    Per candidate the n line bands are sorted by their first column and
    swept once; each band is trimmed to start after the furthest column
    already covered, so overlapping bands are counted once.
    """
    profile = np.asarray(profile)
    size = len(profile)
    prefix = np.concatenate([[0], np.cumsum(profile)])
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    bounds = [_hit_interval(a, b, d, radius, w, size) for d, w in zip(gaps.deltas, gaps.widths)]
    lo = np.stack([lo for lo, _ in bounds], axis=-1)
    hi = np.stack([hi for _, hi in bounds], axis=-1)
    order = np.argsort(lo, axis=-1, kind="stable")
    lo = np.take_along_axis(lo, order, axis=-1)
    hi = np.take_along_axis(hi, order, axis=-1)
    score = np.zeros(a.shape, dtype=prefix.dtype)
    covered = np.full(a.shape, -1, dtype=np.int64)
    for k in range(lo.shape[-1]):
        start = np.maximum(lo[..., k], covered + 1)
        end = hi[..., k]
        ok = end >= start
        score += np.where(ok, prefix[np.where(ok, end + 1, 0)] - prefix[np.where(ok, start, 0)], 0)
        covered = np.maximum(covered, end)
    return score


def detect_pattern(profile, gaps: GapSpec, constraints: PatternConstraints, chunk: int = 200_000):
    """Exhaustive maximisation over the integer (a, b) grid.

    Ties go to the smallest extent b - a, then the smallest a. Returns
    ((a, b), score).
    """
    profile = np.asarray(profile)
    size = len(profile)
    if size == 0:
        raise ValueError("empty profile")
    a_all, b_all = candidate_grid(size, constraints.min_extent, constraints.max_extent)
    if a_all.size == 0:
        raise PatternNotFound("no feasible (a, b): module extent bounds exceed the image")
    best_score, best_idx = None, None
    for start in range(0, a_all.size, chunk):
        sl = slice(start, start + chunk)
        scores = batch_scores(profile, a_all[sl], b_all[sl], gaps, constraints.radius)
        i = int(np.argmax(scores))  # first maximum = tie-break order
        if best_score is None or scores[i] > best_score:
            best_score, best_idx = scores[i], start + i
    h = (int(a_all[best_idx]), int(b_all[best_idx]))
    return h, best_score.item()
