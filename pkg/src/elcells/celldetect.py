"""Locate all grid lines of a corrected module image and cut out its cells."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gridpattern
from .edges import CannyParams, canny_edges
from .gridpattern import PatternConstraints, PatternNotFound
from .imgcore import as_gray, standardize


class ModuleNotFound(PatternNotFound):
    pass


@dataclass(frozen=True)
class ModuleSpec:
    """Physical grid of a module type.

    Gap lists run left to right / top to bottom between consecutive grid
    lines (the outer module boundary counts as a line). The masks flag
    which gaps are cells; frame margins are ``False``.
    """

    name: str
    vertical_gaps: tuple
    horizontal_gaps: tuple
    cell_mask_vertical: tuple = None
    cell_mask_horizontal: tuple = None
    min_width_frac: float = 0.3
    max_width_frac: float = 1.0

    def __post_init__(self):
        if not self.vertical_gaps or not self.horizontal_gaps:
            raise ValueError("both gap lists must be non-empty")
        if any(g <= 0 for g in self.vertical_gaps + self.horizontal_gaps):
            raise ValueError("gaps must be positive")
        if not 0 < self.min_width_frac <= self.max_width_frac <= 1:
            raise ValueError("need 0 < min_width_frac <= max_width_frac <= 1")
        if self.cell_mask_vertical is None:
            object.__setattr__(self, "cell_mask_vertical", (True,) * len(self.vertical_gaps))
        if self.cell_mask_horizontal is None:
            object.__setattr__(self, "cell_mask_horizontal", (True,) * len(self.horizontal_gaps))
        if len(self.cell_mask_vertical) != len(self.vertical_gaps):
            raise ValueError("cell_mask_vertical length must match vertical_gaps")
        if len(self.cell_mask_horizontal) != len(self.horizontal_gaps):
            raise ValueError("cell_mask_horizontal length must match horizontal_gaps")

    @property
    def n_vertical(self) -> int:
        return len(self.vertical_gaps) + 1

    @property
    def n_horizontal(self) -> int:
        return len(self.horizontal_gaps) + 1

    @property
    def cell_shape(self) -> tuple[int, int]:
        return sum(self.cell_mask_horizontal), sum(self.cell_mask_vertical)

    @classmethod
    def uniform(cls, name: str, cols: int, rows: int, **kw) -> "ModuleSpec":
        return cls(name, (1.0,) * cols, (1.0,) * rows, **kw)


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _bools(text: str) -> tuple:
    out = []
    for t in text.replace(",", " ").split():
        low = t.lower()
        if low in ("1", "true", "yes", "cell"):
            out.append(True)
        elif low in ("0", "false", "no", "frame", "margin"):
            out.append(False)
        else:
            raise ValueError(f"not a boolean mask entry: {t!r}")
    return tuple(out)


SPEC_KEYS = {"name", "vertical_gaps", "horizontal_gaps", "cell_mask_vertical",
             "cell_mask_horizontal", "min_width_frac", "max_width_frac"}


def parse_module_spec(text: str) -> ModuleSpec:
    """Parse the ``[module]`` INI section of a module spec file."""
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "module" not in cp:
        raise ValueError("module spec needs a [module] section")
    sec = cp["module"]
    unknown = set(sec.keys()) - SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown module spec keys: {sorted(unknown)}")
    kw = dict(name=sec.get("name", "module"),
              vertical_gaps=_floats(sec["vertical_gaps"]),
              horizontal_gaps=_floats(sec["horizontal_gaps"]))
    if "cell_mask_vertical" in sec:
        kw["cell_mask_vertical"] = _bools(sec["cell_mask_vertical"])
    if "cell_mask_horizontal" in sec:
        kw["cell_mask_horizontal"] = _bools(sec["cell_mask_horizontal"])
    if "min_width_frac" in sec:
        kw["min_width_frac"] = float(sec["min_width_frac"])
    if "max_width_frac" in sec:
        kw["max_width_frac"] = float(sec["max_width_frac"])
    return ModuleSpec(**kw)


def load_module_spec(path) -> ModuleSpec:
    return parse_module_spec(Path(path).read_text())


def format_module_spec(spec: ModuleSpec) -> str:
    def nums(v):
        return ", ".join(f"{x:g}" for x in v)

    def mask(v):
        return ", ".join("1" if m else "0" for m in v)

    return (
        "[module]\n"
        f"name = {spec.name}\n"
        f"vertical_gaps = {nums(spec.vertical_gaps)}\n"
        f"horizontal_gaps = {nums(spec.horizontal_gaps)}\n"
        f"cell_mask_vertical = {mask(spec.cell_mask_vertical)}\n"
        f"cell_mask_horizontal = {mask(spec.cell_mask_horizontal)}\n"
        f"min_width_frac = {spec.min_width_frac:g}\n"
        f"max_width_frac = {spec.max_width_frac:g}\n"
    )


@dataclass
class CellGrid:
    vertical_lines: list  # x positions, ascending
    horizontal_lines: list  # y positions, ascending
    cell_mask_vertical: tuple = None
    cell_mask_horizontal: tuple = None
    h_vertical: tuple = None  # detected (a, b) along x
    h_horizontal: tuple = None  # detected (a, b) along y
    scores: tuple = field(default=(None, None))

    def __post_init__(self):
        if self.cell_mask_vertical is None:
            self.cell_mask_vertical = (True,) * max(0, len(self.vertical_lines) - 1)
        if self.cell_mask_horizontal is None:
            self.cell_mask_horizontal = (True,) * max(0, len(self.horizontal_lines) - 1)

    def cell_boxes(self) -> list[list[tuple[int, int, int, int]]]:
        """(x0, y0, x1, y1) half-open boxes, one row of cells per horizontal band."""
        cols = [(self.vertical_lines[i], self.vertical_lines[i + 1])
                for i, m in enumerate(self.cell_mask_vertical) if m]
        rows = [(self.horizontal_lines[j], self.horizontal_lines[j + 1])
                for j, m in enumerate(self.cell_mask_horizontal) if m]
        return [[(x0, y0, x1, y1) for x0, x1 in cols] for y0, y1 in rows]

    @property
    def n_cells(self) -> int:
        return sum(self.cell_mask_vertical) * sum(self.cell_mask_horizontal)

    def to_dict(self) -> dict:
        return {
            "vertical_lines": [int(v) for v in self.vertical_lines],
            "horizontal_lines": [int(v) for v in self.horizontal_lines],
            "h_vertical": list(self.h_vertical) if self.h_vertical else None,
            "h_horizontal": list(self.h_horizontal) if self.h_horizontal else None,
            "scores": list(self.scores),
        }


def _extent_bounds(frac_lo: float, frac_hi: float, size: int) -> tuple[int, int]:
    lo = max(1, int(math.ceil(frac_lo * size)))
    hi = min(size - 1, int(math.floor(frac_hi * size)))
    return lo, hi


def detect_cells(img: np.ndarray, spec: ModuleSpec, canny: CannyParams = CannyParams(),
                 radius: float = 5.0, min_score_frac: float = 0.1, binary: np.ndarray | None = None,
                 refine: bool = True, min_lift: float = 2.0) -> CellGrid:
    """Canny edges, column/row profiles and two pattern searches.

    The exhaustive search breaks score ties towards the narrowest pattern,
    which pulls the outer lines up to ``radius`` pixels inwards. With
    ``refine`` each line is moved to the edge-mass centroid within
    ``radius`` of it.

    Raises ModuleNotFound when either best score is below
    ``min_score_frac`` of its profile's total mass, or below ``min_lift``
    times the mass a flat profile would put under the same pattern. The
    second test catches structureless edge maps, where a wide pattern
    collects its share of the mass by coverage alone.
    """
    img = as_gray(img)
    h, w = img.shape
    if binary is None:
        binary = canny_edges(standardize(img), canny, rescale=True)
    results = []
    for axis, gaps, size in (("x", spec.vertical_gaps, w), ("y", spec.horizontal_gaps, h)):
        gs = gridpattern.cumulative_deltas(gaps)
        prof = gridpattern.column_profile(binary, axis)
        lo, hi = _extent_bounds(spec.min_width_frac, spec.max_width_frac, size)
        if lo > hi:
            raise ModuleNotFound(f"module extent bounds infeasible for {axis} size {size}")
        (a, b), score = gridpattern.detect_pattern(prof, gs, PatternConstraints(lo, hi, radius))
        total = prof.sum()
        if total == 0 or score < min_score_frac * total:
            raise ModuleNotFound(
                f"module not found: {axis} pattern score {score} below {min_score_frac:.0%} of edge mass {total}")
        covered = gridpattern.pattern_score(np.ones(size), (a, b), gs, radius)
        lift = score / (total * covered / size)
        if lift < min_lift:
            raise ModuleNotFound(
                f"module not found: {axis} pattern score is {lift:.2f}x a flat profile, need {min_lift:g}x")
        lines = np.rint(gridpattern.line_positions((a, b), gs)).astype(int)
        lines[0], lines[-1] = a, b
        if refine:
            lines = refine_lines(prof, lines, radius)
        results.append(((a, b), score, [int(v) for v in lines]))
    (hv, sv, vl), (hh, sh, hl) = results
    return CellGrid(vl, hl, tuple(spec.cell_mask_vertical), tuple(spec.cell_mask_horizontal),
                    hv, hh, (sv, sh))


def refine_lines(profile, lines, radius: float) -> np.ndarray:
    """Snap each line to the rounded centroid of the profile within +-radius."""
    profile = np.asarray(profile, dtype=np.float64)
    r = int(np.floor(radius))
    out = np.array(lines, dtype=int)
    for i, p in enumerate(out):
        lo, hi = max(0, p - r), min(len(profile), p + r + 1)
        mass = profile[lo:hi]
        if mass.sum() > 0:
            out[i] = int(np.rint(np.dot(np.arange(lo, hi), mass) / mass.sum()))
    return out


def crop_cells(img: np.ndarray, grid: CellGrid, out_size: tuple[int, int] | None = None) -> list[np.ndarray]:
    """Row-major cell crops; ``out_size=(W, H)`` resamples each crop bilinearly."""
    img = as_gray(img)
    h, w = img.shape
    crops = []
    for row in grid.cell_boxes():
        for x0, y0, x1, y1 in row:
            x0, x1 = max(0, x0), min(w, x1)
            y0, y1 = max(0, y0), min(h, y1)
            crop = img[y0:y1, x0:x1].copy()
            if out_size is not None and crop.size:
                crop = resample(crop, out_size)
            crops.append(crop)
    return crops


def resample(img: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    from scipy import ndimage

    ow, oh = out_size
    h, w = img.shape
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def render_detection_overlay(img: np.ndarray, grid: CellGrid, value: float | None = None) -> np.ndarray:
    """Copy of ``img`` with the grid lines drawn at maximum intensity.

    Lines span from the first to the last line of the other orientation.
    """
    out = as_gray(img).copy()
    if not grid.vertical_lines and not grid.horizontal_lines:
        return out
    h, w = out.shape
    if value is None:
        value = 255.0 if out.max() <= 255 else float(out.max())
    value = max(value, float(out.max()))
    y0 = max(0, min(grid.horizontal_lines)) if grid.horizontal_lines else 0
    y1 = min(h - 1, max(grid.horizontal_lines)) if grid.horizontal_lines else h - 1
    x0 = max(0, min(grid.vertical_lines)) if grid.vertical_lines else 0
    x1 = min(w - 1, max(grid.vertical_lines)) if grid.vertical_lines else w - 1
    for x in grid.vertical_lines:
        if 0 <= x < w:
            out[y0:y1 + 1, x] = value
    for y in grid.horizontal_lines:
        if 0 <= y < h:
            out[y, x0:x1 + 1] = value
    return out
