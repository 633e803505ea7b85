"""The multi-cell work-flow: rotation -> perspective -> cell detection."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import celldetect, perspective, rotation
from .edges import CannyParams, UsanParams
from .houghlines import HoughParams


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the work-flow; defaults are the published settings."""

    # rotation
    rotation_eps_deg: float = 0.05
    rotation_coarse_steps: int = 46
    rotation_downsample: int = 4
    # perspective
    usan_long: int = 5
    usan_short: int = 3
    usan_p: float = 0.4
    usan_t: float = 0.5
    hough_threshold: int = 50
    hough_max_gap: int = 75
    hough_min_length: int | None = None
    max_angle_deg: float = 10.0
    regression: str = perspective.THEILSEN
    frame_fraction: float = 0.25
    # cell detection
    canny_low: float = 25.0
    canny_high: float = 75.0
    canny_kernel: int = 3
    radius: float = 5.0
    min_score_frac: float = 0.1
    min_lift: float = 2.0
    # stages
    skip_rotation: bool = False
    skip_perspective: bool = False
    # batch
    module_spec: str | None = None
    out_dir: str | None = None
    jobs: int = 1
    seed: int = 0
    cell_size: tuple | None = None

    @property
    def usan(self) -> UsanParams:
        return UsanParams(self.usan_long, self.usan_short, self.usan_p, self.usan_t)

    @property
    def hough(self) -> HoughParams:
        return HoughParams(self.hough_threshold, self.hough_max_gap, self.hough_min_length, self.seed)

    @property
    def canny(self) -> CannyParams:
        return CannyParams(self.canny_low, self.canny_high, self.canny_kernel)

    @classmethod
    def from_mapping(cls, data: dict, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        base = base or cls()
        data = dict(data)
        if data.get("cell_size") is not None:
            data["cell_size"] = tuple(int(v) for v in data["cell_size"])
        return dataclasses.replace(base, **data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class PipelineResult:
    rotation_angle: float = 0.0  # radians
    homography: np.ndarray = field(default_factory=lambda: np.eye(3))
    grid: celldetect.CellGrid | None = None
    corrected: np.ndarray | None = None
    stage: str = "done"

    def point_map(self, shape):
        """Map from input-image (x, y) to corrected-image coordinates."""
        from .imgcore import rotate_points

        hmat = self.homography
        alpha = self.rotation_angle

        def fwd(points):
            return perspective.apply_homography(hmat, rotate_points(points, alpha, shape))

        return fwd

    def record(self) -> dict:
        out = {
            "rotation_deg": math.degrees(self.rotation_angle),
            "homography": perspective.normalize_homography(self.homography).tolist(),
        }
        if self.grid is not None:
            out.update(self.grid.to_dict())
            out["n_cells"] = self.grid.n_cells
        return out


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def correct(img: np.ndarray, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Rotation and perspective correction only."""
    res = PipelineResult()
    cur = img
    if not config.skip_rotation:
        try:
            rot = rotation.correct_rotation(cur, eps=math.radians(config.rotation_eps_deg),
                                            coarse_steps=config.rotation_coarse_steps,
                                            downsample_factor=config.rotation_downsample)
        except Exception as exc:  # noqa: BLE001 - reported per image
            raise StageError("rotation", exc) from exc
        res.rotation_angle = rot.angle
        cur = rot.corrected
    if not config.skip_perspective:
        try:
            pr = perspective.correct_perspective(cur, config.usan, config.hough,
                                                 math.radians(config.max_angle_deg), config.regression,
                                                 config.frame_fraction)
        except Exception as exc:  # noqa: BLE001
            raise StageError("perspective", exc) from exc
        res.homography = pr.homography
        cur = pr.corrected
    res.corrected = cur
    return res


def run(img: np.ndarray, spec: celldetect.ModuleSpec, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    res = correct(img, config)
    try:
        res.grid = celldetect.detect_cells(res.corrected, spec, config.canny, config.radius,
                                           config.min_score_frac, min_lift=config.min_lift)
    except Exception as exc:  # noqa: BLE001
        raise StageError("cells", exc) from exc
    return res
