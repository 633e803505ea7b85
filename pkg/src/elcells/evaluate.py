"""Monte-Carlo accuracy evaluation on synthetic modules, plus CSV/JSON/figure reports."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import synth
from .celldetect import ModuleSpec
from .pipeline import PipelineConfig, StageError, run

SAD_FIELDS = ("rotation", "perspective", "position", "size")


@dataclass(frozen=True)
class Case:
    image_seed: int
    distortion: synth.DistortionParams
    contrast: float = 1.0
    noise_sigma: float = 0.02
    vignette: float = 0.3
    noise_seed: int = 0


@dataclass
class CaseResult:
    case: Case
    report: synth.SadReport = field(default_factory=synth.SadReport)


def build_cases(n_images: int, n_distortions: int, seed: int = 0, contrast: float = 1.0,
                noise_sigma: float = 0.02, vignette: float = 0.3,
                ranges: synth.DistortionRanges = synth.DistortionRanges(),
                spec: ModuleSpec = synth.DEFAULT_SPEC, canvas=(1024, 768)) -> list[Case]:
    """n_images renders, each paired with n_distortions draws; all seeds derive from ``seed``."""
    cases = []
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_images)
    for i, child in enumerate(children):
        img_seed, dist_seed, noise_seed = (int(v) for v in child.generate_state(3))
        _, truth = synth.render_module(spec, canvas, seed=img_seed, contrast=contrast, texture=0.0)
        draws = synth.sample_distortions(n_distortions, truth, (canvas[1], canvas[0]), ranges, dist_seed)
        for j, d in enumerate(draws):
            cases.append(Case(img_seed, d, contrast, noise_sigma, vignette, noise_seed + j))
    return cases


def case_image(case: Case, spec: ModuleSpec = synth.DEFAULT_SPEC, canvas=(1024, 768)):
    """Render, distort, then add the camera effects of one case."""
    img, truth = synth.render_module(spec, canvas, seed=case.image_seed, contrast=case.contrast)
    out = synth.apply_distortion(img, truth, case.distortion)
    rng = np.random.default_rng(case.noise_seed)
    return synth.camera_effects(out, case.vignette, case.noise_sigma, rng), truth


def evaluate_case(case: Case, config: PipelineConfig = PipelineConfig(),
                  spec: ModuleSpec = synth.DEFAULT_SPEC, canvas=(1024, 768)) -> synth.SadReport:
    img, truth = case_image(case, spec, canvas)
    shape = img.shape
    try:
        res = run(img, spec, config)
    except StageError as exc:
        return synth.SadReport(status="failed", error=str(exc))
    d = case.distortion
    grid = res.grid
    # true module corners carried through the distortion and the estimated correction
    quad = res.point_map(shape)(synth.distortion_point_map(truth, d, shape)(truth.corners))
    angles = synth.side_angles(quad)
    ul, ur, lr, ll = quad
    true_w = ((ur[0] - ul[0]) + (lr[0] - ll[0])) / 2.0
    true_h = ((ll[1] - ul[1]) + (lr[1] - ur[1])) / 2.0
    det_x, det_y = grid.vertical_lines[0], grid.horizontal_lines[0]
    det_w = grid.vertical_lines[-1] - grid.vertical_lines[0]
    det_h = grid.horizontal_lines[-1] - grid.horizontal_lines[0]
    rot_hat = math.degrees(res.rotation_angle)
    estimates = {
        "rotation": -rot_hat,  # the correction undoes the distortion
        "side_angles": [float(v) for v in angles],
        "top_left": [float(det_x), float(det_y)],
        "size": [float(det_w), float(det_h)],
        "true_top_left": [float(ul[0]), float(ul[1])],
        "true_size": [float(true_w), float(true_h)],
    }
    return synth.SadReport(
        rotation=synth.sad([d.rotation], [-rot_hat]),
        perspective=synth.sad(angles, np.zeros(4)),
        position=synth.sad(ul, [det_x, det_y]),
        size=synth.sad([true_w, true_h], [det_w, det_h]),
        estimates=estimates,
    )


def _worker(args):
    case, config, spec, canvas = args
    return evaluate_case(case, config, spec, canvas)


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("ELCELLS_JOBS", "1")))
    except ValueError:
        return 1


def evaluate_accuracy(cases: list[Case], config: PipelineConfig = PipelineConfig(),
                      spec: ModuleSpec = synth.DEFAULT_SPEC, canvas=(1024, 768),
                      jobs: int | None = None) -> list[CaseResult]:
    """Run every case; results come back in case order regardless of ``jobs``."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    args = [(c, config, spec, canvas) for c in cases]
    if jobs == 1 or len(cases) < 2:
        reports = [_worker(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_worker, args))
    return [CaseResult(c, r) for c, r in zip(cases, reports)]


def summarize(results: list[CaseResult]) -> dict:
    ok = [r.report for r in results if r.report.status == "ok"]
    out = {"cases": len(results), "failed": len(results) - len(ok)}
    for name in SAD_FIELDS:
        vals = np.array([getattr(r, name) for r in ok], dtype=np.float64)
        if vals.size == 0:
            out[name] = None
            continue
        q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
        out[name] = {"min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4],
                     "mean": float(vals.mean())}
        out[name] = {k: float(v) for k, v in out[name].items()}
    return out


CSV_COLUMNS = ["case", "image_seed", "noise_seed", "contrast", "noise_sigma", "vignette",
               "rotation", "offsets", "shift_x", "shift_y", "module_w", "module_h",
               "rotation_hat", "top_hat", "right_hat", "bottom_hat", "left_hat",
               "x_hat", "y_hat", "w_hat", "h_hat",
               "sad_rotation", "sad_perspective", "sad_position", "sad_size", "status", "error"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(round(v, 6))
    return str(v)


def write_csv(results: list[CaseResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i, res in enumerate(results):
            c, r, e = res.case, res.report, res.report.estimates
            d = c.distortion
            side = e.get("side_angles", [float("nan")] * 4)
            tl = e.get("top_left", [float("nan")] * 2)
            size = e.get("size", [float("nan")] * 2)
            row = [i, c.image_seed, c.noise_seed, c.contrast, c.noise_sigma, c.vignette,
                   d.rotation, " ".join(_fmt(float(v)) for v in d.corner_offsets), d.shift[0], d.shift[1],
                   d.module_size[0], d.module_size[1],
                   e.get("rotation", float("nan")), *side, *tl, *size,
                   r.rotation, r.perspective, r.position, r.size, r.status, r.error]
            w.writerow([_fmt(v) for v in row])


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_boxplots(results_by_label: dict, path) -> None:
    """One panel per SAD kind, one box per label (e.g. contrast level)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    units = {"rotation": "deg", "perspective": "deg", "position": "px", "size": "px"}
    fig, axes = plt.subplots(1, 4, figsize=(13, 3.4))
    labels = list(results_by_label)
    for ax, name in zip(axes, SAD_FIELDS):
        data = [[getattr(r.report, name) for r in results_by_label[lab] if r.report.status == "ok"]
                for lab in labels]
        ax.boxplot([d if d else [np.nan] for d in data], tick_labels=labels)
        ax.set_title(f"{name} SAD")
        ax.set_ylabel(units[name])
    fig.tight_layout()
    # a fixed date and no software tag keep the PNG bytes reproducible
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def report_dict(res: CaseResult) -> dict:
    return {"case": asdict(res.case), "report": asdict(res.report)}
