"""Command-line front end: ``elcells <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, celldetect, evaluate, gridpattern, imgcore, onecell, perspective, pipeline, rotation, synth

DEFAULTS = pipeline.PipelineConfig()


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return w, h


def _seeds(text: str):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be integers") from None
    if len(vals) != 8:
        raise argparse.ArgumentTypeError("expected 8 comma-separated integers ulx,uly,urx,ury,llx,lly,lrx,lry")
    return tuple(zip(vals[0::2], vals[1::2]))


def _add_rotation_flags(p):
    g = p.add_argument_group("rotation")
    g.add_argument("--eps-deg", dest="rotation_eps_deg", type=float, default=DEFAULTS.rotation_eps_deg)
    g.add_argument("--coarse-steps", dest="rotation_coarse_steps", type=int, default=DEFAULTS.rotation_coarse_steps)
    g.add_argument("--downsample", dest="rotation_downsample", type=int, default=DEFAULTS.rotation_downsample)


def _add_perspective_flags(p):
    g = p.add_argument_group("perspective")
    g.add_argument("--usan-H", "--usan-long", dest="usan_long", type=int, default=DEFAULTS.usan_long)
    g.add_argument("--usan-h", "--usan-short", dest="usan_short", type=int, default=DEFAULTS.usan_short)
    g.add_argument("--usan-p", dest="usan_p", type=float, default=DEFAULTS.usan_p)
    g.add_argument("--usan-t", dest="usan_t", type=float, default=DEFAULTS.usan_t)
    g.add_argument("--hough-threshold", type=int, default=DEFAULTS.hough_threshold)
    g.add_argument("--hough-max-gap", type=int, default=DEFAULTS.hough_max_gap)
    g.add_argument("--max-angle-deg", type=float, default=DEFAULTS.max_angle_deg)
    g.add_argument("--regression", choices=(perspective.THEILSEN, perspective.OLS), default=DEFAULTS.regression)


def _add_cell_flags(p):
    g = p.add_argument_group("cell detection")
    g.add_argument("--R", "--radius", dest="radius", type=float, default=DEFAULTS.radius)
    g.add_argument("--canny-low", type=float, default=DEFAULTS.canny_low)
    g.add_argument("--canny-high", type=float, default=DEFAULTS.canny_high)
    g.add_argument("--canny-kernel", type=int, default=DEFAULTS.canny_kernel)


def _add_common(p, jobs=False):
    p.add_argument("--config", help="JSON file of pipeline settings; its values override flags")
    p.add_argument("--seed", type=int, default=0)
    if jobs:
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: $ELCELLS_JOBS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elcells", description="Preprocessing of EL images of PV modules.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rotate-correct", help="straighten a rotated module image")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    _add_rotation_flags(p)
    _add_common(p)

    p = sub.add_parser("perspective-correct", help="remove perspective distortion")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--homography", help="write the normalised homography as a nested 3x3 JSON array")
    _add_perspective_flags(p)
    _add_common(p)

    p = sub.add_parser("detect-cells", help="locate the cell grid in a corrected image")
    p.add_argument("image")
    p.add_argument("--spec", required=True, help="module spec file")
    p.add_argument("--out-dir", default="cells")
    p.add_argument("--overlay", action="store_true", help="also write overlay.png")
    p.add_argument("--cell-size", type=_size, default=None, help="resample crops to WxH")
    _add_cell_flags(p)
    _add_common(p)

    p = sub.add_parser("extract-cell", help="one-cell extraction for mini-modules")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=_seeds, default=None)
    p.add_argument("--out-size", type=_size, default=None)
    p.add_argument("--interpolate", action="store_true")

    p = sub.add_parser("simulate", help="Monte-Carlo accuracy evaluation on synthetic modules")
    p.add_argument("--n-images", type=int, default=100)
    p.add_argument("--n-distortions", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.02, help="noise sd as a fraction of full scale")
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--vignette", type=float, default=0.3)
    p.add_argument("--max-rotation", type=float, default=20.0)
    p.add_argument("--no-perspective", action="store_true")
    p.add_argument("--out", default="report.csv")
    _add_common(p, jobs=True)

    p = sub.add_parser("render-synthetic", help="render a synthetic module image")
    p.add_argument("--out", required=True)
    p.add_argument("--canvas", type=_size, default=(1024, 768))
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--vignette", type=float, default=0.0)
    p.add_argument("--rotation", type=float, default=0.0, help="degrees")
    p.add_argument("--spec", help="module spec file (default: 6x4 uniform)")
    p.add_argument("--truth", help="write ground truth JSON here")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("run", help="full work-flow: rotation, perspective, cells")
    p.add_argument("images", nargs="*")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--cell-size", type=_size, default=None)
    p.add_argument("--skip-rotation", action="store_true")
    p.add_argument("--skip-perspective", action="store_true")
    _add_rotation_flags(p)
    _add_perspective_flags(p)
    _add_cell_flags(p)
    _add_common(p, jobs=True)
    return ap


def load_config_file(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return data


def config_from_args(args) -> pipeline.PipelineConfig:
    names = set(pipeline.PipelineConfig.__dataclass_fields__)
    flags = {k: v for k, v in vars(args).items() if k in names and k != "jobs" and v is not None}
    cfg = pipeline.PipelineConfig.from_mapping(flags)
    if getattr(args, "config", None):
        cfg = pipeline.PipelineConfig.from_mapping(load_config_file(args.config), base=cfg)
    return cfg


def _jobs(args, cfg: pipeline.PipelineConfig) -> int:
    """Worker count: config file, then --jobs, then $ELCELLS_JOBS, then 1."""
    if args.config and "jobs" in load_config_file(args.config):
        return max(1, cfg.jobs)
    if args.jobs is not None:
        return max(1, args.jobs)
    return evaluate.default_jobs()


def cmd_rotate(args) -> int:
    cfg = config_from_args(args)
    img = imgcore.load(args.image)
    res = rotation.correct_rotation(img, eps=math.radians(cfg.rotation_eps_deg),
                                    coarse_steps=cfg.rotation_coarse_steps,
                                    downsample_factor=cfg.rotation_downsample)
    imgcore.save(res.corrected, args.out, bits=_bits(img))
    print(json.dumps({"rotation_deg": math.degrees(res.angle), "objective": res.objective}))
    return 0


def _bits(img) -> int:
    return 16 if img.max() > 255 else 8


def cmd_perspective(args) -> int:
    cfg = config_from_args(args)
    img = imgcore.load(args.image)
    res = perspective.correct_perspective(img, cfg.usan, cfg.hough, math.radians(cfg.max_angle_deg),
                                          cfg.regression, cfg.frame_fraction)
    imgcore.save(res.corrected, args.out, bits=_bits(img))
    hom = perspective.normalize_homography(res.homography).tolist()
    if args.homography:
        Path(args.homography).write_text(json.dumps(hom) + "\n")
    print(json.dumps({"homography": hom}))
    return 0


def write_cells(img, grid, out_dir: Path, cell_size=None) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    crops = celldetect.crop_cells(img, grid, cell_size)
    rows, cols = len(grid.cell_boxes()), len(grid.cell_boxes()[0]) if grid.cell_boxes() else 0
    bits = _bits(img)
    for k, crop in enumerate(crops):
        r, c = divmod(k, cols) if cols else (0, k)
        if crop.size:
            imgcore.save(crop, out_dir / f"cell_r{r:02d}_c{c:02d}.png", bits=bits, rescale=False)
    return len(crops)


def cmd_detect(args) -> int:
    cfg = config_from_args(args)
    spec = celldetect.load_module_spec(args.spec)
    img = imgcore.load(args.image)
    grid = celldetect.detect_cells(img, spec, cfg.canny, cfg.radius, cfg.min_score_frac,
                                   min_lift=cfg.min_lift)
    out = Path(args.out_dir)
    write_cells(img, grid, out, args.cell_size or cfg.cell_size)
    if args.overlay:
        imgcore.save(celldetect.render_detection_overlay(img, grid), out / "overlay.png", bits=_bits(img))
    print(json.dumps(grid.to_dict()))
    return 0


def cmd_extract(args) -> int:
    img = imgcore.load(args.image)
    quad = onecell.detect_quadrilateral(img, args.seeds)
    w, h = args.out_size if args.out_size else (None, None)
    cell = onecell.extract_cell(img, quad=quad, out_w=w, out_h=h, interpolate=args.interpolate)
    imgcore.save(cell, args.out, bits=_bits(img), rescale=False)
    print(json.dumps({"corners": {"ul": quad.ul, "ur": quad.ur, "ll": quad.ll, "lr": quad.lr}}))
    return 0


def cmd_simulate(args) -> int:
    cfg = config_from_args(args)
    ranges = synth.DistortionRanges(rotation=args.max_rotation,
                                    perspective=0.0 if args.no_perspective else synth.PERSPECTIVE_FRACTION)
    cases = evaluate.build_cases(args.n_images, args.n_distortions, args.seed, args.contrast,
                                 args.noise, args.vignette, ranges)
    results = evaluate.evaluate_accuracy(cases, cfg, jobs=_jobs(args, cfg))
    out = Path(args.out)
    if out.parent:
        out.parent.mkdir(parents=True, exist_ok=True)
    evaluate.write_csv(results, out)
    summary = evaluate.summarize(results)
    evaluate.write_summary(summary, out.with_suffix(".json"))
    if results:
        evaluate.plot_boxplots({f"contrast {args.contrast:g}": results}, out.with_name(out.stem + "_sad.png"))
    failed = [i for i, r in enumerate(results) if r.report.status != "ok"]
    for i in failed:
        print(f"case {i}: {results[i].report.error}", file=sys.stderr)
    print(json.dumps(summary))
    return 0


def cmd_render(args) -> int:
    spec = celldetect.load_module_spec(args.spec) if args.spec else synth.DEFAULT_SPEC
    img, truth = synth.render_module(spec, args.canvas, contrast=args.contrast, noise_sigma=args.noise,
                                     vignette=args.vignette, seed=args.seed)
    corners = truth.corners
    if args.rotation:
        img = synth.apply_distortion(img, truth, synth.DistortionParams(rotation=args.rotation))
        corners = imgcore.rotate_points(corners, math.radians(args.rotation), img.shape)
    imgcore.save(img, args.out, rescale=False)
    if args.truth:
        Path(args.truth).write_text(json.dumps({
            "corners": [[float(v) for v in c] for c in corners],
            "vertical_lines": [float(v) for v in truth.vertical_lines],
            "horizontal_lines": [float(v) for v in truth.horizontal_lines],
            "rotation_deg": args.rotation,
        }, indent=2) + "\n")
    return 0


def _output_names(paths) -> list[str]:
    stems = [Path(p).stem for p in paths]
    return [s if stems.count(s) == 1 else f"{s}_{i}" for i, s in enumerate(stems)]


def process_image(job) -> dict:
    """Run the work-flow on one image and write its artifacts; never raises."""
    path, name, spec, cfg, out_dir = job
    record = {"input": str(path), "name": name, "status": "ok"}
    try:
        img = imgcore.load(path)
    except (imgcore.ImageIOError, OSError) as exc:
        record.update(status="failed", stage="io", error=str(exc))
        return record
    try:
        res = pipeline.run(img, spec, cfg)
    except pipeline.StageError as exc:
        record.update(status="failed", stage=exc.stage, error=str(exc.cause))
        return record
    dest = Path(out_dir) / name
    dest.mkdir(parents=True, exist_ok=True)
    bits = _bits(img)
    imgcore.save(res.corrected, dest / "corrected.png", bits=bits)
    imgcore.save(celldetect.render_detection_overlay(res.corrected, res.grid), dest / "overlay.png", bits=bits)
    write_cells(res.corrected, res.grid, dest / "cells", cfg.cell_size)
    record.update(res.record())
    return record


def run_pipeline(inputs, spec, cfg: pipeline.PipelineConfig, out_dir, jobs: int = 1) -> list[dict]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = _output_names(inputs)
    work = [(p, n, spec, cfg, str(out_dir)) for p, n in zip(inputs, names)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(process_image, work))
    else:
        records = [process_image(w) for w in work]
    with open(out_dir / "results.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return records


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    spec = celldetect.load_module_spec(args.spec)
    records = run_pipeline(args.images, spec, cfg, args.out_dir, _jobs(args, cfg))
    failed = [r for r in records if r["status"] != "ok"]
    for r in failed:
        print(f"FAILED {r['input']} [{r['stage']}]: {r['error']}", file=sys.stderr)
    return 1 if failed else 0


COMMANDS = {
    "rotate-correct": cmd_rotate,
    "perspective-correct": cmd_perspective,
    "detect-cells": cmd_detect,
    "extract-cell": cmd_extract,
    "simulate": cmd_simulate,
    "render-synthetic": cmd_render,
    "run": cmd_run,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, imgcore.ImageIOError, perspective.PerspectiveError,
            gridpattern.PatternNotFound) as exc:
        print(f"elcells {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
