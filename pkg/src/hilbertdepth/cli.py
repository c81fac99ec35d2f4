"""Command-line front end.

    hilbertdepth densify SCAN --calib CAM_TO_CAM VELO_TO_CAM --out OUT.png
    hilbertdepth sparse-project SCAN --calib CALIB_DIR --out OUT.png
    hilbertdepth evaluate PRED_DIR GT_DIR --cap 80 --crop garg
    hilbertdepth stats DEPTH_DIR --resolution 160x128
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig

logger = logging.getLogger("hilbertdepth")

CAM_TO_CAM = "calib_cam_to_cam.txt"
VELO_TO_CAM = "calib_velo_to_cam.txt"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except (OSError, ValueError, RuntimeError) as exc:
        raise StageError(name, str(exc)) from exc


def parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        size = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    if min(size) <= 0:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return size


def _calib_paths(paths) -> tuple[Path, Path]:
    paths = [Path(p) for p in paths]
    if len(paths) == 1 and paths[0].is_dir():
        paths = [paths[0] / CAM_TO_CAM, paths[0] / VELO_TO_CAM]
    if len(paths) != 2:
        raise StageError("calibration", "--calib takes a directory or two files (cam_to_cam velo_to_cam)")
    for p in paths:
        if not p.is_file():
            raise StageError("calibration", f"calibration file not found: {p}")
    return paths[0], paths[1]


def _resolve_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "camera", None) is not None:
        changes["camera_index"] = args.camera
    if getattr(args, "image_size", None):
        changes["image_width"], changes["image_height"] = args.image_size
    if getattr(args, "resolution", None):
        changes["out_width"], changes["out_height"] = args.resolution
    return config.replace(**changes)


def _load_inputs(args, config):
    from .pointcloud import load_calibration, load_velodyne_bin

    cam, velo = _calib_paths(args.calib)
    calib = _stage("calibration", load_calibration, cam, velo, config.camera_index)
    scan_path = Path(args.scan)
    if not scan_path.is_file():
        raise StageError("scan", f"scan file not found: {scan_path}")
    cloud = _stage("scan", load_velodyne_bin, scan_path)
    return cloud, calib


def _summary_path(out: Path) -> Path:
    return out.with_name(out.stem + ".summary.txt")


def _write_summary(out: Path, record: dict, config: PipelineConfig) -> None:
    lines = [f"{k}={v}" for k, v in record.items()]
    lines += [f"config.{line.replace(' = ', '=')}" for line in config.to_text().splitlines()]
    _summary_path(out).write_text("\n".join(lines) + "\n")


def cmd_densify(args) -> int:
    from .densify import densify_depth_image
    from .io_depth import write_depth_png

    start = time.perf_counter()
    config = _stage("config", _resolve_config, args)
    cloud, calib = _load_inputs(args, config)
    width, height = config.output_size
    result = _stage("densify", densify_depth_image, cloud, calib, width, height,
                    config=config, native_size=(config.image_width, config.image_height))
    out = Path(args.out)
    _stage("write", write_depth_png, result.image, out)
    record = {
        "command": "densify",
        "scan": args.scan,
        "points": len(cloud),
        "clusters": result.cluster_count,
        "samples": result.sample_count,
        "final_loss": f"{result.final_loss:.6f}",
        "valid_fraction": f"{result.valid_fraction:.6f}",
        "width": width,
        "height": height,
        "wall_time_s": f"{time.perf_counter() - start:.3f}",
    }
    _stage("write", _write_summary, out, record, config)
    print(f"wrote {out} valid_fraction={result.valid_fraction:.4f}")
    return 0


def cmd_sparse_project(args) -> int:
    from .densify import project_sparse
    from .io_depth import write_depth_png

    start = time.perf_counter()
    config = _stage("config", _resolve_config, args)
    cloud, calib = _load_inputs(args, config)
    width, height = config.output_size
    calib = calib.scaled(width / config.image_width, height / config.image_height)
    image = _stage("project", project_sparse, cloud, calib, width, height, config.max_range)
    out = Path(args.out)
    _stage("write", write_depth_png, image, out)
    record = {
        "command": "sparse-project",
        "scan": args.scan,
        "points": len(cloud),
        "valid_fraction": f"{image.valid_fraction():.6f}",
        "width": width,
        "height": height,
        "wall_time_s": f"{time.perf_counter() - start:.3f}",
    }
    _stage("write", _write_summary, out, record, config)
    print(f"wrote {out} valid_fraction={image.valid_fraction():.4f}")
    return 0


def _png_names(directory: Path) -> set[str]:
    if not directory.is_dir():
        raise StageError("inputs", f"not a directory: {directory}")
    return {p.name for p in directory.glob("*.png")}


def _evaluate_one(name, pred_dir, gt_dir, cap, crop):
    from .io_depth import read_depth_png
    from .metrics import bilinear_resize, central_crop, eval_metrics

    gt = read_depth_png(gt_dir / name)
    pred = read_depth_png(pred_dir / name)
    if pred.values.shape != gt.values.shape:
        pred = bilinear_resize(pred, gt.width, gt.height)
    if crop == "garg":
        gt = central_crop(gt)
        pred = central_crop(pred)
    return eval_metrics(pred, gt, cap)


def cmd_evaluate(args) -> int:
    from .metrics import aggregate_reports

    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    pred_names = _png_names(pred_dir)
    gt_names = _png_names(gt_dir)
    missing_pred = sorted(gt_names - pred_names)
    missing_gt = sorted(pred_names - gt_names)
    if missing_pred or missing_gt:
        msg = []
        if missing_pred:
            msg.append("missing predictions: " + ", ".join(missing_pred))
        if missing_gt:
            msg.append("missing ground truth: " + ", ".join(missing_gt))
        raise StageError("pairing", "; ".join(msg))
    names = sorted(gt_names)
    if not names:
        raise StageError("pairing", f"no PNG files in {gt_dir}")
    with ThreadPoolExecutor() as pool:
        reports = _stage("evaluate", lambda: list(pool.map(
            _evaluate_one, names, [pred_dir] * len(names), [gt_dir] * len(names),
            [float(args.cap)] * len(names), [args.crop] * len(names))))
    pooled = _stage("aggregate", aggregate_reports, reports, not args.per_image_average)
    fmt = (lambda r, n: r.to_json(n)) if args.json else (lambda r, n: r.to_kv(n))
    for name, rep in zip(names, reports):
        print(fmt(rep, name))
    print(fmt(pooled, "pooled" if not args.per_image_average else "mean"))
    return 0


def _stats_one(path: Path, resolution):
    from .io_depth import downsample_nearest, read_depth_png, valid_fraction

    img = read_depth_png(path)
    native = valid_fraction(img)
    resampled = valid_fraction(downsample_nearest(img, *resolution)) if resolution else None
    return img, native, resampled


def cmd_stats(args) -> int:
    from .io_depth import write_color_png

    directory = Path(args.depth_dir)
    paths = sorted(directory.glob("*.png")) if directory.is_dir() else []
    if not paths:
        raise StageError("inputs", f"no depth PNGs found in {directory}")
    with ThreadPoolExecutor() as pool:
        rows = _stage("stats", lambda: list(pool.map(_stats_one, paths, [args.resolution] * len(paths))))
    label = "x".join(map(str, args.resolution)) if args.resolution else None
    for path, (img, native, resampled) in zip(paths, rows):
        line = f"file={path.name} size={img.width}x{img.height} valid_native={native:.6f}"
        if label:
            line += f" valid_{label}={resampled:.6f}"
        print(line)
        if args.render:
            out_dir = Path(args.render)
            out_dir.mkdir(parents=True, exist_ok=True)
            _stage("render", write_color_png, img, out_dir / path.name)
    line = f"average files={len(rows)} valid_native={np.mean([r[1] for r in rows]):.6f}"
    if label:
        line += f" valid_{label}={np.mean([r[2] for r in rows]):.6f}"
    print(line)
    return 0


def _add_capture_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scan", help="Velodyne .bin scan")
    p.add_argument("--calib", nargs="+", required=True, metavar="PATH",
                   help=f"calibration directory ({CAM_TO_CAM}, {VELO_TO_CAM}) or the two files")
    p.add_argument("--out", required=True, help="output depth PNG")
    p.add_argument("--config", help="key = value pipeline configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--camera", type=int, help="rectified camera index for P_rect_0N")
    p.add_argument("--image-size", type=parse_size, help="native image size WxH the calibration refers to")
    p.add_argument("--resolution", type=parse_size, help="output resolution WxH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hilbertdepth", description=__doc__.splitlines()[0])
    parser.add_argument("--print-config", nargs="?", const="", metavar="CONFIG",
                        help="print the defaults, or CONFIG resolved against them, and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("densify", help="render a dense depth image through the occupancy model")
    _add_capture_args(p)
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("sparse-project", help="z-buffered direct projection of a scan")
    _add_capture_args(p)
    p.set_defaults(func=cmd_sparse_project)

    p = sub.add_parser("evaluate", help="depth metrics of predictions against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--cap", type=int, choices=(50, 80), default=80)
    p.add_argument("--crop", choices=("garg", "none"), default="none")
    p.add_argument("--per-image-average", action="store_true",
                   help="average per-image metrics instead of pooling pixels")
    p.add_argument("--json", action="store_true", help="emit JSON records instead of key=value")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="valid-pixel fractions of depth PNGs")
    p.add_argument("depth_dir")
    p.add_argument("--resolution", type=parse_size, help="also report at this WxH")
    p.add_argument("--render", metavar="DIR", help="write colorized previews here")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_config is not None:
        try:
            config = PipelineConfig.load(args.print_config) if args.print_config else PipelineConfig()
            print(config.to_text(), end="")
        except (OSError, ConfigError) as exc:
            print(f"error [config] {exc}", file=sys.stderr)
            return 1
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
