"""Command-line surface for the pipeline.

Every subcommand takes --config (JSON) and --out, runs deterministically
(rotation angles come from a seeded generator), and on any module error
writes ``diagnostics.json`` into the output directory and exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as uio
from .config import PipelineConfig
from .dataset import generate_ouc_split, save_split, scan_scenes
from .enhancement import degrade, enhance, estimate_water_model
from .errors import ParameterError, PipelineError
from .evaluation import MetricReport, depth_metrics, median_scale
from .fitdepth import fit_depth_demo
from .geometry import RotationSpec, rotate_center_crop, rotate_center_crop_depth, \
    synthesize_view
from .imaging import gaussian_blur
from .losses import min_reprojection_loss, photometric_error, smoothness_loss
from .masking import TgamState, auto_mask, consistency_mask, tgam_mask, tgam_update


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _list_images(directory: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ParameterError(f"not a directory: {d}")
    files = sorted(p for p in d.iterdir()
                   if p.suffix.lower() in {".png", ".tif", ".tiff"})
    if not files:
        raise ParameterError(f"no image files in {d}")
    return files


def _list_depths(directory: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ParameterError(f"not a directory: {d}")
    files = sorted(p for p in d.iterdir()
                   if p.suffix.lower() in {".tif", ".tiff", ".pfm"})
    if not files:
        raise ParameterError(f"no depth files in {d}")
    return files


def _paired_frames(image_dir: str, depth_dir: str) -> list[tuple[Path, Path]]:
    images = _list_images(image_dir)
    depths = {p.stem: p for p in _list_depths(depth_dir)}
    pairs = []
    for img in images:
        if img.stem not in depths:
            raise ParameterError(f"no depth file for image {img.name}")
        pairs.append((img, depths[img.stem]))
    return pairs


def _cmd_enhance(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    pairs = _paired_frames(args.images, args.depths)
    if args.model:
        model = uio.read_water_model(args.model)
    else:
        stride = cfg.attenuation_frame_stride
        sample = pairs[::stride] or pairs[:1]
        frames = [(uio.read_image(i), uio.read_depth(d)) for i, d in sample]
        model = estimate_water_model(frames)
    uio.write_water_model(out / "water_model.json", model)
    for img_path, depth_path in pairs:
        img = uio.read_image(img_path)
        depth = uio.read_depth(depth_path)
        result = enhance(img, depth, model, cfg.sharpen)
        uio.write_image(out / f"{img_path.stem}_enhanced.png", result)
    return {"frames": len(pairs), "model": model.to_json()}


def _cmd_simulate(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    model = uio.read_water_model(args.model)
    pairs = _paired_frames(args.clean, args.depths)
    for img_path, depth_path in pairs:
        img = uio.read_image(img_path)
        depth = uio.read_depth(depth_path)
        result = degrade(img, depth, model)
        uio.write_image(out / f"{img_path.stem}_degraded.png", result)
    return {"frames": len(pairs)}


def _require_args(args, names: list[str], context: str):
    missing = [f"--{n.replace('_', '-')}" for n in names
               if getattr(args, n, None) in (None, [])]
    if missing:
        raise ParameterError(f"{context} requires {', '.join(missing)}")


def _load_loss_inputs(args):
    _require_args(args, ["target", "sources", "depth", "poses", "K"],
                  "loss computation")
    target = uio.read_image(args.target)
    sources = [uio.read_image(p) for p in args.sources]
    depth = uio.read_depth(args.depth)
    poses = uio.read_poses(args.poses)
    if len(poses) != len(sources):
        raise ParameterError("need one pose per source",
                             poses=len(poses), sources=len(sources))
    K = uio.read_intrinsics(args.K)
    return target, sources, depth, poses, K


def _cmd_losses(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    target, sources, depth, poses, K = _load_loss_inputs(args)
    warps = []
    scalars = {}
    for i, (src, pose) in enumerate(zip(sources, poses)):
        warped, mask = synthesize_view(src, depth, pose, K)
        pe = photometric_error(target, warped, cfg.loss)
        uio.write_loss_map(out / f"pe_source{i}.tiff", pe)
        warps.append((warped, mask))
        scalars[f"pe_source{i}_mean"] = float(pe.valid_values().mean())
    min_loss = min_reprojection_loss(target, warps, cfg.loss)
    uio.write_loss_map(out / "min_reprojection.tiff", min_loss)
    vals = min_loss.valid_values()
    scalars["min_reprojection_mean"] = float(vals.mean()) if vals.size else None
    scalars["smoothness"] = smoothness_loss(depth, target)
    _write_json(out / "losses.json", scalars)
    return scalars


def _cmd_masks(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    if args.mode == "tgam":
        if not args.losses:
            raise ParameterError("tgam mode needs --losses DIR of loss-map TIFFs")
        files = sorted(Path(args.losses).glob("*.tif*"))
        if not files:
            raise ParameterError(f"no loss maps in {args.losses}")
        state = TgamState(beta=cfg.tgam_beta, epsilon=cfg.tgam_epsilon)
        trace = []
        for f in files:
            loss = uio.read_loss_map(f)
            state, threshold = tgam_update(state, loss)
            trace.append({"file": f.name, "threshold": threshold})
            uio.write_mask(out / f"{f.stem}_mask.png", tgam_mask(loss, threshold))
        _write_json(out / "threshold_trace.json", trace)
        return {"images": len(files), "final_threshold": trace[-1]["threshold"]}
    if args.mode == "am":
        target, sources, depth, poses, K = _load_loss_inputs(args)
        warps = [synthesize_view(src, depth, pose, K)
                 for src, pose in zip(sources, poses)]
        mask = auto_mask(target, sources, warps, cfg.loss)
        uio.write_mask(out / "auto_mask.png", mask)
        return {"keep_rate": mask.keep_rate()}
    if args.mode == "consistency":
        _require_args(args, ["depth_t", "depth_s", "poses", "K"],
                      "consistency masking")
        depth_t = uio.read_depth(args.depth_t)
        depth_s = uio.read_depth(args.depth_s)
        pose = uio.read_poses(args.poses)[0]
        K = uio.read_intrinsics(args.K)
        mask = consistency_mask(depth_t, depth_s, pose, K, cfg.distill.tau)
        uio.write_mask(out / "consistency_mask.png", mask)
        return {"keep_rate": mask.keep_rate(), "tau": cfg.distill.tau}
    raise ParameterError(f"unknown mask mode: {args.mode}")


def _cmd_eval(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    preds = _list_depths(args.pred)
    gts = {p.stem: p for p in _list_depths(args.gt)}
    reports = []
    for pred_path in preds:
        if pred_path.stem not in gts:
            raise ParameterError(f"no ground truth for {pred_path.name}")
        pred = uio.read_depth(pred_path)
        gt = uio.read_depth(gts[pred_path.stem])
        if args.median_scale:
            pred = median_scale(pred, gt)
        reports.append(depth_metrics(pred, gt))
    mean = MetricReport(
        abs_rel=float(np.mean([r.abs_rel for r in reports])),
        sq_rel=float(np.mean([r.sq_rel for r in reports])),
        rmse=float(np.mean([r.rmse for r in reports])),
        rmse_log=float(np.mean([r.rmse_log for r in reports])),
        delta1=float(np.mean([r.delta1 for r in reports])),
        delta2=float(np.mean([r.delta2 for r in reports])),
        delta3=float(np.mean([r.delta3 for r in reports])),
        n_valid=int(sum(r.n_valid for r in reports)),
    )
    _write_json(out / "metrics.json",
                {"mean": mean.to_json(),
                 "per_frame": {p.stem: r.to_json()
                               for p, r in zip(preds, reports)}})
    table = MetricReport.table_header(label_col=True) + "\n" \
        + mean.table_row(label=f"mean over {len(reports)}") + "\n"
    (out / "metrics.txt").write_text(table)
    sys.stdout.write(table)
    return mean.to_json()


def _cmd_split(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    scenes = scan_scenes(args.root)
    split = generate_ouc_split(scenes)
    save_split(split, out)
    return split.counts()


def _cmd_rotate(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    gamma = args.gamma if args.gamma is not None else cfg.rotation_gamma
    rng = np.random.default_rng(args.seed)
    pairs = _paired_frames(args.images, args.depths)
    angles = {}
    for img_path, depth_path in pairs:
        theta = float(rng.uniform(-gamma, gamma))
        spec = RotationSpec(theta=theta, gamma=gamma)
        img = uio.read_image(img_path)
        depth = uio.read_depth(depth_path)
        uio.write_image(out / f"{img_path.stem}_rot.png",
                        rotate_center_crop(img, spec))
        uio.write_depth(out / f"{img_path.stem}_rot.tiff",
                        rotate_center_crop_depth(depth, spec))
        angles[img_path.stem] = theta
    _write_json(out / "angles.json", {"gamma": gamma, "seed": args.seed,
                                      "theta": angles})
    return {"frames": len(pairs), "gamma": gamma}


def _cmd_fit_depth(args, cfg: PipelineConfig) -> dict:
    out = _out_dir(args)
    frames = [uio.read_image(p) for p in args.frames]
    poses = uio.read_poses(args.poses)
    K = uio.read_intrinsics(args.K)
    result = fit_depth_demo(frames, poses, K, grid=args.grid, iters=args.iters,
                            cfg=cfg.loss,
                            smoothness_weight=cfg.smoothness_weight,
                            init_depth=args.init_depth)
    uio.write_depth(out / "fitted_depth.tiff", result.depth)
    _write_json(out / "trace.json", {"trace": result.trace,
                                     "flags": result.flags,
                                     "iterations": result.iterations})
    return {"final_loss": result.trace[-1], "iterations": result.iterations,
            "flags": result.flags}


def _cmd_blur(args, cfg: PipelineConfig) -> dict:
    # small utility used when preparing anomaly-mask loss inputs
    out = _out_dir(args)
    for path in _list_images(args.images):
        img = uio.read_image(path)
        uio.write_image(out / f"{path.stem}_blur.png",
                        gaussian_blur(img, cfg.tgam_blur))
    return {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwdepth",
        description="Deterministic underwater depth-estimation pipeline tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="pipeline config JSON")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("enhance", help="restore + sharpen a frame directory")
    common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--depths", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="water model JSON")
    group.add_argument("--estimate", action="store_true",
                       help="estimate the scene water model from the frames")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("simulate", help="forward-degrade clean frames")
    common(p)
    p.add_argument("--clean", required=True)
    p.add_argument("--depths", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("losses", help="photometric loss maps for one triplet")
    common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--sources", required=True, nargs="+")
    p.add_argument("--depth", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--K", required=True)
    p.set_defaults(func=_cmd_losses)

    p = sub.add_parser("masks", help="anomaly / auto / consistency masks")
    common(p)
    p.add_argument("--mode", required=True, choices=["tgam", "am", "consistency"])
    p.add_argument("--losses", help="(tgam) directory of loss-map TIFFs")
    p.add_argument("--target")
    p.add_argument("--sources", nargs="+", default=[])
    p.add_argument("--depth")
    p.add_argument("--depth-t", dest="depth_t")
    p.add_argument("--depth-s", dest="depth_s")
    p.add_argument("--poses")
    p.add_argument("--K")
    p.set_defaults(func=_cmd_masks)

    p = sub.add_parser("eval", help="depth metrics over a prediction directory")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--median-scale", dest="median_scale", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("split", help="deterministic train/val/test split")
    common(p)
    p.add_argument("--root", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("rotate", help="rotated, border-free image/depth pairs")
    common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--depths", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_rotate)

    p = sub.add_parser("fit-depth", help="direct depth-grid optimization demo")
    common(p)
    p.add_argument("--frames", required=True, nargs="+")
    p.add_argument("--poses", required=True)
    p.add_argument("--K", required=True)
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--init-depth", dest="init_depth", type=float, default=1.0)
    p.set_defaults(func=_cmd_fit_depth)

    p = sub.add_parser("blur", help="Gaussian-blur a directory of images")
    common(p)
    p.add_argument("--images", required=True)
    p.set_defaults(func=_cmd_blur)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config)
        summary = args.func(args, cfg)
    except PipelineError as exc:
        diag = exc.diagnostics()
        try:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "diagnostics.json", diag)
        except OSError:
            pass
        sys.stderr.write(json.dumps(diag) + "\n")
        return 2
    _write_json(Path(args.out) / "summary.json",
                {"command": args.command, "result": summary})
    return 0


if __name__ == "__main__":
    sys.exit(main())
