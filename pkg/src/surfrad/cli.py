"""Command-line entry point.

Subcommands cover the whole pipeline: ``synth`` renders analytic ground
truth datasets, ``train`` pretrains across scenes, ``finetune`` adapts a
checkpoint to one scene, ``render``/``mesh`` produce images and geometry
from a checkpoint, and ``eval`` scores predictions against ground truth.

Exit codes: 0 on success, 2 for validation problems (bad arguments, bad
config, missing or mismatched inputs), 3 for numerical failures during
optimization.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .cameras import Camera, ring_cameras
from .checkpoint import CheckpointError, load_checkpoint, read_bundle, save_checkpoint
from .config import ConfigError, config_hash, load_run_config, run_config_from_dict
from .dataset import generate_dataset, load_dataset, save_dataset
from .fields import JointField
from .mesh import load_obj, save_obj
from .metrics import (
    append_metric_csv,
    chamfer_to_scene,
    make_metric_report,
    p2s_to_scene,
    psnr,
    save_metric_report,
    ssim,
)
from .rendering import extract_mesh, render_image
from .scenes import preset_scene, scene_from_dict
from .training import TrainingDiverged, finetune, make_state, pretrain

__all__ = ["main"]

THREADS_ENV = "SURFRAD_THREADS"


# -- shared helpers --------------------------------------------------------


def read_manifest(path) -> dict:
    doc, _ = read_bundle(path)
    return doc


def _load_scene(spec: str):
    """A scene argument is either a preset name or a path to a scene JSON."""
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        with open(path) as fh:
            return scene_from_dict(json.load(fh)), path.stem
    try:
        return preset_scene(spec), spec
    except KeyError as exc:
        raise ValueError(str(exc.args[0])) from exc


def _full_context(model: JointField, sample):
    return model.build_context(sample.images, sample.cameras, sample.bounds)


def _background(sample):
    scene = sample.scene
    return tuple(scene.background) if scene is not None else (0.0, 0.0, 0.0)


def _save_image_png(path: Path, image: np.ndarray) -> None:
    quantized = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized).save(path, format="PNG")


def _warn_camera_pose(camera: Camera, bounds: np.ndarray, label: str) -> None:
    lo, hi = np.asarray(bounds)
    center = camera.center
    if np.all(center >= lo) and np.all(center <= hi):
        print(f"warning: {label} sits inside the scene bounds; rendering anyway",
              file=sys.stderr)
        return
    corners = np.stack(np.meshgrid(*zip(lo, hi), indexing="ij"), axis=-1).reshape(-1, 3)
    _, z = camera.project(corners)
    if np.all(z <= 0):
        print(f"warning: {label} faces away from the scene; rendering anyway",
              file=sys.stderr)


# -- subcommands -----------------------------------------------------------


def cmd_synth(args) -> int:
    if args.views < 2:
        raise ValueError("--views must be at least 2")
    if args.res < 16:
        raise ValueError("--res must be at least 16")
    scene, scene_id = _load_scene(args.scene)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ValueError(f"output directory {out} is not empty; pass --force to overwrite")
    sample = generate_dataset(scene, scene_id, args.views, (args.res, args.res),
                              seed=args.seed)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(sample, out)
    print(f"wrote {sample.n_views} views at {args.res}x{args.res} to {out}")
    return 0


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        state, manifest = load_checkpoint(args.resume)
        cfg = run_config_from_dict(manifest["config"])
        if args.config:
            file_cfg = load_run_config(args.config)
            if manifest["config_hash"] != config_hash(file_cfg):
                raise ValueError(
                    "--config disagrees with the checkpoint's stored config; "
                    "resume uses the stored one, drop --config or match it"
                )
    else:
        if not args.config:
            raise ValueError("--config is required unless resuming")
        cfg = load_run_config(args.config)
        state = make_state(cfg.model, cfg.loss, cfg.seed)
    scenes = [load_dataset(d) for d in args.data]

    def periodic(st):
        save_checkpoint(out / f"checkpoint_{st.step:06d}.ckpt", st, cfg)

    try:
        pretrain(scenes, cfg.loss, render_config=cfg.render, state=state,
                 n_steps=args.steps, log_path=out / "train_log.jsonl",
                 checkpoint_fn=periodic, checkpoint_every=args.checkpoint_every)
    except TrainingDiverged:
        kept = sorted(out.glob("checkpoint_*.ckpt"))
        if kept:
            print(f"last good checkpoint: {kept[-1]}", file=sys.stderr)
        raise
    save_checkpoint(out / "checkpoint_final.ckpt", state, cfg)
    print(f"trained to step {state.step}; final checkpoint in {out}")
    return 0


def cmd_finetune(args) -> int:
    state, manifest = load_checkpoint(args.ckpt)
    cfg = run_config_from_dict(manifest["config"])
    loss_cfg = cfg.loss
    overrides = {}
    if args.iters_geometry is not None:
        overrides["iters_ft_geometry"] = args.iters_geometry
    if args.iters_color is not None:
        overrides["iters_ft_color"] = args.iters_color
    if overrides:
        loss_cfg = dataclasses.replace(loss_cfg, **overrides)
        cfg = dataclasses.replace(cfg, loss=loss_cfg)
    sample = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    finetune(state, sample, loss_cfg, render_config=cfg.render,
             log_path=out / "finetune_log.jsonl", random_views=args.random_views)
    save_checkpoint(out / "checkpoint_finetuned.ckpt", state, cfg)
    print(f"finetuned on {sample.scene_id}; checkpoint in {out}")
    return 0


def _orbit_cameras(sample, n: int) -> list[Camera]:
    """Cameras on the training ring: same radius and intrinsics family as the
    dataset's own ring, evenly spaced starting at azimuth zero."""
    bounds = np.asarray(sample.bounds)
    center = 0.5 * (bounds[0] + bounds[1])
    radius = float(np.mean([np.linalg.norm(c.center - center) for c in sample.cameras]))
    cams, _ = ring_cameras(bounds, n, radius=radius, resolution=sample.resolution)
    return cams


def cmd_render(args) -> int:
    state, manifest = load_checkpoint(args.ckpt)
    sample = load_dataset(args.data)
    render_cfg = run_config_from_dict(manifest["config"]).render
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _full_context(state.model, sample)
    background = _background(sample)
    if args.view is not None:
        if not 0 <= args.view < sample.n_views:
            raise ValueError(f"--view {args.view} out of range for {sample.n_views} views")
        cameras = [(f"render_view{args.view:03d}", sample.cameras[args.view])]
    elif args.all_views:
        cameras = [(f"render_view{k:03d}", cam) for k, cam in enumerate(sample.cameras)]
    else:
        cameras = [(f"render_{k:03d}", cam)
                   for k, cam in enumerate(_orbit_cameras(sample, args.orbit))]
    for name, cam in cameras:
        _warn_camera_pose(cam, sample.bounds, name)
        image, opacity, _ = render_image(state.model, ctx, cam, sample.depth_range,
                                         render_cfg, background=background)
        _save_image_png(out / f"{name}.png", image)
        if args.float_dump:
            rgba = np.concatenate([image, opacity[..., None]], axis=-1)
            np.save(out / f"{name}.npy", rgba.astype(np.float32))
    print(f"rendered {len(cameras)} image(s) to {out}")
    return 0


def cmd_mesh(args) -> int:
    state, _ = load_checkpoint(args.ckpt)
    sample = load_dataset(args.data)
    ctx = _full_context(state.model, sample)
    mesh = extract_mesh(lambda pts: state.model.surface_values(ctx, pts),
                        np.asarray(sample.bounds), grid_res=args.grid)
    if mesh.is_empty:
        print("warning: iso-surface is empty; writing an empty mesh", file=sys.stderr)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_obj(mesh, out)
    print(f"wrote {len(mesh.faces)} faces to {out}")
    return 0


def _load_eval_views(directory: Path):
    """Ground-truth images (and masks when present) straight from disk.

    Unlike ``load_dataset`` this tolerates missing mask files, because
    evaluation must still produce full-frame image metrics without them.
    """
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{directory} is not a dataset directory (no meta.json)")
    with open(meta_path) as fh:
        meta = json.load(fh)
    scene = None
    scene_path = directory / "scene.json"
    if scene_path.exists():
        with open(scene_path) as fh:
            scene = scene_from_dict(json.load(fh))
    images, masks = [], []
    for k in range(int(meta["n_views"])):
        rgb = np.asarray(Image.open(directory / f"view_{k:03d}.png"), dtype=np.uint8)
        images.append(rgb.astype(np.float64) / 255.0)
        mask_path = directory / f"mask_{k:03d}.png"
        if mask_path.exists():
            masks.append(np.asarray(Image.open(mask_path), dtype=np.uint8) >= 128)
        else:
            masks.append(None)
    return meta, scene, images, masks


def _find_pred_image(directory: Path, k: int) -> Path | None:
    for pattern in (f"render_view{k:03d}.png", f"view_{k:03d}.png"):
        candidate = directory / pattern
        if candidate.exists():
            return candidate
    return None


def cmd_eval(args) -> int:
    gt_dir = Path(args.data)
    meta, scene, gt_images, gt_masks = _load_eval_views(gt_dir)
    warnings = []

    chamfer = p2s = None
    if args.mesh:
        if scene is None:
            raise ValueError(f"{gt_dir} has no scene.json; cannot score geometry")
        mesh = load_obj(args.mesh)
        chamfer = chamfer_to_scene(mesh, scene)
        p2s = p2s_to_scene(mesh, scene)

    psnr_views = ssim_views = None
    if args.images:
        pred_dir = Path(args.images)
        if not pred_dir.exists():
            raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
        psnr_views, ssim_views = [], []
        for k, (gt, mask) in enumerate(zip(gt_images, gt_masks)):
            pred_path = _find_pred_image(pred_dir, k)
            if pred_path is None:
                raise ValueError(f"no prediction image for view {k} in {pred_dir}")
            pred = np.asarray(Image.open(pred_path), dtype=np.uint8).astype(np.float64) / 255.0
            if pred.shape != gt.shape:
                raise ValueError(
                    f"resolution mismatch for view {k}: prediction {pred.shape[:2]} "
                    f"vs ground truth {gt.shape[:2]}"
                )
            if mask is None and not args.full_frame:
                warnings.append(f"view {k}: no mask file, PSNR computed full-frame")
                print(f"warning: {warnings[-1]}", file=sys.stderr)
            use_mask = None if (args.full_frame or mask is None) else mask
            psnr_views.append(psnr(pred, gt, mask=use_mask))
            ssim_views.append(ssim(pred, gt))

    if chamfer is None and psnr_views is None:
        raise ValueError("nothing to evaluate: pass --mesh and/or --images")

    config_hash = None
    if args.ckpt:
        config_hash = read_manifest(args.ckpt)["config_hash"]
    report = make_metric_report(meta["scene_id"], chamfer=chamfer, p2s=p2s,
                                psnr_per_view=psnr_views, ssim_per_view=ssim_views,
                                config_hash=config_hash, warnings=warnings)
    save_metric_report(report, args.out)
    if args.csv:
        append_metric_csv(report, args.csv)
    parts = []
    if chamfer is not None:
        parts.append(f"chamfer {chamfer:.5f}, p2s {p2s:.5f}")
    if psnr_views is not None:
        parts.append(f"psnr {report['psnr']['mean']:.2f} dB, "
                     f"ssim {report['ssim']['mean']:.4f}")
    print(f"{meta['scene_id']}: " + "; ".join(parts))
    return 0


# -- parser / dispatch -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfrad",
        description="joint surface + radiance fields from sparse calibrated views",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render an analytic scene into a dataset")
    p.add_argument("scene", help="preset name or path to a scene JSON file")
    p.add_argument("out", help="output dataset directory")
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--res", type=int, default=128, help="square image size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="pretrain across one or more datasets")
    p.add_argument("--config", help="run config JSON (required unless --resume)")
    p.add_argument("--data", nargs="+", required=True, help="dataset directories")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--steps", type=int, default=None,
                   help="cap the number of steps taken this invocation")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="two-phase per-scene finetuning")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--iters-geometry", type=int, default=None)
    p.add_argument("--iters-color", type=int, default=None)
    p.add_argument("--random-views", action="store_true",
                   help="sample held-out views randomly instead of round-robin")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("render", help="render novel or training views")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--view", type=int, help="render one training view")
    which.add_argument("--all-views", action="store_true",
                       help="render every training view")
    which.add_argument("--orbit", type=int,
                       help="render N views on the training camera ring")
    p.add_argument("--float-dump", action="store_true",
                   help="also write float32 RGBA .npy files")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("mesh", help="extract the iso-surface as an OBJ mesh")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=128)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("eval", help="score a mesh and/or rendered images")
    p.add_argument("--data", required=True, help="ground-truth dataset directory")
    p.add_argument("--mesh", help="predicted mesh OBJ")
    p.add_argument("--images", help="directory of predicted view images")
    p.add_argument("--ckpt", help="checkpoint to stamp the report's config hash")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="append a summary row to this CSV")
    p.add_argument("--full-frame", action="store_true",
                   help="ignore masks and compute PSNR over full frames")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    threads = os.environ.get(THREADS_ENV)
    if threads:
        try:
            count = int(threads)
            if count < 1:
                raise ValueError
        except ValueError:
            print(f"error: {THREADS_ENV} must be a positive integer, got {threads!r}",
                  file=sys.stderr)
            return 2
        torch.set_num_threads(count)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
