"""Multi-view capture synthesis and the on-disk dataset layout.

A dataset directory holds one synthetic capture:

    scene.json          analytic scene description
    meta.json           scene id, bounds, depth bounds, resolution, rig info
    view_000.png ...    8-bit RGB renders
    mask_000.png ...    8-bit masks, 255 = foreground
    camera_000.json ... intrinsics [fx, fy, cx, cy], row-major 3x4 extrinsics,
                        resolution [W, H]

Synthesis is deterministic given (scene, seed): running it twice yields
bitwise-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .cameras import Camera, ring_cameras
from .scenes import Scene, render_ground_truth, scene_from_dict, scene_to_dict

__all__ = ["MultiViewSample", "generate_dataset", "save_dataset", "load_dataset"]

SCHEMA_VERSION = 1


@dataclass
class MultiViewSample:
    """One calibrated multi-view capture of a single scene."""

    scene_id: str
    images: np.ndarray  # (n, H, W, 3) float32 in [0, 1]
    masks: np.ndarray  # (n, H, W) bool
    cameras: list[Camera]
    bounds: np.ndarray  # (2, 3) axis-aligned scene bounds
    depth_range: tuple[float, float]  # conservative (t_near, t_far) for all views
    scene: Scene | None = None  # analytic oracle, present for synthetic data

    def __post_init__(self):
        n = len(self.cameras)
        if self.images.shape[0] != n or self.masks.shape[0] != n:
            raise ValueError("images, masks and cameras must agree on view count")
        if self.images.shape[:3] != self.masks.shape:
            raise ValueError("images and masks must share (n, H, W)")
        self.bounds = np.asarray(self.bounds, dtype=np.float64).reshape(2, 3)

    @property
    def n_views(self) -> int:
        return len(self.cameras)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.images.shape[2], self.images.shape[1]  # (W, H)


def generate_dataset(
    scene: Scene,
    scene_id: str,
    n_views: int,
    resolution: tuple[int, int],
    seed: int = 0,
    ring_radius_factor: float = 2.4,
) -> MultiViewSample:
    """Render a capture from cameras on a horizontal ring around the scene.

    The seed only rotates the ring's starting azimuth; everything else is a
    pure function of the scene and the arguments.
    """
    if n_views < 1:
        raise ValueError("need at least one view")
    rng = np.random.default_rng(seed)
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    # frame the solids rather than the (padded) sampling bounds, but keep the
    # depth range wide enough to march across the whole sampling volume
    content = np.stack([s.aabb() for s in scene.solids])
    content_bounds = np.stack([content[:, 0].min(axis=0), content[:, 1].max(axis=0)])
    content_center, content_rho = _bounding_radius(content_bounds)
    bounds_center, bounds_rho = _bounding_radius(scene.bounds)
    radius = max(ring_radius_factor * content_rho, 1.3 * bounds_rho)
    cameras, _ = ring_cameras(
        content_bounds, n_views, radius=radius, resolution=resolution, phase=phase,
    )
    reach = float(np.linalg.norm(bounds_center - content_center)) + bounds_rho
    pad = 0.05 * bounds_rho
    depth_range = (max(radius - reach - pad, 1e-3), radius + reach + pad)
    images, masks = [], []
    for cam in cameras:
        image, _, mask = render_ground_truth(scene, cam)
        images.append(image.astype(np.float32))
        masks.append(mask)
    return MultiViewSample(
        scene_id=scene_id,
        images=np.stack(images),
        masks=np.stack(masks),
        cameras=cameras,
        bounds=scene.bounds.copy(),
        depth_range=depth_range,
        scene=scene,
    )


def _bounding_radius(bounds: np.ndarray) -> tuple[np.ndarray, float]:
    bounds = np.asarray(bounds, dtype=np.float64)
    center = 0.5 * (bounds[0] + bounds[1])
    return center, 0.5 * float(np.linalg.norm(bounds[1] - bounds[0]))


def _save_png(path: Path, array: np.ndarray) -> None:
    Image.fromarray(array).save(path, format="PNG")


def save_dataset(sample: MultiViewSample, directory) -> None:
    """Write the sample in the dataset directory layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if sample.scene is None:
        raise ValueError("cannot save a sample without its analytic scene")
    with open(directory / "scene.json", "w") as fh:
        json.dump(scene_to_dict(sample.scene), fh, indent=2, sort_keys=True)
        fh.write("\n")
    width, height = sample.resolution
    meta = {
        "schema_version": SCHEMA_VERSION,
        "scene_id": sample.scene_id,
        "n_views": sample.n_views,
        "resolution": [width, height],
        "bounds": sample.bounds.tolist(),
        "depth_range": list(sample.depth_range),
        "background": sample.scene.background.tolist(),
    }
    with open(directory / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for k, cam in enumerate(sample.cameras):
        with open(directory / f"camera_{k:03d}.json", "w") as fh:
            json.dump(cam.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        rgb = np.clip(np.round(sample.images[k] * 255.0), 0, 255).astype(np.uint8)
        _save_png(directory / f"view_{k:03d}.png", rgb)
        _save_png(directory / f"mask_{k:03d}.png", np.where(sample.masks[k], 255, 0).astype(np.uint8))


def load_dataset(directory) -> MultiViewSample:
    """Read a dataset directory back into memory.

    Images come back quantized to the 8-bit grid; cameras, bounds and the
    scene reload exactly (floats survive the JSON round trip bitwise).
    """
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{directory} is not a dataset directory (no meta.json)")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema {meta.get('schema_version')!r}")
    scene = None
    scene_path = directory / "scene.json"
    if scene_path.exists():
        with open(scene_path) as fh:
            scene = scene_from_dict(json.load(fh))
    images, masks, cameras = [], [], []
    for k in range(int(meta["n_views"])):
        with open(directory / f"camera_{k:03d}.json") as fh:
            cameras.append(Camera.from_json_dict(json.load(fh)))
        rgb = np.asarray(Image.open(directory / f"view_{k:03d}.png"), dtype=np.uint8)
        images.append(rgb.astype(np.float32) / 255.0)
        mask = np.asarray(Image.open(directory / f"mask_{k:03d}.png"), dtype=np.uint8)
        masks.append(mask >= 128)
    return MultiViewSample(
        scene_id=meta["scene_id"],
        images=np.stack(images),
        masks=np.stack(masks),
        cameras=cameras,
        bounds=np.asarray(meta["bounds"], dtype=np.float64),
        depth_range=(float(meta["depth_range"][0]), float(meta["depth_range"][1])),
        scene=scene,
    )
