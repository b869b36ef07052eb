"""Pinhole cameras, look-at placement, and ring rigs for synthetic captures.

Conventions used throughout the package:

* camera frame: +x right, +y down, +z forward (points in front have z > 0)
* world-to-camera: ``x_cam = R @ x_world + t``
* pixel centers sit at integer coordinates; a centered principal point is
  ``cx = (W - 1) / 2``, ``cy = (H - 1) / 2``
* ``unproject`` takes camera-space z-depth; rays carry unit directions and
  depth maps store the along-ray parameter t (the two agree on the axis)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Camera",
    "look_at",
    "ring_cameras",
    "bounding_sphere",
]


@dataclass(frozen=True)
class Camera:
    """Calibrated pinhole camera with a fixed image resolution."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) world-to-camera
    translation: np.ndarray  # (3,)
    width: int
    height: int

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be (3, 3), got {rotation.shape}")
        if translation.shape != (3,):
            raise ValueError(f"translation must be (3,), got {translation.shape}")
        # dataclass is frozen; bypass __setattr__ to normalize dtypes once
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("resolution must be positive")
        rtr = rotation @ rotation.T
        if not np.allclose(rtr, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        """Optical axis direction in world coordinates (unit length)."""
        return self.rotation[2].copy()

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to pixel coordinates.

        Returns ``(uv, z)`` where ``uv`` has shape (..., 2) and ``z`` is the
        camera-space depth.  Points with z <= 0 are behind the camera; their
        uv values are not meaningful and callers must test ``z`` first.
        """
        cam = self.world_to_camera(points)
        z = cam[..., 2]
        # guard the division; invalid entries are flagged through z anyway
        safe_z = np.where(np.abs(z) < 1e-12, 1e-12, z)
        u = self.fx * cam[..., 0] / safe_z + self.cx
        v = self.fy * cam[..., 1] / safe_z + self.cy
        return np.stack([u, v], axis=-1), z

    def unproject(self, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Lift pixels at camera-space z-depth ``depth`` back to world points."""
        uv = np.asarray(uv, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        x = (uv[..., 0] - self.cx) / self.fx * depth
        y = (uv[..., 1] - self.cy) / self.fy * depth
        cam = np.stack([x, y, depth], axis=-1)
        return self.camera_to_world(cam)

    def pixel_directions(self, uv: np.ndarray) -> np.ndarray:
        """Unit world-space ray directions through the given pixels."""
        uv = np.asarray(uv, dtype=np.float64)
        x = (uv[..., 0] - self.cx) / self.fx
        y = (uv[..., 1] - self.cy) / self.fy
        cam = np.stack([x, y, np.ones_like(x)], axis=-1)
        world = cam @ self.rotation
        return world / np.linalg.norm(world, axis=-1, keepdims=True)

    def to_json_dict(self) -> dict:
        extrinsics = np.concatenate([self.rotation, self.translation[:, None]], axis=1)
        return {
            "intrinsics": [self.fx, self.fy, self.cx, self.cy],
            "extrinsics": extrinsics.tolist(),
            "resolution": [self.width, self.height],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Camera":
        fx, fy, cx, cy = (float(v) for v in data["intrinsics"])
        extrinsics = np.asarray(data["extrinsics"], dtype=np.float64)
        if extrinsics.shape != (3, 4):
            raise ValueError(f"extrinsics must be 3x4, got {extrinsics.shape}")
        width, height = (int(v) for v in data["resolution"])
        return cls(fx, fy, cx, cy, extrinsics[:, :3], extrinsics[:, 3], width, height)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera rotation and translation for a camera at ``eye``
    looking toward ``target`` with ``up`` fixing the roll.

    Returns (R, t) with rows of R = (right, down, forward) so the camera
    frame follows the +x right / +y down / +z forward convention.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / norm
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("viewing direction is parallel to the up vector")
    right = right / norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=0)
    translation = -rotation @ eye
    return rotation, translation


def bounding_sphere(bounds: np.ndarray) -> tuple[np.ndarray, float]:
    """Center and radius of the sphere circumscribing an axis-aligned box."""
    bounds = np.asarray(bounds, dtype=np.float64).reshape(2, 3)
    center = 0.5 * (bounds[0] + bounds[1])
    radius = 0.5 * float(np.linalg.norm(bounds[1] - bounds[0]))
    return center, radius


def ring_cameras(
    bounds: np.ndarray,
    n_views: int,
    radius: float,
    resolution: tuple[int, int],
    phase: float = 0.0,
) -> tuple[list[Camera], tuple[float, float]]:
    """Place ``n_views`` cameras uniformly on a horizontal ring around the
    scene, all looking at the bounds center.

    The focal length is chosen so the scene's bounding sphere fills about 90%
    of the shorter image dimension.  Also returns conservative depth bounds
    (t_near, t_far) covering the bounding sphere from every ring position.
    """
    center, rho = bounding_sphere(bounds)
    if rho <= 0.0:
        raise ValueError("scene bounds are degenerate")
    if radius <= 1.1 * rho:
        raise ValueError(
            f"ring radius {radius:g} too small for scene bounding radius {rho:g}; "
            "cameras must stay outside the scene"
        )
    width, height = resolution
    # every scene point sits within asin(rho / radius) of the optical axis, so
    # this focal keeps the silhouette inside 90% of the short image half-extent
    focal = 0.45 * min(width, height) * np.sqrt(radius**2 - rho**2) / rho
    cameras = []
    for k in range(n_views):
        angle = phase + 2.0 * np.pi * k / n_views
        eye = center + radius * np.array([np.cos(angle), np.sin(angle), 0.0])
        rotation, translation = look_at(eye, center)
        cameras.append(
            Camera(
                fx=focal,
                fy=focal,
                cx=(width - 1) / 2.0,
                cy=(height - 1) / 2.0,
                rotation=rotation,
                translation=translation,
                width=width,
                height=height,
            )
        )
    pad = 0.05 * rho
    t_near = max(radius - rho - pad, 1e-3)
    t_far = radius + rho + pad
    return cameras, (t_near, t_far)
