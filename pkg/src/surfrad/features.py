"""Image conditioning: the conv feature extractor, differentiable projection,
and pixel-aligned sampling of feature maps and raw image colors.

All torch code here is differentiable with respect to query points so spatial
gradients of the downstream fields can flow through the projections.
Activations are softplus with a high beta: numerically close to relu but
smooth, which keeps finite-difference checks on gradients meaningful.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .cameras import Camera

__all__ = [
    "FEATURE_STRIDE",
    "CameraBatch",
    "ImageEncoder",
    "bilinear_sample",
    "per_view_direction",
    "sample_view_features",
    "sample_view_colors",
]

FEATURE_STRIDE = 16
_BEHIND_EPS = 1e-6


def softplus_activation() -> nn.Module:
    return nn.Softplus(beta=100.0)


class CameraBatch:
    """Stacked tensors for the cameras of one sample, for batched projection."""

    def __init__(self, rotations: torch.Tensor, translations: torch.Tensor,
                 intrinsics: torch.Tensor):
        if rotations.shape[1:] != (3, 3) or translations.shape[1:] != (3,):
            raise ValueError("bad camera tensor shapes")
        self.rotations = rotations  # (n, 3, 3) world-to-camera
        self.translations = translations  # (n, 3)
        self.intrinsics = intrinsics  # (n, 4) fx, fy, cx, cy
        self.centers = torch.einsum("nji,nj->ni", rotations, -translations)

    @classmethod
    def from_cameras(cls, cameras: list[Camera], dtype=torch.float32, device="cpu"):
        rot = torch.tensor(np.stack([c.rotation for c in cameras]), dtype=dtype, device=device)
        tr = torch.tensor(np.stack([c.translation for c in cameras]), dtype=dtype, device=device)
        intr = torch.tensor(
            [[c.fx, c.fy, c.cx, c.cy] for c in cameras], dtype=dtype, device=device
        )
        return cls(rot, tr, intr)

    def __len__(self) -> int:
        return self.rotations.shape[0]

    def project(self, points: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Project (M, 3) world points into every view: uv (n, M, 2), z (n, M)."""
        cam = torch.einsum("nij,mj->nmi", self.rotations, points) + self.translations[:, None]
        z = cam[..., 2]
        safe_z = torch.where(z.abs() < 1e-12, torch.full_like(z, 1e-12), z)
        fx, fy, cx, cy = (self.intrinsics[:, i : i + 1] for i in range(4))
        u = fx * cam[..., 0] / safe_z + cx
        v = fy * cam[..., 1] / safe_z + cy
        return torch.stack([u, v], dim=-1), z

    def view_directions(self, points: torch.Tensor) -> torch.Tensor:
        """Per-view directions d^i: the unit direction under which view i sees
        each point, expressed in view i's camera frame (n, M, 3)."""
        world = points[None] - self.centers[:, None]
        norm = world.norm(dim=-1, keepdim=True).clamp_min(1e-9)
        return torch.einsum("nij,nmj->nmi", self.rotations, world / norm)


def per_view_direction(camera: Camera, d_world: np.ndarray) -> np.ndarray:
    """Rotate a world-frame unit direction into the camera's frame."""
    d_world = np.asarray(d_world, dtype=np.float64)
    if abs(np.linalg.norm(d_world) - 1.0) > 1e-6:
        raise ValueError("d_world must be unit length")
    return camera.rotation @ d_world


class ImageEncoder(nn.Module):
    """Strided conv stack producing stride-16 pixel-aligned feature maps.

    Four stride-2 stages followed by two stride-1 refinement blocks; the last
    conv is linear so features can carry sign.  Input (n, 3, H, W) gives
    (n, C, ceil(H/16), ceil(W/16)).
    """

    def __init__(self, feature_dim: int = 64, widths: tuple[int, int, int] = (16, 32, 48)):
        super().__init__()
        chans = [3, *widths, feature_dim]
        stages: list[nn.Module] = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            stages += [nn.Conv2d(cin, cout, 3, stride=2, padding=1), softplus_activation()]
        stages += [
            nn.Conv2d(feature_dim, feature_dim, 3, stride=1, padding=1),
            softplus_activation(),
            nn.Conv2d(feature_dim, feature_dim, 3, stride=1, padding=1),
        ]
        self.stages = nn.Sequential(*stages)
        self.feature_dim = feature_dim
        self.stride = FEATURE_STRIDE

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (n, 3, H, W), got {tuple(images.shape)}")
        return self.stages(images)


def bilinear_sample(maps: torch.Tensor, xy: torch.Tensor) -> torch.Tensor:
    """Bilinear sampling of (n, C, h, w) maps at per-map grid coords (n, M, 2).

    Coordinates are in grid units (cell j sits at coordinate j); out-of-range
    positions clamp to the border.
    """
    n, c, h, w = maps.shape
    x = xy[..., 0].clamp(0.0, w - 1.0)
    y = xy[..., 1].clamp(0.0, h - 1.0)
    x0 = x.floor().clamp(0, max(w - 2, 0))
    y0 = y.floor().clamp(0, max(h - 2, 0))
    fx = (x - x0).unsqueeze(1)  # (n, 1, M)
    fy = (y - y0).unsqueeze(1)
    x0 = x0.long()
    y0 = y0.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)
    flat = maps.reshape(n, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).unsqueeze(1).expand(n, c, xy.shape[1])
        return flat.gather(2, idx)

    v00 = gather(y0, x0)
    v01 = gather(y0, x1)
    v10 = gather(y1, x0)
    v11 = gather(y1, x1)
    top = v00 * (1 - fx) + v01 * fx
    bot = v10 * (1 - fx) + v11 * fx
    return (top * (1 - fy) + bot * fy).permute(0, 2, 1)  # (n, M, C)


def sample_view_features(
    maps: torch.Tensor, cameras: CameraBatch, points: torch.Tensor,
    stride: int = FEATURE_STRIDE,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Pixel-aligned features for (M, 3) points in every view.

    Returns (features (n, M, C), valid (n, M)); points behind a camera get the
    zero vector and valid = False.  Out-of-frame projections clamp to the
    border (by design: no hard feature cliff at the image edge).
    """
    uv, z = cameras.project(points)
    feats = bilinear_sample(maps, uv / stride)
    valid = z > _BEHIND_EPS
    return feats * valid.unsqueeze(-1), valid


def sample_view_colors(
    images: torch.Tensor, cameras: CameraBatch, points: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Raw RGB sampled at each point's projection in every view (n, M, 3)."""
    uv, z = cameras.project(points)
    colors = bilinear_sample(images, uv)
    valid = z > _BEHIND_EPS
    return colors * valid.unsqueeze(-1), valid
