"""Training objectives: occupancy regression, surface-normal gradient
regularization, and photometric ray loss, plus their weighted combination."""

from __future__ import annotations

from dataclasses import dataclass

import torch

__all__ = [
    "LossConfig",
    "geometry_loss",
    "color_loss",
    "surface_gradient",
    "regularization_loss",
    "combined_loss",
]


@dataclass(frozen=True)
class LossConfig:
    """Loss weights, per-step sample budgets, and schedule lengths."""

    weight_geometry: float = 1.0
    weight_reg: float = 0.1
    weight_color: float = 1.0
    n_geo: int = 2048
    n_reg: int = 512
    n_rays: int = 512
    lr_pretrain: float = 1e-5
    lr_finetune: float = 1e-6
    iters_pretrain: int = 5000
    iters_ft_geometry: int = 2000
    iters_ft_color: int = 2000

    def __post_init__(self):
        for name in ("weight_geometry", "weight_reg", "weight_color"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("n_geo", "n_reg", "n_rays", "iters_pretrain",
                     "iters_ft_geometry", "iters_ft_color"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("lr_pretrain", "lr_finetune"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def geometry_loss(s_pred: torch.Tensor, s_star: torch.Tensor) -> torch.Tensor:
    """Mean squared error between predicted and binary target occupancy."""
    if s_pred.numel() == 0:
        raise ValueError("empty occupancy batch")
    if s_pred.shape != s_star.shape:
        raise ValueError("occupancy batches must have matching shapes")
    return ((s_pred - s_star) ** 2).mean()


def color_loss(c_pred: torch.Tensor, c_star: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over every ray-channel entry."""
    if c_pred.numel() == 0:
        raise ValueError("empty color batch")
    if c_pred.shape != c_star.shape:
        raise ValueError("color batches must have matching shapes")
    return (c_pred - c_star).abs().mean()


def surface_gradient(model, ctx, points: torch.Tensor,
                     create_graph: bool = True) -> torch.Tensor:
    """Spatial gradient of the surface field at (M, 3) points, by autograd.

    Each point is an independent batch row, so differentiating the sum
    yields per-point gradients.  With create_graph the result stays inside
    the training graph and the loss below is differentiable in parameters.
    """
    pts = points.detach().clone().requires_grad_(True)
    s, _ = model.query_geometry(ctx, pts)
    (grad,) = torch.autograd.grad(s.sum(), pts, create_graph=create_graph)
    return grad


def regularization_loss(model, ctx, points: torch.Tensor,
                        normals: torch.Tensor,
                        create_graph: bool = True) -> torch.Tensor:
    """Mean L1 distance between the surface-field gradient and the reference
    unit normals at exact surface points."""
    if points.numel() == 0:
        raise ValueError("empty surface batch")
    grad = surface_gradient(model, ctx, points, create_graph=create_graph)
    return (grad - normals).abs().sum(dim=-1).mean()


def combined_loss(l_geometry: torch.Tensor, l_reg: torch.Tensor,
                  l_color: torch.Tensor, config: LossConfig) -> torch.Tensor:
    return (config.weight_geometry * l_geometry
            + config.weight_reg * l_reg
            + config.weight_color * l_color)
