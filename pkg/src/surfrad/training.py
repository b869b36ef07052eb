"""Pretraining across scenes and two-phase per-scene finetuning.

One pretraining step draws, from a randomly chosen scene: spatial points for
occupancy regression (half near-surface, half uniform), exact surface points
for the gradient regularizer, and rays from one randomly held-out view (the
remaining views condition the model).  Finetuning keeps only the ray loss
and alternates parameter groups: geometry-side modules first, then the
color decoder."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .dataset import MultiViewSample
from .fields import JointField, ModelConfig
from .losses import (
    LossConfig,
    color_loss,
    combined_loss,
    geometry_loss,
    regularization_loss,
)
from .rendering import RenderConfig, camera_rays, render_rays

__all__ = [
    "TrainingDiverged",
    "TrainLogger",
    "TrainState",
    "make_state",
    "pretrain_step",
    "pretrain",
    "finetune",
    "finetune_phase",
    "probe_losses",
]

NEAR_SURFACE_STD_FRACTION = 0.025
EMA_DECAY = 0.99


class TrainingDiverged(RuntimeError):
    """Raised when a loss turns non-finite; message carries the per-term
    values at the failing step."""


class TrainLogger:
    """Append-only JSON-lines training log.  A None path disables logging."""

    def __init__(self, path=None):
        self._fh = open(path, "a") if path is not None else None

    def log(self, record: dict) -> None:
        if self._fh is None:
            return
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


@dataclass
class TrainState:
    """Everything needed to continue training exactly where it stopped."""

    model: JointField
    optimizer: torch.optim.Adam
    step: int
    rng: np.random.Generator
    sampler: torch.Generator
    loss_avg: dict = field(default_factory=dict)

    def update_averages(self, terms: dict) -> None:
        for key, value in terms.items():
            prev = self.loss_avg.get(key)
            self.loss_avg[key] = value if prev is None else \
                EMA_DECAY * prev + (1.0 - EMA_DECAY) * value


def make_state(model_config: ModelConfig, loss_config: LossConfig,
               seed: int = 0) -> TrainState:
    model = JointField(model_config, seed=seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=loss_config.lr_pretrain)
    rng = np.random.default_rng(seed)
    sampler = torch.Generator().manual_seed(seed)
    return TrainState(model, optimizer, 0, rng, sampler)


# -- per-step batch construction -----------------------------------------


def spatial_batch(sample: MultiViewSample, n: int, rng: np.random.Generator):
    """(points (n, 3), occupancy labels (n,)): half near-surface Gaussian
    jitter, half uniform over the scene bounds."""
    scene = sample.scene
    bounds = np.asarray(sample.bounds, dtype=np.float64)
    diag = float(np.linalg.norm(bounds[1] - bounds[0]))
    n_near = n // 2
    near_pts, _ = scene.surface_samples(n_near, rng)
    near_pts = near_pts + rng.normal(0.0, NEAR_SURFACE_STD_FRACTION * diag,
                                     near_pts.shape)
    near_pts = np.clip(near_pts, bounds[0], bounds[1])
    uniform = rng.uniform(bounds[0], bounds[1], (n - n_near, 3))
    points = np.concatenate([near_pts, uniform], axis=0)
    return points, scene.occupancy(points)


def ray_batch(sample: MultiViewSample, view: int, n: int,
              rng: np.random.Generator):
    """n random pixels of one view -> (origins, dirs, gt colors, fg mask)."""
    camera = sample.cameras[view]
    h, w = camera.height, camera.width
    flat = rng.choice(h * w, size=n, replace=n > h * w)
    pixels = np.stack([flat % w, flat // w], axis=-1)
    origins, dirs = camera_rays(camera, pixels)
    colors = sample.images[view].reshape(-1, 3)[flat]
    fg = sample.masks[view].reshape(-1)[flat]
    return origins, dirs, colors, fg


def held_out_context(model: JointField, sample: MultiViewSample, held: int):
    """Conditioning context from every view except ``held``."""
    keep = [i for i in range(sample.n_views) if i != held]
    if not keep:
        raise ValueError("need at least two views to hold one out")
    return model.build_context(sample.images[keep],
                               [sample.cameras[i] for i in keep],
                               sample.bounds)


def _ray_color_loss(model, ctx, sample, held, n_rays, config: RenderConfig,
                    rng, sampler):
    origins, dirs, gt, fg = ray_batch(sample, held, n_rays, rng)
    p = next(model.parameters())
    o_t = torch.as_tensor(origins, dtype=p.dtype)
    d_t = torch.as_tensor(dirs, dtype=p.dtype)
    bg = torch.as_tensor(sample.scene.background, dtype=p.dtype)
    colors, _, _, _ = render_rays(
        model, ctx, o_t, d_t, sample.depth_range, config, bg,
        generator=sampler, coarse_fallback=torch.as_tensor(fg))
    return color_loss(colors, torch.as_tensor(gt, dtype=p.dtype))


# -- pretraining ----------------------------------------------------------


def pretrain_step(state: TrainState, scenes: list, config: LossConfig,
                  render_config: RenderConfig) -> dict:
    """One combined-objective gradient step.  Returns the loss terms."""
    model = state.model
    scene_idx = int(state.rng.integers(len(scenes)))
    sample = scenes[scene_idx]
    held = int(state.rng.integers(sample.n_views))
    ctx = held_out_context(model, sample, held)
    p = next(model.parameters())

    pts, labels = spatial_batch(sample, config.n_geo, state.rng)
    s_pred, _ = model.query_geometry(ctx, torch.as_tensor(pts, dtype=p.dtype))
    l_g = geometry_loss(s_pred, torch.as_tensor(labels, dtype=p.dtype))

    if config.weight_reg > 0:
        # the field stores occupancy (1 inside), so its gradient at the
        # surface points toward the interior; the gradient target must share
        # that orientation or the regularizer fights the occupancy term
        surf_pts, surf_nrm = sample.scene.surface_samples(config.n_reg,
                                                          state.rng)
        l_r = regularization_loss(model, ctx,
                                  torch.as_tensor(surf_pts, dtype=p.dtype),
                                  torch.as_tensor(-surf_nrm, dtype=p.dtype))
    else:
        # a zero-weighted term never contributes gradient; skip its
        # double-backward pass entirely
        l_r = torch.zeros((), dtype=p.dtype)

    l_c = _ray_color_loss(model, ctx, sample, held, config.n_rays,
                          render_config, state.rng, state.sampler)

    total = combined_loss(l_g, l_r, l_c, config)
    terms = {"geometry": l_g.item(), "reg": l_r.item(), "color": l_c.item(),
             "total": total.item()}
    if not all(math.isfinite(v) for v in terms.values()):
        raise TrainingDiverged(
            f"non-finite loss at step {state.step}: {terms}")

    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()
    state.step += 1
    state.update_averages(terms)
    return {**terms, "scene": scene_idx, "held_view": held}


def pretrain(scenes: list, config: LossConfig,
             model_config: ModelConfig | None = None,
             render_config: RenderConfig | None = None,
             seed: int = 0, log_path=None,
             state: TrainState | None = None,
             n_steps: int | None = None,
             checkpoint_fn=None, checkpoint_every: int = 0) -> TrainState:
    """Run (or continue) pretraining until ``iters_pretrain`` total steps.

    ``checkpoint_fn(state)`` fires every ``checkpoint_every`` steps when set.
    ``n_steps`` caps the number of steps taken in this call (for resume
    tests and incremental runs)."""
    if not scenes:
        raise ValueError("need at least one scene")
    for sample in scenes:
        if sample.n_views < 2:
            raise ValueError("every scene needs at least two views")
    render_config = render_config or RenderConfig()
    if state is None:
        state = make_state(model_config or ModelConfig(), config, seed=seed)
    logger = TrainLogger(log_path)
    started = time.perf_counter()
    taken = 0
    try:
        while state.step < config.iters_pretrain:
            if n_steps is not None and taken >= n_steps:
                break
            terms = pretrain_step(state, scenes, config, render_config)
            taken += 1
            logger.log({"step": state.step, **terms,
                        "wall_time": time.perf_counter() - started})
            if checkpoint_fn and checkpoint_every \
                    and state.step % checkpoint_every == 0:
                checkpoint_fn(state)
    finally:
        logger.close()
    return state


# -- finetuning -----------------------------------------------------------


def finetune_phase(state: TrainState, sample: MultiViewSample,
                   config: LossConfig, render_config: RenderConfig,
                   parameters, n_iters: int, phase: str = "geometry",
                   logger: TrainLogger | None = None,
                   random_views: bool = False,
                   started: float | None = None) -> None:
    """Photometric-only training of one parameter subset.

    Everything outside ``parameters`` has requires_grad dropped for the
    duration, so frozen weights are untouched bit for bit (and backward
    skips them)."""
    logger = logger or TrainLogger(None)
    started = time.perf_counter() if started is None else started
    params = list(parameters)
    if not params:
        raise ValueError("empty parameter group")
    optimizer = torch.optim.Adam(params, lr=config.lr_finetune)
    model = state.model
    active = {id(p) for p in params}
    for p in model.parameters():
        p.requires_grad_(id(p) in active)
    try:
        for i in range(n_iters):
            if random_views:
                held = int(state.rng.integers(sample.n_views))
            else:
                held = i % sample.n_views
            ctx = held_out_context(model, sample, held)
            l_c = _ray_color_loss(model, ctx, sample, held, config.n_rays,
                                  render_config, state.rng, state.sampler)
            value = l_c.item()
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite color loss in {phase} finetune step {i}")
            optimizer.zero_grad(set_to_none=True)
            # a batch can carry no photometric signal at all (every ray missed
            # the surface over background pixels); the loss is then a constant
            # with no graph and the step is a no-op rather than an error
            if l_c.requires_grad:
                l_c.backward()
                optimizer.step()
            state.step += 1
            state.update_averages({f"finetune_{phase}": value})
            logger.log({"step": state.step, "phase": phase, "color": value,
                        "held_view": held,
                        "wall_time": time.perf_counter() - started})
    finally:
        for p in model.parameters():
            p.requires_grad_(True)


def finetune(state: TrainState, sample: MultiViewSample, config: LossConfig,
             render_config: RenderConfig | None = None, log_path=None,
             random_views: bool = False) -> TrainState:
    """Two-phase photometric finetuning on one scene.

    Phase one updates the geometry-side modules (image encoder, fusion,
    trunk, geometry head); phase two the color side (cross-attention
    decoder, texture head).  Both use only the ray color loss, with a
    leave-one-out view schedule (round-robin unless random_views)."""
    if sample.n_views < 2:
        raise ValueError("finetuning needs at least two views")
    render_config = render_config or RenderConfig()
    logger = TrainLogger(log_path)
    started = time.perf_counter()
    try:
        finetune_phase(state, sample, config, render_config,
                       state.model.geometry_parameters(),
                       config.iters_ft_geometry, "geometry", logger,
                       random_views, started)
        finetune_phase(state, sample, config, render_config,
                       state.model.color_parameters(),
                       config.iters_ft_color, "color", logger,
                       random_views, started)
    finally:
        logger.close()
    return state


# -- fixed probes for before/after comparisons ----------------------------


def probe_losses(model: JointField, sample: MultiViewSample,
                 config: LossConfig, render_config: RenderConfig | None = None,
                 seed: int = 1234, n_points: int = 512,
                 n_rays: int = 64) -> dict:
    """Deterministic loss probe: fixed points and rays, no jitter.

    The color term renders held-out view 0 conditioned on the rest.  Not a
    training step; gradients are discarded."""
    render_config = render_config or RenderConfig()
    rng = np.random.default_rng(seed)
    ctx = held_out_context(model, sample, 0)
    p = next(model.parameters())

    pts, labels = spatial_batch(sample, n_points, rng)
    with torch.no_grad():
        s_pred, _ = model.query_geometry(ctx, torch.as_tensor(pts, dtype=p.dtype))
        l_g = float(geometry_loss(s_pred, torch.as_tensor(labels, dtype=p.dtype)))
        l_c = float(_ray_color_loss(model, ctx, sample, 0, n_rays,
                                    render_config, rng, None))
    surf_pts, surf_nrm = sample.scene.surface_samples(min(n_points, 256), rng)
    # inward orientation, matching pretrain_step
    l_r = float(regularization_loss(
        model, ctx, torch.as_tensor(surf_pts, dtype=p.dtype),
        torch.as_tensor(-surf_nrm, dtype=p.dtype), create_graph=False))
    total = (config.weight_geometry * l_g + config.weight_reg * l_r
             + config.weight_color * l_c)
    return {"geometry": l_g, "reg": l_r, "color": l_c, "total": total}
