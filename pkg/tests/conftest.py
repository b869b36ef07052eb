"""Shared small-scale fixtures: a reduced model and quick synthetic scenes.

Full-size defaults are exercised where cheap (construction, shapes); training
and rendering tests run on these shrunk configurations for speed."""

import numpy as np

from surfrad.dataset import generate_dataset
from surfrad.fields import ModelConfig
from surfrad.losses import LossConfig
from surfrad.rendering import RenderConfig
from surfrad.scenes import preset_scene


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        feature_dim=12, image_widths=(6, 8, 10), fusion_dim=24, fusion_heads=4,
        fusion_ff_dim=32, decoder_dim=16, decoder_heads=4, decoder_ff_dim=32,
        embed_dim=20, trunk_width=24, geometry_width=24, texture_width=24,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_loss_config(**overrides) -> LossConfig:
    base = dict(n_geo=48, n_reg=12, n_rays=10, iters_pretrain=6,
                iters_ft_geometry=3, iters_ft_color=3,
                lr_pretrain=1e-3, lr_finetune=1e-4)
    base.update(overrides)
    return LossConfig(**base)


def tiny_render_config(**overrides) -> RenderConfig:
    base = dict(n_coarse=12, n_fine=4, bisection_steps=4, chunk=256)
    base.update(overrides)
    return RenderConfig(**base)


def tiny_sample(name="sphere_box", n_views=3, resolution=(40, 36), seed=1):
    scene = preset_scene(name)
    return generate_dataset(scene, name, n_views=n_views,
                            resolution=resolution, seed=seed)
