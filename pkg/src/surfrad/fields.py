"""Joint surface/radiance field conditioned on fused multi-view features.

One point query runs: pixel-aligned feature sampling -> view fusion ->
shared trunk -> geometry head (surface probability + density) and, when a
query direction is given, cross-attention over per-view pixel colors ->
texture head.  The surface field depends on position only; the query
direction enters nowhere before the color decoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .cameras import Camera
from .encoding import (
    colored_encoding,
    encoding_dim,
    normalize_points,
    sinusoidal_encoding,
)
from .features import (
    CameraBatch,
    ImageEncoder,
    sample_view_colors,
    sample_view_features,
    softplus_activation,
)
from .fusion import AveragePoolFusion, ViewFusionEncoder, ViewQueryDecoder

__all__ = [
    "ModelConfig",
    "SceneContext",
    "SkipMLP",
    "JointField",
    "make_mlp",
]

FUSION_MODES = ("attention", "average")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.  Defaults are the full-size model; tests
    and small fixtures shrink the widths through this one knob."""

    feature_dim: int = 64
    image_widths: tuple[int, int, int] = (16, 32, 48)
    fusion_dim: int = 256
    fusion_heads: int = 4
    fusion_ff_dim: int = 512
    decoder_dim: int = 128
    decoder_heads: int = 4
    decoder_ff_dim: int = 512
    embed_dim: int = 256
    trunk_width: int = 256
    trunk_layers: int = 4
    geometry_width: int = 256
    geometry_layers: int = 2
    texture_width: int = 256
    texture_layers: int = 3
    position_bands: int = 6
    direction_bands: int = 4
    color_bands: int = 4
    fusion_mode: str = "attention"
    shared_trunk: bool = True

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}")
        for f in dc_fields(self):
            value = getattr(self, f.name)
            if f.name == "image_widths":
                object.__setattr__(self, f.name, tuple(int(w) for w in value))
                if len(self.image_widths) != 3 or min(self.image_widths) < 1:
                    raise ValueError("image_widths must be three positive ints")
            elif f.type == "int" and value < 1:
                raise ValueError(f"{f.name} must be positive")
        if self.fusion_dim % self.fusion_heads:
            raise ValueError("fusion_heads must divide fusion_dim")
        if self.decoder_dim % self.decoder_heads:
            raise ValueError("decoder_heads must divide decoder_dim")


@dataclass
class SceneContext:
    """Per-scene state reused across point queries: encoded feature maps plus
    everything needed to project points back into the input views."""

    feature_maps: torch.Tensor  # (n, C, h, w)
    images: torch.Tensor        # (n, 3, H, W), values in [0, 1]
    cameras: CameraBatch
    bounds: torch.Tensor        # (2, 3) world-space scene box
    length_scale: float         # diagonal of the box, scales density

    @property
    def n_views(self) -> int:
        return len(self.cameras)


def make_mlp(in_dim: int, width: int, n_hidden: int, out_dim: int) -> nn.Sequential:
    """Plain MLP, linear output layer."""
    layers: list[nn.Module] = []
    prev = in_dim
    for _ in range(n_hidden):
        layers += [nn.Linear(prev, width), softplus_activation()]
        prev = width
    layers.append(nn.Linear(prev, out_dim))
    return nn.Sequential(*layers)


class SkipMLP(nn.Module):
    """MLP over concat(skip, extra) whose middle hidden layer re-reads the
    skip input, keeping high-frequency position information alive through
    the stack."""

    def __init__(self, skip_dim: int, extra_dim: int, width: int, n_hidden: int,
                 out_dim: int):
        super().__init__()
        if n_hidden < 2:
            raise ValueError("skip MLP needs at least two hidden layers")
        self.skip_at = n_hidden // 2
        layers = []
        prev = skip_dim + extra_dim
        for i in range(n_hidden):
            if i == self.skip_at:
                prev += skip_dim
            layers.append(nn.Linear(prev, width))
            prev = width
        self.hidden = nn.ModuleList(layers)
        self.out = nn.Linear(width, out_dim)
        self.act = softplus_activation()

    def forward(self, skip: torch.Tensor, extra: torch.Tensor) -> torch.Tensor:
        h = torch.cat([skip, extra], dim=-1)
        for i, layer in enumerate(self.hidden):
            if i == self.skip_at:
                h = torch.cat([h, skip], dim=-1)
            h = self.act(layer(h))
        return self.out(h)


def _init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Fan-in uniform weights, zero biases, in construction order."""
    for sub in module.modules():
        if isinstance(sub, (nn.Linear, nn.Conv2d)):
            fan_in = sub.weight.shape[1]
            if isinstance(sub, nn.Conv2d):
                fan_in = sub.weight.shape[1] * sub.weight.shape[2] * sub.weight.shape[3]
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                sub.weight.uniform_(-bound, bound, generator=generator)
                if sub.bias is not None:
                    sub.bias.zero_()


class JointField(nn.Module):
    """Surface + radiance field with multi-view conditioning.

    query_geometry gives (surface probability s, density sigma); query_field
    adds view-dependent color.  All query methods keep the autograd graph,
    so spatial gradients of s come straight from backward passes.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        c = config
        self.image_encoder = ImageEncoder(c.feature_dim, c.image_widths)
        if c.fusion_mode == "attention":
            self.fusion: nn.Module = ViewFusionEncoder(
                c.feature_dim, c.fusion_dim, c.fusion_heads, c.fusion_ff_dim)
        else:
            self.fusion = AveragePoolFusion(c.feature_dim, c.fusion_dim)

        pos_dim = encoding_dim(c.position_bands, 3)

        def trunk():
            return SkipMLP(pos_dim, c.fusion_dim, c.trunk_width, c.trunk_layers,
                           c.embed_dim)

        if c.shared_trunk:
            self.trunk = trunk()
        else:
            # ablation: independent trunks feed the surface and density heads
            self.trunk_surface = trunk()
            self.trunk_density = trunk()
        self.geometry_head = make_mlp(c.embed_dim, c.geometry_width,
                                      c.geometry_layers, 2)

        if c.fusion_mode == "attention":
            value_dim = c.embed_dim + encoding_dim(c.color_bands, 3)
            self.decoder = ViewQueryDecoder(value_dim, c.decoder_dim,
                                            c.decoder_heads, c.decoder_ff_dim,
                                            c.direction_bands)
            texture_in = c.decoder_dim
        else:
            texture_in = c.embed_dim + encoding_dim(c.direction_bands, 3)
        self.texture_head = make_mlp(texture_in, c.texture_width,
                                     c.texture_layers, 3)

        gen = torch.Generator(device="cpu").manual_seed(seed)
        _init_parameters(self, gen)

    # -- context ---------------------------------------------------------

    def build_context(self, images, cameras: list[Camera], bounds) -> SceneContext:
        """images: (n, H, W, 3) float array/tensor in [0, 1]; bounds: (2, 3)."""
        p = next(self.parameters())
        if isinstance(images, np.ndarray):
            images = torch.from_numpy(np.ascontiguousarray(images))
        images = images.to(dtype=p.dtype, device=p.device)
        if images.ndim != 4 or images.shape[-1] != 3:
            raise ValueError("expected images shaped (n_views, H, W, 3)")
        if len(cameras) != images.shape[0]:
            raise ValueError("one camera per image required")
        chw = images.permute(0, 3, 1, 2).contiguous()
        maps = self.image_encoder(chw)
        bounds_t = torch.as_tensor(np.asarray(bounds, dtype=np.float64),
                                   dtype=p.dtype, device=p.device)
        if bounds_t.shape != (2, 3):
            raise ValueError("bounds must be (2, 3)")
        diag = float(np.linalg.norm(np.asarray(bounds, dtype=np.float64)[1]
                                    - np.asarray(bounds, dtype=np.float64)[0]))
        if diag <= 0:
            raise ValueError("degenerate scene bounds")
        batch = CameraBatch.from_cameras(cameras, dtype=p.dtype, device=p.device)
        return SceneContext(maps, chw, batch, bounds_t, diag)

    # -- queries ---------------------------------------------------------

    def _fuse(self, ctx: SceneContext, points: torch.Tensor):
        feats, _ = sample_view_features(ctx.feature_maps, ctx.cameras, points)
        dirs = ctx.cameras.view_directions(points)
        feats_mn = feats.transpose(0, 1)
        dirs_mn = dirs.transpose(0, 1)
        fused = self.fusion(feats_mn, dirs_mn)
        return fused, dirs_mn

    def _embeddings(self, ctx: SceneContext, points: torch.Tensor):
        """-> (surface embedding, density embedding, per-view dirs (M, n, 3))."""
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points must be (M, 3)")
        fused, dirs_mn = self._fuse(ctx, points)
        gx = sinusoidal_encoding(normalize_points(points, ctx.bounds),
                                 self.config.position_bands)
        if self.config.shared_trunk:
            e = self.trunk(gx, fused)
            return e, e, dirs_mn
        return (self.trunk_surface(gx, fused),
                self.trunk_density(gx, fused), dirs_mn)

    def _geometry(self, ctx, e_surface, e_density):
        s = torch.sigmoid(self.geometry_head(e_surface)[..., 0])
        raw = self.geometry_head(e_density)[..., 1]
        sigma = F.softplus(raw) / ctx.length_scale
        return s, sigma

    def query_geometry(self, ctx: SceneContext, points: torch.Tensor):
        """(M, 3) -> (s (M,), sigma (M,)), both differentiable."""
        e_surface, e_density, _ = self._embeddings(ctx, points)
        return self._geometry(ctx, e_surface, e_density)

    def _color(self, ctx, points, d_q, e_density, dirs_mn):
        if self.config.fusion_mode == "average":
            dq_enc = sinusoidal_encoding(d_q, self.config.direction_bands)
            return torch.sigmoid(
                self.texture_head(torch.cat([e_density, dq_enc], dim=-1)))
        pix, _ = sample_view_colors(ctx.images, ctx.cameras, points)
        # interpolation is convex, so clamping only strips float roundoff
        pix_enc = colored_encoding(pix.transpose(0, 1).clamp(0.0, 1.0),
                                   self.config.color_bands)
        n = dirs_mn.shape[1]
        emb_rows = e_density.unsqueeze(1).expand(-1, n, -1)
        values = torch.cat([emb_rows, pix_enc], dim=-1)
        e_c = self.decoder(d_q, dirs_mn, values)
        return torch.sigmoid(self.texture_head(e_c))

    def query_field(self, ctx: SceneContext, points: torch.Tensor,
                    d_q: torch.Tensor):
        """(M, 3) points and (M, 3) unit query directions ->
        (s (M,), sigma (M,), rgb (M, 3))."""
        if d_q.shape != points.shape:
            raise ValueError("query directions must match points (M, 3)")
        e_surface, e_density, dirs_mn = self._embeddings(ctx, points)
        s, sigma = self._geometry(ctx, e_surface, e_density)
        rgb = self._color(ctx, points, d_q, e_density, dirs_mn)
        return s, sigma, rgb

    def query_color(self, ctx: SceneContext, points: torch.Tensor,
                    d_q: torch.Tensor) -> torch.Tensor:
        _, _, rgb = self.query_field(ctx, points, d_q)
        return rgb

    # -- no-grad numpy conveniences -------------------------------------

    @torch.no_grad()
    def surface_values(self, ctx: SceneContext, points: np.ndarray,
                       chunk: int = 8192) -> np.ndarray:
        """Surface probability for (M, 3) numpy points, chunked."""
        p = next(self.parameters())
        out = []
        for start in range(0, len(points), chunk):
            pts = torch.as_tensor(points[start:start + chunk], dtype=p.dtype,
                                  device=p.device)
            out.append(self.query_geometry(ctx, pts)[0].cpu().numpy())
        return np.concatenate(out) if out else np.zeros(0, dtype=np.float32)

    # -- parameter groups for phased finetuning --------------------------

    def geometry_modules(self) -> list[nn.Module]:
        mods = [self.image_encoder, self.fusion, self.geometry_head]
        if self.config.shared_trunk:
            mods.append(self.trunk)
        else:
            mods += [self.trunk_surface, self.trunk_density]
        return mods

    def color_modules(self) -> list[nn.Module]:
        mods: list[nn.Module] = [self.texture_head]
        if self.config.fusion_mode == "attention":
            mods.append(self.decoder)
        return mods

    def geometry_parameters(self):
        for m in self.geometry_modules():
            yield from m.parameters()

    def color_parameters(self):
        for m in self.color_modules():
            yield from m.parameters()
