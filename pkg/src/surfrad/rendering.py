"""Ray sampling, surface search, volume quadrature, image synthesis, and
iso-surface mesh extraction.

Ray math is batched: origins/directions are (R, 3) tensors and sample sets
are (R, N).  The surface search runs without gradients (sample positions are
treated as constants); density and color queries along the chosen samples
keep the graph, so rendered colors are differentiable."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from skimage import measure

from .cameras import Camera
from .mesh import TriangleMesh

__all__ = [
    "Ray",
    "RenderConfig",
    "pixel_ray",
    "camera_rays",
    "uniform_samples",
    "find_surface_intersection",
    "surface_guided_samples",
    "integrate_radiance",
    "render_rays",
    "render_image",
    "extract_mesh",
]

ISO_LEVEL = 0.5


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if o.shape != (3,) or d.shape != (3,):
            raise ValueError("ray origin/direction must be 3-vectors")
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("ray direction must be unit length")
        if not self.t_near < self.t_far:
            raise ValueError("require t_near < t_far")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t):
        return self.origin + np.multiply.outer(np.asarray(t), self.direction)


@dataclass(frozen=True)
class RenderConfig:
    """Sampling budget per ray: coarse surface search + fine shell around the
    intersection.  delta_fraction scales the shell half-width by the scene
    diagonal."""

    n_coarse: int = 64
    n_fine: int = 16
    bisection_steps: int = 8
    delta_fraction: float = 0.05
    chunk: int = 1024

    def __post_init__(self):
        if self.n_coarse < 2 or self.n_fine < 2:
            raise ValueError("need at least two samples per set")
        if self.bisection_steps < 0 or self.chunk < 1:
            raise ValueError("bad refinement/chunk setting")
        if not 0.0 < self.delta_fraction < 1.0:
            raise ValueError("delta_fraction must lie in (0, 1)")


def pixel_ray(camera: Camera, pixel, bounds) -> Ray:
    """Ray through the center of ``pixel`` = (u, v)."""
    u, v = float(pixel[0]), float(pixel[1])
    if not (0 <= u <= camera.width - 1 and 0 <= v <= camera.height - 1):
        raise ValueError("pixel outside the image")
    direction = camera.pixel_directions(np.array([u, v]))
    return Ray(camera.center, direction, float(bounds[0]), float(bounds[1]))


def camera_rays(camera: Camera, pixels: np.ndarray | None = None):
    """(origins (M, 3), directions (M, 3)) for the given integer pixel array
    (M, 2), or for every pixel in row-major order when pixels is None."""
    if pixels is None:
        uu, vv = np.meshgrid(np.arange(camera.width), np.arange(camera.height))
        pixels = np.stack([uu.ravel(), vv.ravel()], axis=-1)
    pixels = np.asarray(pixels, dtype=np.float64)
    dirs = camera.pixel_directions(pixels)
    origins = np.broadcast_to(camera.center, dirs.shape).copy()
    return origins, dirs


def uniform_samples(t_near, t_far, n: int, generator: torch.Generator | None = None,
                    n_rays: int | None = None,
                    dtype: torch.dtype | None = None) -> torch.Tensor:
    """(R, n) sorted cell-midpoint distances; with a generator, each sample is
    jittered uniformly within its cell instead."""
    if n < 2:
        raise ValueError("need at least two samples")
    t_near = torch.as_tensor(t_near, dtype=dtype)
    t_far = torch.as_tensor(t_far, dtype=dtype)
    if not t_near.dtype.is_floating_point:
        t_near = t_near.double()
        t_far = t_far.double()
    if t_near.ndim == 0:
        if n_rays is None:
            raise ValueError("scalar bounds need n_rays")
        t_near = t_near.expand(n_rays)
        t_far = t_far.expand(n_rays)
    r = t_near.shape[0]
    step = (t_far - t_near) / n
    if generator is None:
        offsets = torch.full((r, n), 0.5, dtype=t_near.dtype)
    else:
        offsets = torch.rand(r, n, generator=generator, dtype=t_near.dtype)
    idx = torch.arange(n, dtype=t_near.dtype)
    return t_near[:, None] + (idx[None, :] + offsets) * step[:, None]


@torch.no_grad()
def find_surface_intersection(
    surface_fn, origins: torch.Tensor, directions: torch.Tensor,
    t_near, t_far, n_coarse: int, n_steps: int = 8,
) -> tuple[torch.Tensor, torch.Tensor]:
    """First crossing of the 0.5 level along each ray.

    surface_fn maps (M, 3) points to (M,) values in [0, 1].  Returns
    (t_star (R,), hit (R,) bool); t_star holds the refined crossing for hit
    rays (the endpoint known to lie past the level) and t_far elsewhere.
    The search is coarse-first: the crossing is bracketed between the first
    sample at or above the level and its predecessor (or t_near), then
    bisected n_steps times.
    """
    r = origins.shape[0]
    ts = uniform_samples(t_near, t_far, n_coarse, n_rays=r, dtype=origins.dtype)
    points = origins[:, None, :] + ts[..., None] * directions[:, None, :]
    s = surface_fn(points.reshape(-1, 3)).reshape(r, n_coarse)
    above = s >= ISO_LEVEL
    hit = above.any(dim=1)
    first = above.float().argmax(dim=1)

    t_near_t = torch.as_tensor(t_near, dtype=ts.dtype).expand(r) \
        if np.ndim(t_near) == 0 else torch.as_tensor(t_near, dtype=ts.dtype)
    hi = ts.gather(1, first[:, None])[:, 0]
    prev = (first - 1).clamp_min(0)
    lo = torch.where(first > 0, ts.gather(1, prev[:, None])[:, 0], t_near_t)

    active = hit.nonzero(as_tuple=True)[0]
    if len(active):
        lo_a, hi_a = lo[active], hi[active]
        o_a, d_a = origins[active], directions[active]
        for _ in range(n_steps):
            mid = 0.5 * (lo_a + hi_a)
            s_mid = surface_fn(o_a + mid[:, None] * d_a)
            crossed = s_mid >= ISO_LEVEL
            hi_a = torch.where(crossed, mid, hi_a)
            lo_a = torch.where(crossed, lo_a, mid)
        hi = hi.clone()
        hi[active] = hi_a

    t_far_t = torch.as_tensor(t_far, dtype=ts.dtype).expand(r) \
        if np.ndim(t_far) == 0 else torch.as_tensor(t_far, dtype=ts.dtype)
    t_star = torch.where(hit, hi, t_far_t)
    return t_star, hit


def surface_guided_samples(t_star: torch.Tensor, delta: float, n: int,
                           t_near, t_far) -> torch.Tensor:
    """(R, n) midpoint samples covering [t* - delta, t* + delta] clipped to
    the ray bounds.  Clipping shrinks the interval before the midpoints are
    laid out, so all samples stay within bounds."""
    if n < 2:
        raise ValueError("need at least two samples")
    if delta <= 0:
        raise ValueError("delta must be positive")
    t_near_t = torch.as_tensor(t_near, dtype=t_star.dtype)
    t_far_t = torch.as_tensor(t_far, dtype=t_star.dtype)
    lo = (t_star - delta).maximum(t_near_t)
    hi = (t_star + delta).minimum(t_far_t)
    step = (hi - lo) / n
    idx = torch.arange(n, dtype=t_star.dtype)
    return lo[:, None] + (idx[None, :] + 0.5) * step[:, None]


def integrate_radiance(ts: torch.Tensor, sigmas: torch.Tensor,
                       colors: torch.Tensor, background: torch.Tensor,
                       interval=None):
    """Quadrature of the volume-rendering integral over (R, N) samples.

    w_i = T_i (1 - exp(-sigma_i delta_i)) with delta from consecutive sample
    gaps; the last delta is the mean gap (single-sample sets fall back to the
    interval width, or 1).  Leftover transmittance composites the background.
    Returns (color (R, 3), opacity (R,), weights (R, N)).
    """
    if ts.ndim != 2 or sigmas.shape != ts.shape or colors.shape != ts.shape + (3,):
        raise ValueError("mismatched sample set shapes")
    n = ts.shape[1]
    if n > 1:
        gaps = ts[:, 1:] - ts[:, :-1]
        last = gaps.mean(dim=1, keepdim=True)
        deltas = torch.cat([gaps, last], dim=1)
    else:
        if interval is not None:
            width = torch.as_tensor(float(interval[1]) - float(interval[0]),
                                    dtype=ts.dtype)
        else:
            width = torch.tensor(1.0, dtype=ts.dtype)
        deltas = width.expand_as(ts)
    tau = sigmas * deltas
    alpha = 1.0 - torch.exp(-tau)
    trans = torch.exp(-(torch.cumsum(tau, dim=1) - tau))
    weights = trans * alpha
    opacity = weights.sum(dim=1)
    background = torch.as_tensor(background, dtype=colors.dtype)
    color = (weights[..., None] * colors).sum(dim=1) \
        + (1.0 - opacity)[:, None] * background
    return color, opacity, weights


def _field_surface_fn(model, ctx):
    def surface_fn(points):
        return model.query_geometry(ctx, points)[0]
    return surface_fn


def render_rays(model, ctx, origins: torch.Tensor, directions: torch.Tensor,
                t_range, config: RenderConfig, background,
                generator: torch.Generator | None = None,
                coarse_fallback: torch.Tensor | None = None):
    """Differentiable colors for a batch of rays.

    Hit rays integrate n_fine samples in the delta-shell around the surface.
    Rays without a crossing composite pure background, except those flagged
    in coarse_fallback, which integrate every coarse sample so color
    gradients exist before a surface has formed.
    Returns (colors (R, 3), opacity (R,), t_star (R,), hit (R,)).
    """
    r = origins.shape[0]
    surface_fn = _field_surface_fn(model, ctx)
    t_star, hit = find_surface_intersection(
        surface_fn, origins, directions, t_range[0], t_range[1],
        config.n_coarse, config.bisection_steps)

    delta = config.delta_fraction * ctx.length_scale
    background = torch.as_tensor(background, dtype=origins.dtype)
    colors = background.expand(r, 3).clone()
    opacity = torch.zeros(r, dtype=origins.dtype)

    def integrate(idx, ts):
        pts = (origins[idx, None, :] + ts[..., None] * directions[idx, None, :])
        flat = pts.reshape(-1, 3)
        d_q = directions[idx, None, :].expand_as(pts).reshape(-1, 3)
        _, sigma, rgb = model.query_field(ctx, flat, d_q)
        n = ts.shape[1]
        return integrate_radiance(ts, sigma.reshape(-1, n),
                                  rgb.reshape(-1, n, 3), background)

    hit_idx = hit.nonzero(as_tuple=True)[0]
    if len(hit_idx):
        fine_ts = surface_guided_samples(t_star[hit_idx], delta, config.n_fine,
                                         t_range[0], t_range[1])
        c, o, _ = integrate(hit_idx, fine_ts)
        colors = colors.index_put((hit_idx,), c)
        opacity = opacity.index_put((hit_idx,), o)

    if coarse_fallback is not None:
        fb_idx = (coarse_fallback & ~hit).nonzero(as_tuple=True)[0]
        if len(fb_idx):
            coarse_ts = uniform_samples(t_range[0], t_range[1], config.n_coarse,
                                        generator=generator, n_rays=len(fb_idx),
                                        dtype=origins.dtype)
            c, o, _ = integrate(fb_idx, coarse_ts)
            colors = colors.index_put((fb_idx,), c)
            opacity = opacity.index_put((fb_idx,), o)

    return colors, opacity, t_star, hit


@torch.no_grad()
def render_image(model, ctx, camera: Camera, t_range,
                 config: RenderConfig | None = None,
                 background=(1.0, 1.0, 1.0)):
    """Full-frame deterministic render.

    Returns (image (H, W, 3), opacity (H, W), depth (H, W)) float32 numpy;
    depth holds the surface distance for hit pixels and 0 elsewhere."""
    config = config or RenderConfig()
    p = next(model.parameters())
    origins_np, dirs_np = camera_rays(camera)
    h, w = camera.height, camera.width
    image = np.zeros((h * w, 3), dtype=np.float32)
    opac = np.zeros(h * w, dtype=np.float32)
    depth = np.zeros(h * w, dtype=np.float32)
    bg = np.broadcast_to(np.asarray(background, dtype=np.float64), (3,)).copy()
    for start in range(0, h * w, config.chunk):
        sl = slice(start, start + config.chunk)
        o = torch.as_tensor(origins_np[sl], dtype=p.dtype)
        d = torch.as_tensor(dirs_np[sl], dtype=p.dtype)
        c, a, t_star, hit = render_rays(model, ctx, o, d, t_range, config,
                                        torch.as_tensor(bg, dtype=p.dtype))
        image[sl] = c.cpu().numpy()
        opac[sl] = a.cpu().numpy()
        depth[sl] = np.where(hit.cpu().numpy(), t_star.cpu().numpy(), 0.0)
    return (image.reshape(h, w, 3), opac.reshape(h, w), depth.reshape(h, w))


def extract_mesh(surface_fn, bounds, grid_res: int, iso: float = ISO_LEVEL,
                 chunk: int = 65536) -> TriangleMesh:
    """March the iso-surface of ``surface_fn`` over a grid_res^3 lattice.

    surface_fn maps (M, 3) float64 numpy points to (M,) values.  The volume
    is padded with one zero layer so surfaces clipped by the bounds close
    into a watertight shell; a field at 1 everywhere therefore produces the
    bounding box itself.  No crossing at all gives an empty mesh.
    """
    if grid_res < 16:
        raise ValueError("grid_res must be at least 16")
    bounds = np.asarray(bounds, dtype=np.float64)
    axes = [np.linspace(bounds[0, k], bounds[1, k], grid_res) for k in range(3)]
    spacing = np.array([ax[1] - ax[0] for ax in axes])
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
    values = np.empty(len(pts), dtype=np.float64)
    for start in range(0, len(pts), chunk):
        values[start:start + chunk] = np.asarray(
            surface_fn(pts[start:start + chunk]), dtype=np.float64)
    volume = np.zeros((grid_res + 2,) * 3, dtype=np.float64)
    volume[1:-1, 1:-1, 1:-1] = values.reshape(grid_res, grid_res, grid_res)
    if volume.max() < iso:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts, faces, _, _ = measure.marching_cubes(volume, level=iso,
                                                spacing=tuple(spacing))
    verts = verts + (bounds[0] - spacing)
    return TriangleMesh(verts, faces.astype(np.int64)).without_degenerate_faces()
