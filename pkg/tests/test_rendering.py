import math
import types

import numpy as np
import pytest
import torch

from surfrad.cameras import Camera, look_at, ring_cameras
from surfrad.mesh import sample_mesh_points
from surfrad.rendering import (
    Ray,
    RenderConfig,
    camera_rays,
    extract_mesh,
    find_surface_intersection,
    integrate_radiance,
    pixel_ray,
    render_image,
    render_rays,
    surface_guided_samples,
    uniform_samples,
)


def sphere_surface_torch(points: torch.Tensor) -> torch.Tensor:
    return (points.norm(dim=-1) <= 1.0).to(points.dtype)


def make_camera(width=32, height=24):
    rotation, translation = look_at(np.array([0.0, -3.0, 0.0]),
                                    np.array([0.0, 0.0, 0.0]))
    return Camera(fx=30.0, fy=30.0, cx=(width - 1) / 2, cy=(height - 1) / 2,
                  rotation=rotation, translation=translation,
                  width=width, height=height)


class TestRay:
    def test_validates(self):
        with pytest.raises(ValueError):
            Ray(np.zeros(3), np.array([0.0, 0.0, 2.0]), 0.1, 1.0)
        with pytest.raises(ValueError):
            Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]), 1.0, 1.0)

    def test_point_evaluation(self):
        ray = Ray(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), 0.0, 9.0)
        np.testing.assert_allclose(ray.at(2.5), [1.0, 2.5, 0.0])
        np.testing.assert_allclose(ray.at([1.0, 2.0]),
                                   [[1.0, 1.0, 0.0], [1.0, 2.0, 0.0]])


class TestPixelRay:
    def test_principal_point_follows_optical_axis(self):
        cam = make_camera(33, 25)
        ray = pixel_ray(cam, (cam.cx, cam.cy), (0.5, 5.0))
        np.testing.assert_allclose(ray.direction, cam.forward, atol=1e-12)
        np.testing.assert_allclose(ray.origin, cam.center, atol=1e-12)

    def test_symmetric_pixels_mirror_about_axis(self):
        cam = make_camera(33, 25)
        d_plus = pixel_ray(cam, (cam.cx + 5, cam.cy), (0.5, 5.0)).direction
        d_minus = pixel_ray(cam, (cam.cx - 5, cam.cy), (0.5, 5.0)).direction
        cam_plus = cam.rotation @ d_plus
        cam_minus = cam.rotation @ d_minus
        np.testing.assert_allclose(cam_plus[0], -cam_minus[0], atol=1e-12)
        np.testing.assert_allclose(cam_plus[1:], cam_minus[1:], atol=1e-12)

    def test_round_trip_through_projection(self):
        cam = make_camera()
        for pixel in [(3.0, 4.0), (20.5, 11.25), (31.0, 0.0)]:
            ray = pixel_ray(cam, pixel, (1.0, 6.0))
            uv, z = cam.project(ray.at(3.7)[None])
            assert z[0] > 0
            np.testing.assert_allclose(uv[0], pixel, atol=1e-4)

    def test_rejects_outside_pixel(self):
        cam = make_camera()
        with pytest.raises(ValueError):
            pixel_ray(cam, (cam.width, 0), (0.5, 5.0))

    def test_camera_rays_cover_frame(self):
        cam = make_camera(8, 6)
        origins, dirs = camera_rays(cam)
        assert origins.shape == (48, 3) and dirs.shape == (48, 3)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)
        first = pixel_ray(cam, (0, 0), (0.5, 5.0)).direction
        np.testing.assert_allclose(dirs[0], first, atol=1e-12)


class TestUniformSamples:
    def test_two_cell_midpoints(self):
        ts = uniform_samples(0.0, 1.0, 2, n_rays=1)
        np.testing.assert_allclose(ts.numpy(), [[0.25, 0.75]], atol=1e-12)

    def test_four_cells(self):
        ts = uniform_samples(1.0, 5.0, 4, n_rays=1)
        np.testing.assert_allclose(ts.numpy(), [[1.5, 2.5, 3.5, 4.5]], atol=1e-12)

    def test_jitter_stays_in_cells_and_sorted(self):
        gen = torch.Generator().manual_seed(0)
        n_rays, n = 10_000, 8
        ts = uniform_samples(2.0, 6.0, n, generator=gen, n_rays=n_rays)
        assert ts.shape == (n_rays, n)
        step = 4.0 / n
        cell_lo = 2.0 + step * torch.arange(n)
        assert (ts >= cell_lo).all() and (ts < cell_lo + step).all()
        assert (ts[:, 1:] > ts[:, :-1]).all()

    def test_per_ray_bounds(self):
        ts = uniform_samples(torch.tensor([0.0, 1.0]), torch.tensor([1.0, 3.0]), 2)
        np.testing.assert_allclose(ts.numpy(), [[0.25, 0.75], [1.5, 2.5]],
                                   atol=1e-12)

    def test_rejects_single_sample(self):
        with pytest.raises(ValueError):
            uniform_samples(0.0, 1.0, 1, n_rays=1)


class TestFindSurfaceIntersection:
    def test_sphere_hit_before_and_after_refinement(self):
        origins = torch.tensor([[0.0, 0.0, -3.0]], dtype=torch.float64)
        dirs = torch.tensor([[0.0, 0.0, 1.0]], dtype=torch.float64)
        step = (5.0 - 1.0) / 64
        coarse, hit = find_surface_intersection(
            sphere_surface_torch, origins, dirs, 1.0, 5.0, 64, n_steps=0)
        assert bool(hit[0])
        assert abs(coarse[0].item() - 2.0) <= step
        fine, hit = find_surface_intersection(
            sphere_surface_torch, origins, dirs, 1.0, 5.0, 64, n_steps=8)
        assert abs(fine[0].item() - 2.0) <= 2 * step / 2**8
        # the returned endpoint is the one known to cross the level
        assert sphere_surface_torch(origins + fine[0] * dirs)[0] >= 0.5

    def test_miss_returns_none_flag(self):
        origins = torch.tensor([[0.0, 3.0, -3.0]], dtype=torch.float64)
        dirs = torch.tensor([[0.0, 0.0, 1.0]], dtype=torch.float64)
        t_star, hit = find_surface_intersection(
            sphere_surface_torch, origins, dirs, 1.0, 5.0, 64)
        assert not bool(hit[0])
        assert t_star[0].item() == 5.0

    def test_everywhere_inside_refines_toward_near_bound(self):
        def all_inside(points):
            return torch.ones(points.shape[0], dtype=points.dtype)
        origins = torch.zeros(1, 3, dtype=torch.float64)
        dirs = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
        t_star, hit = find_surface_intersection(all_inside, origins, dirs,
                                                1.0, 5.0, 16, n_steps=8)
        assert bool(hit[0])
        first_mid = 1.0 + 0.5 * (4.0 / 16)
        assert 1.0 <= t_star[0].item() <= 1.0 + (first_mid - 1.0) / 2**7

    def test_batched_mixed_rays(self):
        origins = torch.tensor([[0.0, 0.0, -3.0], [0.0, 3.0, -3.0]],
                               dtype=torch.float64)
        dirs = torch.tensor([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
                            dtype=torch.float64)
        t_star, hit = find_surface_intersection(
            sphere_surface_torch, origins, dirs, 1.0, 5.0, 64)
        assert hit.tolist() == [True, False]
        assert abs(t_star[0].item() - 2.0) < 1e-2


class TestSurfaceGuidedSamples:
    def test_two_sample_fixture(self):
        ts = surface_guided_samples(torch.tensor([2.0], dtype=torch.float64),
                                    0.1, 2, 1.0, 5.0)
        np.testing.assert_allclose(ts.numpy(), [[1.95, 2.05]], atol=1e-12)

    def test_clipped_interval_stays_in_bounds(self):
        t_star = torch.tensor([1.01], dtype=torch.float64)
        ts = surface_guided_samples(t_star, 0.1, 8, 1.0, 5.0)
        assert (ts >= 1.0).all()
        assert (ts[:, 1:] > ts[:, :-1]).all()

    def test_sixteen_sample_spacing(self):
        ts = surface_guided_samples(torch.tensor([3.0], dtype=torch.float64),
                                    0.2, 16, 1.0, 5.0)
        gaps = np.diff(ts.numpy()[0])
        np.testing.assert_allclose(gaps, 2 * 0.2 / 16, atol=1e-12)
        np.testing.assert_allclose(ts.numpy()[0][0], 2.8 + 0.5 * 0.025,
                                   atol=1e-12)

    def test_validates(self):
        t = torch.tensor([2.0])
        with pytest.raises(ValueError):
            surface_guided_samples(t, 0.1, 1, 1.0, 5.0)
        with pytest.raises(ValueError):
            surface_guided_samples(t, 0.0, 4, 1.0, 5.0)


class TestIntegrateRadiance:
    def test_two_sample_closed_form(self):
        ts = torch.tensor([[0.25, 0.75]], dtype=torch.float64)
        sig = torch.tensor([[1.0, 1.0]], dtype=torch.float64)
        col = torch.tensor([[[1.0, 0, 0], [0, 1.0, 0]]], dtype=torch.float64)
        color, opacity, weights = integrate_radiance(ts, sig, col,
                                                     torch.zeros(3).double())
        w1 = 1 - math.exp(-0.5)
        w2 = math.exp(-0.5) * (1 - math.exp(-0.5))
        np.testing.assert_allclose(weights.numpy(), [[w1, w2]], atol=1e-12)
        np.testing.assert_allclose(color.numpy(), [[w1, w2, 0.0]], atol=1e-12)
        np.testing.assert_allclose(opacity.numpy(), [w1 + w2], atol=1e-12)

    def test_background_composited_with_leftover_transmittance(self):
        ts = torch.tensor([[0.25, 0.75]], dtype=torch.float64)
        sig = torch.ones(1, 2, dtype=torch.float64)
        col = torch.zeros(1, 2, 3, dtype=torch.float64)
        bg = torch.tensor([1.0, 1.0, 1.0], dtype=torch.float64)
        color, _, _ = integrate_radiance(ts, sig, col, bg)
        np.testing.assert_allclose(color.numpy(), math.exp(-1.0), atol=1e-12)

    def test_vacuum_gives_pure_background(self):
        ts = torch.linspace(0, 1, 8).double()[None]
        sig = torch.zeros(1, 8, dtype=torch.float64)
        col = torch.rand(1, 8, 3, dtype=torch.float64)
        bg = torch.tensor([0.2, 0.4, 0.6], dtype=torch.float64)
        color, opacity, _ = integrate_radiance(ts, sig, col, bg)
        np.testing.assert_allclose(color.numpy()[0], bg.numpy(), atol=1e-12)
        assert opacity[0].item() == 0.0

    def test_opaque_single_sample(self):
        ts = torch.tensor([[0.5]], dtype=torch.float64)
        sig = torch.tensor([[50.0]], dtype=torch.float64)
        col = torch.tensor([[[0.3, 0.6, 0.9]]], dtype=torch.float64)
        color, opacity, _ = integrate_radiance(ts, sig, col,
                                               torch.zeros(3).double(),
                                               interval=(0.0, 1.0))
        np.testing.assert_allclose(color.numpy()[0], [0.3, 0.6, 0.9], atol=1e-6)
        assert opacity[0].item() > 1 - 1e-6

    def test_weights_fuzz_bounded(self):
        rng = np.random.default_rng(0)
        ts, _ = torch.sort(torch.from_numpy(rng.uniform(0, 4, (500, 16))), dim=1)
        sig = torch.from_numpy(rng.gamma(1.0, 2.0, (500, 16)))
        col = torch.from_numpy(rng.uniform(0, 1, (500, 16, 3)))
        _, opacity, weights = integrate_radiance(ts, sig, col,
                                                 torch.zeros(3).double())
        assert (weights >= 0).all()
        assert (opacity <= 1.0 + 1e-12).all()

    def test_refinement_is_cauchy_on_smooth_field(self):
        def sigma_fn(t):
            return 3.0 * torch.exp(-((t - 2.0) ** 2) / 0.5)

        def color_fn(t):
            return torch.stack([0.5 + 0.4 * torch.sin(t),
                                torch.full_like(t, 0.3),
                                0.5 + 0.4 * torch.cos(t)], dim=-1)

        results = []
        for n in (64, 128, 256, 512):
            ts = uniform_samples(0.0, 4.0, n, n_rays=1, dtype=torch.float64)
            color, _, _ = integrate_radiance(ts, sigma_fn(ts), color_fn(ts),
                                             torch.zeros(3).double())
            results.append(color[0].numpy())
        diffs = [np.abs(results[i + 1] - results[i]).max() for i in range(3)]
        assert diffs[1] <= diffs[0] + 1e-3
        assert diffs[2] <= diffs[1] + 1e-3
        assert diffs[-1] < 1e-4

    def test_rejects_mismatched_shapes(self):
        ts = torch.zeros(1, 3)
        with pytest.raises(ValueError):
            integrate_radiance(ts, torch.zeros(1, 4), torch.zeros(1, 3, 3),
                               torch.zeros(3))


class AnalyticSolidStub:
    """Opaque unit sphere, red inside, standing in for a trained model."""

    def __init__(self, density=400.0):
        self.density = density
        self._param = torch.zeros(1, dtype=torch.float64)

    def parameters(self):
        return iter([self._param])

    def query_geometry(self, ctx, points):
        inside = (points.norm(dim=-1) <= 1.0).to(points.dtype)
        return inside, self.density * inside

    def query_field(self, ctx, points, d_q):
        s, sigma = self.query_geometry(ctx, points)
        rgb = torch.stack([torch.ones_like(s), torch.zeros_like(s),
                           torch.zeros_like(s)], dim=-1)
        return s, sigma, rgb


def stub_ctx():
    return types.SimpleNamespace(length_scale=2.0)


class TestRenderRays:
    def test_hit_and_miss_rays(self):
        model, ctx = AnalyticSolidStub(), stub_ctx()
        origins = torch.tensor([[0.0, 0.0, -3.0], [0.0, 2.5, -3.0]],
                               dtype=torch.float64)
        dirs = torch.tensor([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
                            dtype=torch.float64)
        cfg = RenderConfig(n_coarse=64, n_fine=16)
        colors, opacity, t_star, hit = render_rays(
            model, ctx, origins, dirs, (1.0, 5.0), cfg,
            torch.tensor([0.0, 0.0, 1.0], dtype=torch.float64))
        assert hit.tolist() == [True, False]
        np.testing.assert_allclose(colors[0].numpy(), [1.0, 0.0, 0.0], atol=1e-3)
        np.testing.assert_allclose(colors[1].numpy(), [0.0, 0.0, 1.0], atol=1e-12)
        assert opacity[0].item() > 0.99 and opacity[1].item() == 0.0
        assert abs(t_star[0].item() - 2.0) < 1e-2

    def test_coarse_fallback_collects_gradient_rays(self):
        # surface never crosses 0.5 but density exists: only flagged rays see it
        class Haze(AnalyticSolidStub):
            def query_geometry(self, ctx, points):
                inside = (points.norm(dim=-1) <= 1.0).to(points.dtype)
                return 0.3 * inside, 2.0 * inside

        model, ctx = Haze(), stub_ctx()
        origins = torch.tensor([[0.0, 0.0, -3.0], [0.0, 0.0, -3.0]],
                               dtype=torch.float64)
        dirs = torch.tensor([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
                            dtype=torch.float64)
        cfg = RenderConfig(n_coarse=32, n_fine=8)
        bg = torch.ones(3, dtype=torch.float64)
        fallback = torch.tensor([True, False])
        colors, opacity, _, hit = render_rays(model, ctx, origins, dirs,
                                              (1.0, 5.0), cfg, bg,
                                              coarse_fallback=fallback)
        assert not hit.any()
        assert opacity[0].item() > 0.5          # integrated through the haze
        assert opacity[1].item() == 0.0         # pure background
        assert colors[0, 1].item() < colors[1, 1].item()


class SmoothShellStub:
    """Soft ball of radius 0.8 whose density is a thin Gaussian shell on the
    iso-surface, so all radiance originates within the refinement window."""

    radius = 0.8
    sharpness = 40.0
    amplitude = 600.0
    width = 0.02

    def query_geometry(self, ctx, points):
        r = points.norm(dim=-1)
        s = torch.sigmoid(self.sharpness * (self.radius - r))
        sigma = self.amplitude * torch.exp(
            -((r - self.radius) ** 2) / (2.0 * self.width**2))
        return s, sigma

    def query_field(self, ctx, points, d_q):
        s, sigma = self.query_geometry(ctx, points)
        rgb = 0.5 + 0.4 * torch.sin(points)
        return s, sigma, rgb


class TestGuidedSamplingMatchesDenseQuadrature:
    def _rays(self, n_hit=150, n_miss=50):
        # impact parameters below 0.6 cross the shell cleanly, above 1.1 the
        # density at closest approach is zero to machine precision; the band
        # in between would make the two quadratures legitimately disagree
        rng = np.random.default_rng(17)
        origins, dirs = [], []
        hits = misses = 0
        while hits < n_hit or misses < n_miss:
            o = rng.standard_normal(3)
            o *= 3.0 / np.linalg.norm(o)
            d = rng.uniform(-1.4, 1.4, 3) - o
            d /= np.linalg.norm(d)
            b = np.linalg.norm(o - np.dot(o, d) * d)
            if b < 0.6 and hits < n_hit:
                hits += 1
            elif b > 1.1 and misses < n_miss:
                misses += 1
            else:
                continue
            origins.append(o)
            dirs.append(d)
        return (torch.tensor(np.array(origins), dtype=torch.float64),
                torch.tensor(np.array(dirs), dtype=torch.float64))

    def test_agreement_within_two_percent(self):
        model, ctx = SmoothShellStub(), stub_ctx()
        origins, dirs = self._rays()
        bg = torch.tensor([0.2, 0.7, 0.9], dtype=torch.float64)

        cfg = RenderConfig(n_coarse=64, n_fine=32)
        guided, g_opac, _, hit = render_rays(model, ctx, origins, dirs,
                                             (1.0, 5.0), cfg, bg)
        assert hit.sum().item() >= 100 and (~hit).sum().item() >= 50

        n = origins.shape[0]
        ts = uniform_samples(1.0, 5.0, 1024, n_rays=n, dtype=torch.float64)
        pts = origins[:, None, :] + ts[..., None] * dirs[:, None, :]
        d_q = dirs[:, None, :].expand_as(pts)
        _, sigma, rgb = model.query_field(ctx, pts.reshape(-1, 3),
                                          d_q.reshape(-1, 3))
        dense, d_opac, _ = integrate_radiance(ts, sigma.reshape(n, -1),
                                              rgb.reshape(n, -1, 3), bg)

        assert (guided - dense).abs().max().item() <= 2e-2
        assert (g_opac - d_opac).abs().max().item() <= 2e-2
    def test_sphere_silhouette(self):
        model, ctx = AnalyticSolidStub(), stub_ctx()
        cam = make_camera(24, 20)
        image, opacity, depth = render_image(model, ctx, cam, (1.0, 5.0),
                                             RenderConfig(n_coarse=48, n_fine=8,
                                                          chunk=100),
                                             background=(0.0, 0.0, 0.0))
        assert image.shape == (20, 24, 3) and opacity.shape == (20, 24)
        cy, cx = 10, 11
        assert image[cy, cx, 0] > 0.95 and image[cy, cx, 2] < 0.05
        assert opacity[0, 0] < 1e-6 and image[0, 0].max() < 1e-6
        assert abs(depth[cy, cx] - 2.0) < 0.05
        assert depth[0, 0] == 0.0

    def test_deterministic(self):
        model, ctx = AnalyticSolidStub(), stub_ctx()
        cam = make_camera(10, 8)
        cfg = RenderConfig(n_coarse=32, n_fine=8)
        a = render_image(model, ctx, cam, (1.0, 5.0), cfg)
        b = render_image(model, ctx, cam, (1.0, 5.0), cfg)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


def sphere_occupancy_np(points):
    return (np.linalg.norm(points, axis=-1) <= 1.0).astype(np.float64)


class TestExtractMesh:
    BOUNDS = np.array([[-1.5, -1.5, -1.5], [1.5, 1.5, 1.5]])

    def radius_error(self, grid_res):
        mesh = extract_mesh(sphere_occupancy_np, self.BOUNDS, grid_res)
        pts = sample_mesh_points(mesh, 4000, np.random.default_rng(0))
        return np.abs(np.linalg.norm(pts, axis=-1) - 1.0)

    def test_sphere_accuracy(self):
        spacing = 3.0 / 63
        err = self.radius_error(64)
        assert err.mean() <= 2 * spacing
        assert err.max() <= 4 * spacing

    def test_refinement_halves_error(self):
        coarse = self.radius_error(32).mean()
        fine = self.radius_error(64).mean()
        assert fine < 0.75 * coarse

    def test_empty_field_flags_empty_mesh(self):
        mesh = extract_mesh(lambda p: np.zeros(len(p)), self.BOUNDS, 16)
        assert mesh.is_empty

    def test_everywhere_inside_gives_clamped_box(self):
        mesh = extract_mesh(lambda p: np.ones(len(p)), self.BOUNDS, 32)
        assert not mesh.is_empty
        spacing = 3.0 / 31
        assert (mesh.vertices >= self.BOUNDS[0] - spacing - 1e-9).all()
        assert (mesh.vertices <= self.BOUNDS[1] + spacing + 1e-9).all()
        box_area = 6 * 3.0 * 3.0
        assert abs(mesh.area() - box_area) / box_area < 0.2

    def test_rejects_small_grid(self):
        with pytest.raises(ValueError):
            extract_mesh(sphere_occupancy_np, self.BOUNDS, 8)
