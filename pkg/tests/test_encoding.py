import numpy as np
import numpy.testing as npt
import pytest
import torch

from surfrad.encoding import encoding_dim, normalize_points, sinusoidal_encoding


class TestSinusoidalEncoding:
    def test_scalar_two_bands_frozen_values(self):
        out = sinusoidal_encoding(torch.tensor([[0.5]], dtype=torch.float64), 2)
        # component-major, band-minor, sin before cos:
        # [sin(pi/2), cos(pi/2), sin(pi), cos(pi)]
        npt.assert_allclose(out.numpy(), [[1.0, 0.0, 0.0, -1.0]], atol=1e-12)

    def test_two_components_one_band(self):
        out = sinusoidal_encoding(torch.tensor([[0.5, -0.25]], dtype=torch.float64), 1)
        r = np.sqrt(2.0) / 2.0
        npt.assert_allclose(out.numpy(), [[1.0, 0.0, -r, r]], atol=1e-12)

    def test_layout_is_component_major(self):
        x = torch.tensor([[0.3, 0.7, -0.2]], dtype=torch.float64)
        full = sinusoidal_encoding(x, 4)
        assert full.shape == (1, 24)
        for i in range(3):
            solo = sinusoidal_encoding(x[:, i : i + 1], 4)
            npt.assert_array_equal(full[:, i * 8 : (i + 1) * 8].numpy(), solo.numpy())

    def test_length_matches_encoding_dim(self):
        for n_bands, dim in [(1, 3), (4, 3), (6, 3), (4, 2)]:
            x = torch.zeros(5, dim)
            assert sinusoidal_encoding(x, n_bands).shape == (5, encoding_dim(n_bands, dim))

    def test_batch_shapes_preserved(self):
        x = torch.zeros(2, 7, 3)
        assert sinusoidal_encoding(x, 6).shape == (2, 7, 36)

    def test_dtype_and_device_follow_input(self):
        for dtype in (torch.float32, torch.float64):
            out = sinusoidal_encoding(torch.zeros(3, 3, dtype=dtype), 2)
            assert out.dtype == dtype

    def test_gradients_flow(self):
        x = torch.tensor([[0.1, 0.2, 0.3]], dtype=torch.float64, requires_grad=True)
        out = sinusoidal_encoding(x, 3)
        out.sum().backward()
        assert x.grad is not None and torch.all(torch.isfinite(x.grad))

    def test_analytic_gradient(self):
        x = torch.tensor([0.37], dtype=torch.float64, requires_grad=True)
        out = sinusoidal_encoding(x, 2)
        g = torch.autograd.grad(out[0], x)[0]  # d sin(pi x)/dx = pi cos(pi x)
        npt.assert_allclose(g.item(), np.pi * np.cos(np.pi * 0.37), atol=1e-12)

    def test_rejects_zero_bands(self):
        with pytest.raises(ValueError):
            sinusoidal_encoding(torch.zeros(1, 3), 0)


class TestNormalizePoints:
    def test_corners_map_to_unit_cube(self):
        bounds = torch.tensor([[-1.0, 0.0, 2.0], [3.0, 4.0, 6.0]], dtype=torch.float64)
        lo = normalize_points(bounds[0], bounds)
        hi = normalize_points(bounds[1], bounds)
        mid = normalize_points(0.5 * (bounds[0] + bounds[1]), bounds)
        npt.assert_allclose(lo.numpy(), [-1.0, -1.0, -1.0], atol=1e-12)
        npt.assert_allclose(hi.numpy(), [1.0, 1.0, 1.0], atol=1e-12)
        npt.assert_allclose(mid.numpy(), [0.0, 0.0, 0.0], atol=1e-12)

    def test_anisotropic_axes_scale_independently(self):
        bounds = torch.tensor([[0.0, 0.0, 0.0], [1.0, 2.0, 4.0]], dtype=torch.float64)
        p = normalize_points(torch.tensor([0.5, 0.5, 0.5], dtype=torch.float64), bounds)
        npt.assert_allclose(p.numpy(), [0.0, -0.5, -0.75], atol=1e-12)


class TestFirstBandInjectivity:
    def test_first_band_pair_identifies_position(self):
        # the lowest frequency is pi, so the (sin, cos) pair sweeps the unit
        # circle exactly once over [-1, 1): recovering the coordinate from the
        # angle is a constructive proof of injectivity on the grid
        x = torch.linspace(-1.0, 1.0, 1001, dtype=torch.float64)[:-1]
        enc = sinusoidal_encoding(x[:, None], 1)
        recovered = torch.atan2(enc[:, 0], enc[:, 1]) / np.pi
        npt.assert_allclose(recovered.numpy(), x.numpy(), atol=1e-9)

    def test_closed_endpoints_wrap(self):
        # -1 and +1 land on the same circle point (0, -1); injectivity holds
        # only with one of the two endpoints excluded
        ends = sinusoidal_encoding(
            torch.tensor([[-1.0], [1.0]], dtype=torch.float64), 1)
        npt.assert_allclose(ends[0].numpy(), ends[1].numpy(), atol=1e-12)
        npt.assert_allclose(ends[1].numpy(), [0.0, -1.0], atol=1e-12)
