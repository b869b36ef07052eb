import numpy as np
import numpy.testing as npt
import pytest

from surfrad.cameras import Camera, bounding_sphere, look_at, ring_cameras


def _ring_camera(radius=3.0, width=64, height=48):
    rotation, translation = look_at(np.array([radius, 0.0, 0.0]), np.zeros(3))
    return Camera(
        fx=60.0, fy=60.0, cx=(width - 1) / 2, cy=(height - 1) / 2,
        rotation=rotation, translation=translation, width=width, height=height,
    )


class TestCamera:
    def test_center_round_trip(self):
        cam = _ring_camera()
        npt.assert_allclose(cam.center, [3.0, 0.0, 0.0], atol=1e-12)
        npt.assert_allclose(cam.world_to_camera(cam.center), np.zeros(3), atol=1e-12)

    def test_principal_point_ray_is_optical_axis(self):
        cam = _ring_camera()
        d = cam.pixel_directions(np.array([cam.cx, cam.cy]))
        npt.assert_allclose(d, cam.forward, atol=1e-12)
        npt.assert_allclose(np.linalg.norm(d), 1.0, atol=1e-12)

    def test_symmetric_pixels_mirror_about_axis(self):
        cam = _ring_camera()
        for k in (1.0, 7.5, 20.0):
            d_plus = cam.pixel_directions(np.array([cam.cx + k, cam.cy]))
            d_minus = cam.pixel_directions(np.array([cam.cx - k, cam.cy]))
            # equal component along the axis, opposite transverse component
            npt.assert_allclose(d_plus @ cam.forward, d_minus @ cam.forward, atol=1e-12)
            npt.assert_allclose(d_plus + d_minus,
                                2 * (d_plus @ cam.forward) * cam.forward, atol=1e-12)

    def test_project_unproject_round_trip(self):
        cam = _ring_camera()
        rng = np.random.default_rng(7)
        uv = rng.uniform([0, 0], [cam.width - 1, cam.height - 1], size=(500, 2))
        depth = rng.uniform(0.5, 8.0, size=500)
        pts = cam.unproject(uv, depth)
        uv2, z = cam.project(pts)
        assert np.all(z > 0)
        npt.assert_allclose(z, depth, rtol=1e-10)
        assert np.max(np.abs(uv2 - uv)) < 1e-4

    def test_points_behind_camera_flagged(self):
        cam = _ring_camera()
        _, z = cam.project(np.array([[10.0, 0.0, 0.0], [-10.0, 0.0, 0.0]]))
        assert z[0] < 0 and z[1] > 0

    def test_json_round_trip_is_exact(self):
        cam = _ring_camera()
        clone = Camera.from_json_dict(cam.to_json_dict())
        assert clone.fx == cam.fx and clone.cy == cam.cy
        npt.assert_array_equal(clone.rotation, cam.rotation)
        npt.assert_array_equal(clone.translation, cam.translation)

    def test_rejects_bad_rotation(self):
        with pytest.raises(ValueError):
            Camera(1, 1, 0, 0, np.ones((3, 3)), np.zeros(3), 4, 4)


class TestLookAt:
    def test_rows_orthonormal_right_handed(self):
        rotation, _ = look_at([2.0, 1.0, 0.5], [0.0, 0.0, 0.0])
        npt.assert_allclose(rotation @ rotation.T, np.eye(3), atol=1e-12)
        npt.assert_allclose(np.linalg.det(rotation), 1.0, atol=1e-12)

    def test_forward_points_at_target(self):
        eye = np.array([2.0, -1.0, 0.3])
        target = np.array([0.1, 0.2, -0.1])
        rotation, translation = look_at(eye, target)
        forward = rotation[2]
        npt.assert_allclose(forward, (target - eye) / np.linalg.norm(target - eye), atol=1e-12)
        cam_target = rotation @ target + translation
        npt.assert_allclose(cam_target[:2], 0.0, atol=1e-12)
        assert cam_target[2] > 0

    def test_y_axis_points_down(self):
        # camera on the ring, z-up world: image y must map to world -z
        rotation, _ = look_at([3.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        assert rotation[1] @ np.array([0.0, 0.0, 1.0]) < -0.99

    def test_degenerate_up_rejected(self):
        with pytest.raises(ValueError):
            look_at([0.0, 0.0, 3.0], [0.0, 0.0, 0.0], up=(0.0, 0.0, 1.0))


class TestRing:
    def test_bounding_sphere(self):
        center, radius = bounding_sphere(np.array([[-1.0, -2.0, 0.0], [1.0, 2.0, 4.0]]))
        npt.assert_allclose(center, [0.0, 0.0, 2.0])
        npt.assert_allclose(radius, np.sqrt(1 + 4 + 4))

    def test_cameras_on_ring_looking_at_center(self):
        bounds = np.array([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]])
        cams, (t_near, t_far) = ring_cameras(bounds, 6, radius=2.0, resolution=(64, 64))
        assert len(cams) == 6
        center, rho = bounding_sphere(bounds)
        for cam in cams:
            npt.assert_allclose(np.linalg.norm(cam.center - center), 2.0, atol=1e-12)
            npt.assert_allclose(cam.center[2], center[2], atol=1e-12)
            to_center = (center - cam.center) / 2.0
            npt.assert_allclose(cam.forward, to_center, atol=1e-12)
        assert t_near < 2.0 - rho and t_far > 2.0 + rho
        assert t_near > 0

    def test_scene_sphere_fits_in_frame(self):
        bounds = np.array([[-0.6, -0.4, -0.5], [0.6, 0.4, 0.5]])
        cams, _ = ring_cameras(bounds, 4, radius=2.2, resolution=(96, 72))
        center, rho = bounding_sphere(bounds)
        # sample the bounding sphere surface; every visible point must project
        # inside the image with a small margin
        rng = np.random.default_rng(3)
        dirs = rng.normal(size=(2000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts = center + rho * dirs
        for cam in cams:
            uv, z = cam.project(pts)
            assert np.all(z > 0)
            assert uv[:, 0].min() > -0.5 and uv[:, 0].max() < cam.width - 0.5
            assert uv[:, 1].min() > -0.5 and uv[:, 1].max() < cam.height - 0.5

    def test_too_small_ring_rejected(self):
        bounds = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
        with pytest.raises(ValueError):
            ring_cameras(bounds, 4, radius=1.0, resolution=(32, 32))
