import numpy as np
import pytest

from wheellab import geometry as geo
from wheellab.errors import BehindCamera


def random_torus(rng):
    center = rng.uniform(-1, 1, 3)
    axis = geo.normalize(rng.normal(size=3))
    big = rng.uniform(0.1, 0.4)
    small = rng.uniform(0.01, 0.08)
    return geo.Torus(center, axis, big, small)


class TestTorusDistance:
    def test_center_point(self):
        t = geo.Torus(geo.vec(0, 0, 0), geo.vec(0, 0, 1), 0.19, 0.015)
        assert geo.torus_signed_distance(t.center, t) == pytest.approx(0.175, abs=1e-12)

    def test_tube_center_is_minus_minor_radius(self):
        t = geo.Torus(geo.vec(0.3, -0.1, 0.5), geo.vec(0, 1, 0), 0.2, 0.03)
        for ang in np.linspace(0, 2 * np.pi, 7):
            p = t.point_on_ring(ang)
            assert geo.torus_signed_distance(p, t) == pytest.approx(-0.03, abs=1e-12)

    def test_against_surface_sampling_oracle(self):
        # Oracle: min distance to 1e6 sampled torus-surface points.
        rng = np.random.default_rng(7)
        theta = rng.uniform(0, 2 * np.pi, 1_000_000)
        phi = rng.uniform(0, 2 * np.pi, 1_000_000)
        for _ in range(25):
            t = random_torus(rng)
            u, v = geo.ring_basis(t.axis)
            ring = t.center + t.major_radius * (
                np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v
            )
            radial_dir = (ring - t.center) / t.major_radius
            surface = ring + t.minor_radius * (
                np.cos(phi)[:, None] * radial_dir + np.sin(phi)[:, None] * t.axis
            )
            p = rng.uniform(-0.8, 0.8, 3)
            oracle = np.min(np.linalg.norm(surface - p, axis=1))
            got = geo.torus_signed_distance(p, t)
            assert abs(abs(got) - oracle) < 1e-3

    def test_rigid_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            t = random_torus(rng)
            p = rng.uniform(-1, 1, 3)
            rot = geo.rotation_about_axis(rng.normal(size=3), rng.uniform(0, 2 * np.pi))
            shift = rng.uniform(-2, 2, 3)
            t2 = geo.Torus(rot @ t.center + shift, rot @ t.axis, t.major_radius, t.minor_radius)
            p2 = rot @ p + shift
            assert geo.torus_signed_distance(p2, t2) == pytest.approx(
                geo.torus_signed_distance(p, t), abs=1e-9
            )

    def test_surface_points_are_zero(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            t = random_torus(rng)
            u, v = geo.ring_basis(t.axis)
            th, ph = rng.uniform(0, 2 * np.pi, 2)
            ring = t.center + t.major_radius * (np.cos(th) * u + np.sin(th) * v)
            rd = (ring - t.center) / t.major_radius
            p = ring + t.minor_radius * (np.cos(ph) * rd + np.sin(ph) * t.axis)
            assert abs(geo.torus_signed_distance(p, t)) < 1e-9


class TestCapsuleDistance:
    def test_midpoint(self):
        c = geo.Capsule(geo.vec(0, 0, 0), geo.vec(1, 0, 0), 0.01)
        assert geo.capsule_signed_distance(geo.vec(0.5, 0, 0), c) == pytest.approx(-0.01)

    def test_endpoint_cap(self):
        c = geo.Capsule(geo.vec(0, 0, 0), geo.vec(1, 0, 0), 0.05)
        p = geo.vec(-0.3, 0, 0)  # 0.3 beyond endpoint a, along the axis
        assert geo.capsule_signed_distance(p, c) == pytest.approx(0.25)

    def test_against_segment_sampling_oracle(self):
        rng = np.random.default_rng(5)
        ts = np.linspace(0.0, 1.0, 100_000)
        for _ in range(50):
            a, b = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
            if np.allclose(a, b):
                continue
            r = rng.uniform(0.01, 0.2)
            c = geo.Capsule(a, b, r)
            p = rng.uniform(-2, 2, 3)
            seg = a + ts[:, None] * (b - a)
            oracle = np.min(np.linalg.norm(seg - p, axis=1)) - r
            assert geo.capsule_signed_distance(p, c) == pytest.approx(oracle, abs=1e-6)


class TestProjection:
    def cam(self):
        return geo.PinholeCamera(
            position=geo.vec(0, 0, 0),
            look_at=geo.vec(1, 0, 0),
            up=geo.vec(0, 0, 1),
            focal_length_px=100.0,
            principal_point=(32.0, 32.0),
            image_size=(64, 64),
        )

    def test_axis_point_maps_to_principal_point(self):
        u, v, d = geo.project_point(self.cam(), geo.vec(2, 0, 0))
        assert (u, v) == pytest.approx((32.0, 32.0))
        assert d == pytest.approx(2.0)

    def test_lateral_offset(self):
        cam = self.cam()
        right, down, forward = cam.basis()
        p = cam.position + 1.0 * forward + 0.1 * right
        u, v, d = geo.project_point(cam, p)
        assert u == pytest.approx(32.0 + 10.0)
        assert v == pytest.approx(32.0)

    def test_behind_camera(self):
        with pytest.raises(BehindCamera):
            geo.project_point(self.cam(), geo.vec(-1, 0, 0))

    def test_scale_consistency(self):
        cam = self.cam()
        right, down, forward = cam.basis()
        p1 = cam.position + 1.0 * forward + 0.2 * right + 0.05 * down
        p2 = cam.position + 2.0 * forward + 0.4 * right + 0.10 * down
        u1, v1, _ = geo.project_point(cam, p1)
        u2, v2, _ = geo.project_point(cam, p2)
        assert (u1, v1) == pytest.approx((u2, v2), abs=1e-9)


class TestValidation:
    def test_torus_requires_big_over_small(self):
        with pytest.raises(ValueError):
            geo.Torus(geo.vec(0, 0, 0), geo.vec(0, 0, 1), 0.01, 0.02)

    def test_capsule_distinct_endpoints(self):
        with pytest.raises(ValueError):
            geo.Capsule(geo.vec(0, 0, 0), geo.vec(0, 0, 0), 0.1)

    def test_camera_min_image_size(self):
        with pytest.raises(ValueError):
            geo.PinholeCamera(geo.vec(0, 0, 0), geo.vec(1, 0, 0), geo.vec(0, 0, 1), 50, (4, 4), (8, 8))
