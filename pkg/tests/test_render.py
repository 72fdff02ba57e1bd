import numpy as np
import pytest

from wheellab import geometry as geo
from wheellab import render as rd
from wheellab import scenegen as sg
from wheellab.errors import RectOutOfBounds


def cam(size=64, f=80.0):
    return geo.PinholeCamera(
        position=geo.vec(0, 0, 0),
        look_at=geo.vec(1, 0, 0),
        up=geo.vec(0, 0, 1),
        focal_length_px=f,
        principal_point=(size / 2, size / 2),
        image_size=(size, size),
    )


class TestRenderScene:
    def test_empty_scene_uniform_background(self):
        img = rd.render_scene(cam(), [], "night")
        bg = rd.LIGHTING_PRESETS["night"]["bg"]
        assert np.all(img.pixels == np.asarray(bg, dtype=np.uint8))

    def test_deterministic(self):
        cfg = sg.GenerationConfig(num_sequences=1, seed=5, sequence_seconds=2.0)
        sc = sg.sample_scenario(cfg, 0)
        pose = sg.animate_sequence(sc, cfg)[3]
        a = rd.render_frame(sc, pose, rd.PSEUDO_REAL_PROFILE)
        b = rd.render_frame(sc, pose, rd.PSEUDO_REAL_PROFILE)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_sphere_disk_area_matches_analytic(self):
        c = cam(size=128, f=160.0)
        radius, depth = 0.5, 3.0
        sphere = geo.Sphere(geo.vec(depth, 0, 0), radius)
        img = rd.render_scene(c, [(sphere, (1.0, 0.0, 0.0), 0)], "daylight")
        bg = np.asarray(rd.LIGHTING_PRESETS["daylight"]["bg"], dtype=np.uint8)
        hit_px = np.sum(np.any(img.pixels != bg, axis=2))
        analytic = np.pi * (c.focal_length_px * radius / depth) ** 2
        assert abs(hit_px - analytic) / analytic < 0.05

    def test_occlusion_blocker_hides_wheel(self):
        wheel = geo.Torus(geo.vec(2, 0, 0), geo.vec(-1, 0, 0), 0.4, 0.05)
        blocker = geo.Capsule(geo.vec(1, -0.6, 0.2), geo.vec(1, 0.6, 0.2), 0.12)
        c = cam(size=64, f=60.0)
        without = rd.render_scene(c, [(wheel, (1.0, 0, 0), 1)], "daylight")
        with_blk = rd.render_scene(c, [(wheel, (1.0, 0, 0), 1), (blocker, (0, 1.0, 0), 2)], "daylight")
        red_without = (without.pixels[:, :, 0] > without.pixels[:, :, 1]).sum()
        red_with = (with_blk.pixels[:, :, 0] > with_blk.pixels[:, :, 1]).sum()
        assert red_with < red_without
        # blocker pixels appear where wheel pixels used to be
        green = with_blk.pixels[:, :, 1] > with_blk.pixels[:, :, 0]
        was_red = without.pixels[:, :, 0] > without.pixels[:, :, 1]
        assert np.any(green & was_red)

    def test_pseudo_real_profile_creates_gap(self):
        cfg = sg.GenerationConfig(num_sequences=1, seed=8, sequence_seconds=2.0)
        sc = sg.sample_scenario(cfg, 0)
        pose = sg.animate_sequence(sc, cfg)[0]
        synth = rd.render_frame(sc, pose, rd.SYNTHETIC_PROFILE)
        pseudo = rd.render_frame(sc, pose, rd.PSEUDO_REAL_PROFILE)
        mad = np.mean(np.abs(synth.pixels.astype(float) - pseudo.pixels.astype(float)))
        assert mad > 0


class TestDomainProfile:
    def test_identity_profile(self):
        rng = np.random.default_rng(0)
        img = rd.Image(32, 32, rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
        out = rd.apply_domain_profile(img, rd.DomainProfile("id"), stream_seed=1)
        np.testing.assert_array_equal(out.pixels, img.pixels)

    def test_noise_std(self):
        img = rd.Image.full(128, 128, (128, 128, 128))
        profile = rd.DomainProfile("noisy", noise_std=10.0)
        out = rd.apply_domain_profile(img, profile, stream_seed=7)
        diff = out.pixels.astype(float) - img.pixels.astype(float)
        assert abs(np.std(diff) - 10.0) < 1.0

    def test_blur_mass_preserved(self):
        impulse = np.zeros((65, 65))
        impulse[32, 32] = 255.0
        blurred = rd._blur(impulse, sigma=2.0)
        assert abs(blurred.sum() - 255.0) / 255.0 < 0.01

    def test_profile_deterministic_per_seed(self):
        rng = np.random.default_rng(3)
        img = rd.Image(32, 32, rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
        a = rd.apply_domain_profile(img, rd.PSEUDO_REAL_PROFILE, stream_seed=5)
        b = rd.apply_domain_profile(img, rd.PSEUDO_REAL_PROFILE, stream_seed=5)
        c = rd.apply_domain_profile(img, rd.PSEUDO_REAL_PROFILE, stream_seed=6)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        assert not np.array_equal(a.pixels, c.pixels)


class TestWheelCrop:
    def axis_wheel(self, depth=1.5, big=0.3, small=0.03):
        return geo.Torus(geo.vec(depth, 0, 0), geo.vec(-1, 0, 0), big, small)

    def test_centered_wheel_centered_box(self):
        c = cam(size=128, f=100.0)
        rect = rd.compute_wheel_crop(c, self.axis_wheel(), margin=0.0)
        cx, cy = rect.x + rect.w / 2, rect.y + rect.h / 2
        assert rect.w == rect.h
        assert abs(cx - 64) <= 1.0 and abs(cy - 64) <= 1.0

    def test_margin_scales_box(self):
        c = cam(size=256, f=100.0)
        c = geo.PinholeCamera(c.position, c.look_at, c.up, 100.0, (128, 128), (256, 256))
        r0 = rd.compute_wheel_crop(c, self.axis_wheel(), margin=0.0)
        r15 = rd.compute_wheel_crop(c, self.axis_wheel(), margin=0.15)
        assert r15.w / r0.w == pytest.approx(1.30, abs=0.05)

    def test_projected_points_contained(self):
        rng = np.random.default_rng(4)
        c = cam(size=128, f=90.0)
        checked = 0
        while checked < 1000:
            center = geo.vec(rng.uniform(1.2, 2.5), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3))
            axis = geo.normalize(rng.normal(size=3))
            wheel = geo.Torus(center, axis, rng.uniform(0.15, 0.3), 0.02)
            u_ax, v_ax = geo.ring_basis(wheel.axis)
            outer = wheel.major_radius + wheel.minor_radius
            pts = [
                wheel.center + outer * (np.cos(a) * u_ax + np.sin(a) * v_ax)
                for a in np.linspace(0, 2 * np.pi, 64, endpoint=False)
            ]
            uvs = [geo.project_point(c, p)[:2] for p in pts]
            if any(not (0 <= u <= 128 and 0 <= v <= 128) for u, v in uvs):
                continue  # keep only wheels fully inside the frame
            rect = rd.compute_wheel_crop(c, wheel, margin=0.0)
            for u, v in uvs:
                assert rect.x - 1 <= u <= rect.x + rect.w + 1
                assert rect.y - 1 <= v <= rect.y + rect.h + 1
            checked += 1


class TestCropResize:
    def test_full_image_identity(self):
        rng = np.random.default_rng(1)
        img = rd.Image(48, 48, rng.integers(0, 256, (48, 48, 3), dtype=np.uint8))
        out = rd.crop_and_resize(img, rd.CropRect(0, 0, 48, 48), 48)
        np.testing.assert_array_equal(out.pixels, img.pixels)

    def test_uniform_stays_uniform(self):
        img = rd.Image.full(64, 64, (13, 200, 77))
        out = rd.crop_and_resize(img, rd.CropRect(8, 8, 32, 32), 64)
        assert np.all(out.pixels == np.array([13, 200, 77], dtype=np.uint8))

    def test_checkerboard_mean_preserved(self):
        tile = np.kron(np.indices((64, 64)).sum(axis=0) % 2, np.ones((1, 1))) * 255
        img = rd.Image(64, 64, np.stack([tile] * 3, axis=-1).astype(np.uint8))
        out = rd.crop_and_resize(img, rd.CropRect(0, 0, 64, 64), 32)
        assert abs(out.pixels.mean() - img.pixels.mean()) <= 1.0

    def test_out_of_bounds(self):
        img = rd.Image.full(32, 32, (0, 0, 0))
        with pytest.raises(RectOutOfBounds):
            rd.crop_and_resize(img, rd.CropRect(20, 20, 16, 16), 16)


class TestPpm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        img = rd.Image(17, 23, rng.integers(0, 256, (23, 17, 3), dtype=np.uint8))
        path = tmp_path / "img.ppm"
        rd.write_ppm(img, path)
        back = rd.read_ppm(path)
        assert (back.width, back.height) == (17, 23)
        np.testing.assert_array_equal(back.pixels, img.pixels)

    def test_rejects_non_ppm(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"PNG nonsense")
        with pytest.raises(ValueError):
            rd.read_ppm(p)
