"""Deterministic software renderer.

Scenes are unions of signed-distance primitives (torus, capsule, sphere,
box) sphere-traced from a pinhole camera with flat diffuse shading. Two
domain profiles exist: ``synthetic`` leaves the render untouched while
``pseudo_real`` degrades it (blur, noise, color shift, vignette) to stand
in for a real-camera target domain with a measurable gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import RectOutOfBounds
from .scenegen import FramePose, Scenario, body_capsules, hand_capsules

MAX_STEPS = 96
HIT_EPS = 2e-4
MAX_DIST = 6.0


@dataclass
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (h, w, 3) uint8

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel buffer {self.pixels.shape} != ({self.height}, {self.width}, 3)")

    @classmethod
    def full(cls, width, height, color):
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = color
        return cls(width, height, px)


@dataclass(frozen=True)
class DomainProfile:
    name: str
    blur_sigma: float = 0.0
    noise_std: float = 0.0
    color_shift: tuple = (1.0, 1.0, 1.0)
    vignette_strength: float = 0.0
    motion_blur_frames: int = 0

    def __post_init__(self):
        if self.blur_sigma < 0 or self.noise_std < 0 or self.vignette_strength < 0 or self.motion_blur_frames < 0:
            raise ValueError("profile parameters must be nonnegative")


SYNTHETIC_PROFILE = DomainProfile("synthetic")
PSEUDO_REAL_PROFILE = DomainProfile(
    "pseudo_real",
    blur_sigma=1.8,
    noise_std=14.0,
    color_shift=(1.12, 0.95, 0.84),
    vignette_strength=0.85,
    motion_blur_frames=0,
)
PROFILES = {"synthetic": SYNTHETIC_PROFILE, "pseudo_real": PSEUDO_REAL_PROFILE}


@dataclass(frozen=True)
class CropRect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 16 or self.h < 16:
            raise ValueError("crop must be at least 16x16")


LIGHTING_PRESETS = {
    "daylight": {"ambient": 0.40, "diffuse": 0.85, "dir": geo.normalize(geo.vec(-0.4, 0.3, -0.85)), "bg": (168, 178, 190)},
    "evening": {"ambient": 0.30, "diffuse": 0.60, "dir": geo.normalize(geo.vec(-0.7, -0.2, -0.65)), "bg": (120, 96, 82)},
    "night": {"ambient": 0.22, "diffuse": 0.35, "dir": geo.normalize(geo.vec(-0.2, 0.5, -0.83)), "bg": (38, 40, 52)},
}


def _sdf(primitive, pts):
    if isinstance(primitive, geo.Torus):
        return geo.torus_signed_distance(pts, primitive)
    if isinstance(primitive, geo.Capsule):
        return geo.capsule_signed_distance(pts, primitive)
    if isinstance(primitive, geo.Sphere):
        return geo.sphere_signed_distance(pts, primitive)
    if isinstance(primitive, geo.Box):
        return geo.box_signed_distance(pts, primitive)
    raise TypeError(f"unsupported primitive {type(primitive)}")


class _SceneBatch:
    """Primitives grouped by type for vectorized distance queries."""

    def __init__(self, primitives):
        self.n = len(primitives)
        tori, caps, sphs, boxes = [], [], [], []
        for i, (p, _c, _g) in enumerate(primitives):
            if isinstance(p, geo.Torus):
                tori.append((i, p))
            elif isinstance(p, geo.Capsule):
                caps.append((i, p))
            elif isinstance(p, geo.Sphere):
                sphs.append((i, p))
            elif isinstance(p, geo.Box):
                boxes.append((i, p))
            else:
                raise TypeError(f"unsupported primitive {type(p)}")
        self.torus_ids = np.array([i for i, _ in tori], dtype=np.int64)
        self.torus_c = np.array([t.center for _, t in tori]).reshape(-1, 3)
        self.torus_a = np.array([t.axis for _, t in tori]).reshape(-1, 3)
        self.torus_R = np.array([t.major_radius for _, t in tori])
        self.torus_r = np.array([t.minor_radius for _, t in tori])
        self.cap_ids = np.array([i for i, _ in caps], dtype=np.int64)
        self.cap_a = np.array([c.endpoint_a for _, c in caps]).reshape(-1, 3)
        self.cap_ab = np.array([c.endpoint_b - c.endpoint_a for _, c in caps]).reshape(-1, 3)
        self.cap_len2 = np.sum(self.cap_ab * self.cap_ab, axis=1)
        self.cap_r = np.array([c.radius for _, c in caps])
        self.sph_ids = np.array([i for i, _ in sphs], dtype=np.int64)
        self.sph_c = np.array([s.center for _, s in sphs]).reshape(-1, 3)
        self.sph_r = np.array([s.radius for _, s in sphs])
        self.box_ids = np.array([i for i, _ in boxes], dtype=np.int64)
        self.box_c = np.array([b.center for _, b in boxes]).reshape(-1, 3)
        self.box_h = np.array([b.half_extents for _, b in boxes]).reshape(-1, 3)

    def distances(self, pts):
        """(n_prims, n_pts) distance matrix.

        Squared norms are expanded so the inner loops become matmuls; the
        clamped subtraction under sqrt guards against tiny negatives from
        cancellation.
        """
        n_pts = pts.shape[0]
        d = np.empty((self.n, n_pts))
        pp = np.sum(pts * pts, axis=1)  # |p|^2 per point
        if len(self.torus_ids):
            h = pts @ self.torus_a.T - np.sum(self.torus_c * self.torus_a, axis=1)  # (n, m)
            dist2_c = pp[:, None] + np.sum(self.torus_c * self.torus_c, axis=1) - 2.0 * (pts @ self.torus_c.T)
            radial = np.sqrt(np.maximum(dist2_c - h * h, 0.0))
            d[self.torus_ids] = (
                np.sqrt((radial - self.torus_R) ** 2 + h * h) - self.torus_r
            ).T
        if len(self.cap_ids):
            ap2 = pp[:, None] + np.sum(self.cap_a * self.cap_a, axis=1) - 2.0 * (pts @ self.cap_a.T)
            dot = pts @ self.cap_ab.T - np.sum(self.cap_a * self.cap_ab, axis=1)  # ap . ab
            t = np.clip(dot / self.cap_len2, 0.0, 1.0)
            seg2 = ap2 - 2.0 * t * dot + t * t * self.cap_len2
            d[self.cap_ids] = (np.sqrt(np.maximum(seg2, 0.0)) - self.cap_r).T
        if len(self.sph_ids):
            c2 = pp[:, None] + np.sum(self.sph_c * self.sph_c, axis=1) - 2.0 * (pts @ self.sph_c.T)
            d[self.sph_ids] = (np.sqrt(np.maximum(c2, 0.0)) - self.sph_r).T
        if len(self.box_ids):
            q = np.abs(pts[None, :, :] - self.box_c[:, None, :]) - self.box_h[:, None, :]
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            inside = np.minimum(np.max(q, axis=-1), 0.0)
            d[self.box_ids] = outside + inside
        return d

    def min_distance(self, pts):
        d = self.distances(pts)
        idx = np.argmin(d, axis=0)
        return d[idx, np.arange(pts.shape[0])], idx


def _scene_distance(primitives, pts, batch=None):
    """Min distance over primitives plus the index of the nearest one."""
    if batch is None:
        batch = _SceneBatch(primitives)
    return batch.min_distance(pts)


def render_scene(cam: geo.PinholeCamera, primitives, lighting: str) -> Image:
    """Sphere-trace a list of (solid, rgb_color, group_id) primitives."""
    w, h = cam.image_size
    light = LIGHTING_PRESETS[lighting]
    if not primitives:
        return Image.full(w, h, light["bg"])

    right, down, forward = cam.basis()
    us = (np.arange(w) + 0.5) - cam.principal_point[0]
    vs = (np.arange(h) + 0.5) - cam.principal_point[1]
    uu, vv = np.meshgrid(us, vs)
    dirs = (
        uu[..., None] * right + vv[..., None] * down + cam.focal_length_px * forward
    ).reshape(-1, 3)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    batch = _SceneBatch(primitives)
    n_rays = dirs.shape[0]
    t = np.zeros(n_rays)
    alive = np.ones(n_rays, dtype=bool)
    hit = np.zeros(n_rays, dtype=bool)
    hit_idx = np.zeros(n_rays, dtype=np.int64)
    for _ in range(MAX_STEPS):
        if not np.any(alive):
            break
        pts = cam.position + t[alive, None] * dirs[alive]
        d, idx = batch.min_distance(pts)
        newly_hit = d < HIT_EPS
        alive_ids = np.flatnonzero(alive)
        hit_ids = alive_ids[newly_hit]
        hit[hit_ids] = True
        hit_idx[hit_ids] = idx[newly_hit]
        t[alive] += np.maximum(d, HIT_EPS * 0.5)
        alive[alive_ids[newly_hit]] = False
        alive &= t < MAX_DIST

    colors = np.empty((n_rays, 3))
    colors[:] = np.asarray(light["bg"], dtype=np.float64)
    if np.any(hit):
        pts = cam.position + t[hit, None] * dirs[hit]
        # scene normal by central differences of the min-distance field
        eps = 1e-4
        grad = np.empty_like(pts)
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = eps
            dp, _ = batch.min_distance(pts + offset)
            dm, _ = batch.min_distance(pts - offset)
            grad[:, axis] = dp - dm
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        normals = grad / np.where(norms > 0, norms, 1.0)
        lambert = np.maximum(0.0, normals @ -light["dir"])
        shade = light["ambient"] + light["diffuse"] * lambert
        base = np.array([primitives[i][1] for i in hit_idx[hit]], dtype=np.float64)
        colors[hit] = np.clip(base * shade[:, None] * 255.0, 0, 255)
    pixels = np.round(colors).astype(np.uint8).reshape(h, w, 3)
    return Image(w, h, pixels)


def _skin_color(tone: float):
    # simple skin ramp indexed by the rig's tone parameter
    dark = np.array([0.28, 0.19, 0.13])
    lite = np.array([0.95, 0.80, 0.69])
    return tuple(dark + tone * (lite - dark))


def scene_primitives(scenario: Scenario, pose: FramePose):
    """Assemble (solid, color, group) triples for one frame.

    Groups: 0 cabin, 1 wheel, 2 body, 3 left hand, 4 right hand.
    """
    veh = scenario.vehicle
    rng = np.random.default_rng(scenario.seed ^ 0x5EED)
    skin = _skin_color(scenario.driver.skin_tone)
    shirt = tuple(rng.uniform(0.15, 0.8, 3))
    prims = []
    wheel = veh.wheel
    prims.append((wheel, (0.10, 0.10, 0.11), 1))
    u, v = geo.ring_basis(wheel.axis)
    for k in range(3):
        ang = pose.wheel_angle + k * 2 * np.pi / 3
        tip = wheel.center + (wheel.major_radius - 0.01) * (np.cos(ang) * u + np.sin(ang) * v)
        prims.append((geo.Capsule(wheel.center, tip, 0.012), (0.13, 0.13, 0.14), 1))
    # cabin: seat back and door panel
    seat = geo.Box(pose.body["pelvis"] + geo.vec(-0.35, 0.0, 0.15), geo.vec(0.10, 0.28, 0.45))
    prims.append((seat, veh.seat_color, 0))
    door = geo.Box(wheel.center + geo.vec(-0.2, 0.62, -0.1), geo.vec(0.8, 0.06, 0.7))
    prims.append((door, veh.wall_color, 0))
    for cap in body_capsules(pose, scenario.driver):
        prims.append((cap, shirt, 2))
    for cap in hand_capsules(pose.left_hand, scenario.driver.limb_radii["finger"]):
        prims.append((cap, skin, 3))
    for cap in hand_capsules(pose.right_hand, scenario.driver.limb_radii["finger"]):
        prims.append((cap, skin, 4))
    return prims


def render_frame(scenario: Scenario, pose: FramePose, profile: DomainProfile = SYNTHETIC_PROFILE) -> Image:
    """Raycast one frame and apply the domain profile."""
    img = render_scene(scenario.camera, scene_primitives(scenario, pose), scenario.lighting)
    stream_seed = (scenario.seed ^ (pose.frame_index * 0x9E3779B9)) & 0x7FFFFFFF
    return apply_domain_profile(img, profile, stream_seed)


def render_group_mask(scenario: Scenario, pose: FramePose, group: int, isolate: bool = True) -> np.ndarray:
    """Boolean pixel mask of one primitive group.

    With isolate=True the group is traced alone (its full silhouette);
    otherwise the mask holds only the pixels where the group is the
    nearest visible surface.
    """
    prims = scene_primitives(scenario, pose)
    if isolate:
        prims = [p for p in prims if p[2] == group]
    tagged = [(p, (1.0 if g == group else 0.0,) * 3, g) for p, _c, g in prims]
    img = render_scene(scenario.camera, tagged, "daylight")
    bg = np.asarray(LIGHTING_PRESETS["daylight"]["bg"], dtype=np.uint8)
    not_bg = np.any(img.pixels != bg, axis=2)
    return not_bg & (img.pixels[:, :, 0] > 64)


def _gaussian_kernel(sigma: float):
    radius = max(1, int(np.ceil(3 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def _blur(channel: np.ndarray, sigma: float) -> np.ndarray:
    k = _gaussian_kernel(sigma)
    r = len(k) // 2
    padded = np.pad(channel, ((r, r), (0, 0)), mode="reflect")
    out = np.zeros_like(channel)
    for i, kv in enumerate(k):
        out += kv * padded[i : i + channel.shape[0], :]
    padded = np.pad(out, ((0, 0), (r, r)), mode="reflect")
    out2 = np.zeros_like(channel)
    for i, kv in enumerate(k):
        out2 += kv * padded[:, i : i + channel.shape[1]]
    return out2


def apply_domain_profile(img: Image, profile: DomainProfile, stream_seed: int) -> Image:
    """Blur, noise, channel gains, vignette — in that order, seeded."""
    x = img.pixels.astype(np.float64)
    if profile.blur_sigma > 0:
        for c in range(3):
            x[:, :, c] = _blur(x[:, :, c], profile.blur_sigma)
    if profile.noise_std > 0:
        rng = np.random.default_rng(stream_seed)
        x = x + rng.normal(0.0, profile.noise_std, size=x.shape)
    gains = np.asarray(profile.color_shift, dtype=np.float64)
    if np.any(gains != 1.0):
        x = x * gains
    if profile.vignette_strength > 0:
        h, w = x.shape[:2]
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        r2 = ((yy - cy) / cy) ** 2 + ((xx - cx) / cx) ** 2
        x = x * (1.0 - profile.vignette_strength * 0.5 * r2)[..., None]
    return Image(img.width, img.height, np.clip(np.round(x), 0, 255).astype(np.uint8))


def compute_wheel_crop(cam: geo.PinholeCamera, wheel: geo.Torus, margin: float = 0.15) -> CropRect:
    """Square crop around the projected outer circle of the wheel."""
    angles = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    u_axis, v_axis = geo.ring_basis(wheel.axis)
    outer = wheel.major_radius + wheel.minor_radius
    us, vs = [], []
    for ang in angles:
        p = wheel.center + outer * (np.cos(ang) * u_axis + np.sin(ang) * v_axis)
        u, v, _ = geo.project_point(cam, p)
        us.append(u)
        vs.append(v)
    u0, u1 = min(us), max(us)
    v0, v1 = min(vs), max(vs)
    du, dv = (u1 - u0) * margin, (v1 - v0) * margin
    u0, u1, v0, v1 = u0 - du, u1 + du, v0 - dv, v1 + dv
    w_img, h_img = cam.image_size
    u0, u1 = max(0.0, u0), min(float(w_img), u1)
    v0, v1 = max(0.0, v0), min(float(h_img), v1)
    side = max(u1 - u0, v1 - v0)
    side = int(np.ceil(side))
    side = max(16, min(side, w_img, h_img))
    cx, cy = (u0 + u1) / 2.0, (v0 + v1) / 2.0
    x = int(round(cx - side / 2.0))
    y = int(round(cy - side / 2.0))
    x = max(0, min(x, w_img - side))
    y = max(0, min(y, h_img - side))
    return CropRect(x, y, side, side)


def crop_and_resize(img: Image, rect: CropRect, out_size: int = 64) -> Image:
    """Bilinear crop/resample to out_size x out_size."""
    if rect.x < 0 or rect.y < 0 or rect.x + rect.w > img.width or rect.y + rect.h > img.height:
        raise RectOutOfBounds(f"{rect} outside {img.width}x{img.height}")
    src = img.pixels.astype(np.float64)
    # map output pixel centers onto source pixel centers; identity when sizes match
    xs = (np.arange(out_size) + 0.5) * (rect.w / out_size) - 0.5 + rect.x
    ys = (np.arange(out_size) + 0.5) * (rect.h / out_size) - 0.5 + rect.y
    x0 = np.clip(np.floor(xs).astype(int), 0, img.width - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, img.height - 1)
    x1 = np.clip(x0 + 1, 0, img.width - 1)
    y1 = np.clip(y0 + 1, 0, img.height - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return Image(out_size, out_size, np.clip(np.round(out), 0, 255).astype(np.uint8))


# --- PPM I/O -----------------------------------------------------------------

def write_ppm(img: Image, path):
    with open(path, "wb") as f:
        f.write(f"P6\n{img.width} {img.height}\n255\n".encode())
        f.write(img.pixels.tobytes())


def read_ppm(path) -> Image:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM")
    # header: magic, width, height, maxval, one whitespace byte, raster
    pos, tokens = 2, []
    while len(tokens) < 3:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace separating header from raster
    width, height, maxval = tokens
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    raster = data[pos : pos + width * height * 3]
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()
    return Image(width, height, pixels)


def encode_png(img: Image) -> bytes:
    """Minimal 8-bit RGB PNG encoding (filter 0 scanlines, one IDAT)."""
    import struct
    import zlib

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + img.pixels[row].tobytes() for row in range(img.height))
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw, 6))
        + chunk(b"IEND", b"")
    )
