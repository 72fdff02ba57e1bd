"""3D primitives and the distance/projection math used everywhere else.

Points and directions are plain numpy float64 arrays of shape (3,).
All the signed-distance functions also accept batched points of shape
(..., 3) and broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera

UNIT_TOL = 1e-9


def vec(x, y, z) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def normalize(v: np.ndarray) -> np.ndarray:
    n = norm(v)
    return v / np.expand_dims(n, -1) if v.ndim > 1 else v / n


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    a = normalize(np.asarray(axis, dtype=np.float64))
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _check_unit(v: np.ndarray, name: str):
    if abs(norm(v) - 1.0) > 1e-6:
        raise ValueError(f"{name} must be a unit vector, got norm {norm(v)}")


@dataclass(frozen=True)
class Torus:
    """Ring surface: tube of radius ``minor_radius`` around a circle of
    radius ``major_radius`` centered at ``center`` in the plane normal to
    ``axis``."""

    center: np.ndarray
    axis: np.ndarray
    major_radius: float
    minor_radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "axis", normalize(np.asarray(self.axis, dtype=np.float64)))
        if not (self.major_radius > self.minor_radius > 0):
            raise ValueError("torus requires R > r > 0")

    def point_on_ring(self, angle: float) -> np.ndarray:
        """Point on the tube center circle at the given angle."""
        u, v = ring_basis(self.axis)
        return self.center + self.major_radius * (np.cos(angle) * u + np.sin(angle) * v)


def ring_basis(axis: np.ndarray):
    """Two orthonormal vectors spanning the plane normal to ``axis``."""
    a = normalize(np.asarray(axis, dtype=np.float64))
    helper = vec(1, 0, 0) if abs(a[0]) < 0.9 else vec(0, 1, 0)
    u = normalize(np.cross(a, helper))
    v = np.cross(a, u)
    return u, v


@dataclass(frozen=True)
class Capsule:
    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "endpoint_a", np.asarray(self.endpoint_a, dtype=np.float64))
        object.__setattr__(self, "endpoint_b", np.asarray(self.endpoint_b, dtype=np.float64))
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")
        if norm(self.endpoint_b - self.endpoint_a) == 0:
            raise ValueError("capsule endpoints must be distinct")


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used only for cabin walls in the renderer."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=np.float64))
        if np.any(self.half_extents <= 0):
            raise ValueError("box half extents must be positive")


def torus_signed_distance(p: np.ndarray, t: Torus):
    """Signed distance from p to the torus surface; negative inside the tube."""
    q = np.asarray(p, dtype=np.float64) - t.center
    h = np.sum(q * t.axis, axis=-1)
    radial = norm(q - np.expand_dims(h, -1) * t.axis)
    return np.sqrt((radial - t.major_radius) ** 2 + h * h) - t.minor_radius


def capsule_signed_distance(p: np.ndarray, c: Capsule):
    """Signed distance from p to the capsule surface; negative inside."""
    p = np.asarray(p, dtype=np.float64)
    ab = c.endpoint_b - c.endpoint_a
    ap = p - c.endpoint_a
    t = np.clip(np.sum(ap * ab, axis=-1) / np.dot(ab, ab), 0.0, 1.0)
    closest = c.endpoint_a + np.expand_dims(t, -1) * ab
    return norm(p - closest) - c.radius


def sphere_signed_distance(p: np.ndarray, s: Sphere):
    return norm(np.asarray(p, dtype=np.float64) - s.center) - s.radius


def box_signed_distance(p: np.ndarray, b: Box):
    q = np.abs(np.asarray(p, dtype=np.float64) - b.center) - b.half_extents
    outside = norm(np.maximum(q, 0.0))
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


@dataclass(frozen=True)
class PinholeCamera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    focal_length_px: float
    principal_point: tuple
    image_size: tuple

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "look_at", np.asarray(self.look_at, dtype=np.float64))
        object.__setattr__(self, "up", normalize(np.asarray(self.up, dtype=np.float64)))
        if self.focal_length_px <= 0:
            raise ValueError("focal length must be positive")
        if self.image_size[0] < 16 or self.image_size[1] < 16:
            raise ValueError("image size must be at least 16x16")
        if norm(self.look_at - self.position) == 0:
            raise ValueError("look_at must differ from position")

    def basis(self):
        """Camera frame: x right, y down (image v), z forward."""
        forward = normalize(self.look_at - self.position)
        right = normalize(np.cross(forward, self.up))
        down = np.cross(forward, right)
        return right, down, forward


def project_point(cam: PinholeCamera, p: np.ndarray):
    """Pinhole projection to (u, v, depth); raises BehindCamera if depth <= 0."""
    right, down, forward = cam.basis()
    q = np.asarray(p, dtype=np.float64) - cam.position
    x, y, z = q @ right, q @ down, q @ forward
    if np.any(z <= 0):
        raise BehindCamera("point projects behind the camera")
    u = cam.principal_point[0] + cam.focal_length_px * x / z
    v = cam.principal_point[1] + cam.focal_length_px * y / z
    return u, v, z
