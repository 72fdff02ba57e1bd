"""Geometric ground truth: per-hand on/off-wheel labels from keypoint
distances, plus the hands-overlap flag used by the triage taxonomy.

A hand counts as on the wheel when its closest keypoint, after subtracting
a fixed skin radius, is within the configured threshold (3 cm default) of
the wheel surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import EmptyManifest, WrongKeypointCount
from .scenegen import HAND_KEYPOINTS, FramePose

LABEL_CLASSES = ("on_on", "on_off", "off_on", "off_off")


@dataclass(frozen=True)
class LabelPair:
    left_on_wheel: bool
    right_on_wheel: bool

    @property
    def joint_class(self) -> str:
        return f"{'on' if self.left_on_wheel else 'off'}_{'on' if self.right_on_wheel else 'off'}"


@dataclass(frozen=True)
class LabelerConfig:
    on_wheel_threshold: float = 0.03
    skin_radius: float = 0.008

    def __post_init__(self):
        if self.on_wheel_threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.skin_radius < 0:
            raise ValueError("skin_radius must be nonnegative")


def hand_distance_to_wheel(keypoints: np.ndarray, wheel: geo.Torus, skin_radius: float = 0.008) -> float:
    """Min keypoint distance to the wheel surface minus the skin radius."""
    keypoints = np.asarray(keypoints, dtype=np.float64)
    if keypoints.shape != (HAND_KEYPOINTS, 3):
        raise WrongKeypointCount(f"expected ({HAND_KEYPOINTS}, 3), got {keypoints.shape}")
    return float(np.min(geo.torus_signed_distance(keypoints, wheel))) - skin_radius


def frame_labels(pose: FramePose, wheel: geo.Torus, cfg: LabelerConfig = LabelerConfig()) -> LabelPair:
    dl = hand_distance_to_wheel(pose.left_hand, wheel, cfg.skin_radius)
    dr = hand_distance_to_wheel(pose.right_hand, wheel, cfg.skin_radius)
    return LabelPair(dl < cfg.on_wheel_threshold, dr < cfg.on_wheel_threshold)


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = sorted(map(tuple, points))
    if len(pts) <= 2:
        return np.asarray(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def _hulls_intersect(h1: np.ndarray, h2: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons (degenerate-safe)."""
    if len(h1) == 0 or len(h2) == 0:
        return False

    def axes(h):
        if len(h) == 1:
            return []
        edges = np.roll(h, -1, axis=0) - h
        return [np.array([-e[1], e[0]]) for e in edges if e[0] or e[1]]

    for axis in axes(h1) + axes(h2) or [np.array([1.0, 0.0])]:
        p1 = h1 @ axis
        p2 = h2 @ axis
        if p1.max() < p2.min() or p2.max() < p1.min():
            return False
    return True


def occlusion_flag(pose: FramePose, cam: geo.PinholeCamera) -> bool:
    """True iff the projected 2D convex hulls of the two hands intersect."""
    hulls = []
    for hand in (pose.left_hand, pose.right_hand):
        uv = []
        for p in hand:
            u, v, _ = geo.project_point(cam, p)
            uv.append((u, v))
        hulls.append(_convex_hull_2d(np.asarray(uv)))
    return _hulls_intersect(hulls[0], hulls[1])


def label_distribution(records) -> dict:
    """Counts and fractions of the four joint label classes."""
    records = list(records)
    if not records:
        raise EmptyManifest("label_distribution needs a nonempty manifest")
    counts = {c: 0 for c in LABEL_CLASSES}
    for rec in records:
        labels = rec.labels if hasattr(rec, "labels") else rec
        counts[labels.joint_class] += 1
    total = len(records)
    return {
        "counts": counts,
        "fractions": {c: counts[c] / total for c in LABEL_CLASSES},
        "total": total,
    }
