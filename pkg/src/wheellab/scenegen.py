"""Scenario sampling and animation.

A scenario is a deterministic function of (config seed, sequence index):
driver rig, vehicle preset, behavior, lighting, camera. Animation turns a
scenario into per-frame 3D poses via keyframed behavior scripts — hands
either grip the wheel ring or track free-space anchor points, with the
elbow filled in by analytic two-bone IK so bone lengths never change.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .errors import EmptyAxis, JointLimit

BEHAVIORS = (
    "two_handed",
    "one_handed_left",
    "one_handed_right",
    "texting",
    "turning_around",
    "falling_asleep",
    "both_hands_off",
)
LIGHTINGS = ("daylight", "evening", "night")

BODY_JOINTS = (
    "pelvis", "spine", "chest", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_hip", "right_hip",
)

# parent of each body joint in the skeleton tree
PARENT = {
    "pelvis": None, "spine": "pelvis", "chest": "spine", "neck": "chest",
    "head": "neck",
    "left_shoulder": "chest", "left_elbow": "left_shoulder", "left_wrist": "left_elbow",
    "right_shoulder": "chest", "right_elbow": "right_shoulder", "right_wrist": "right_elbow",
    "left_hip": "pelvis", "right_hip": "pelvis",
}

HAND_KEYPOINTS = 21

# Hand template in the wrist-local frame: x along the fingers, y across the
# palm toward the thumb, z out of the palm. 21 keypoints: wrist + 4 joints
# per finger. Adjacent keypoints along each chain stay within ~2.6 cm so a
# capsule hull built on them hugs the keypoint set.
def _hand_template():
    pts = {"wrist": (0.0, 0.0, 0.0)}
    chains = {
        "thumb": [(0.022, 0.028, 0.004), (0.044, 0.046, 0.008), (0.062, 0.058, 0.010), (0.078, 0.066, 0.010)],
        "index": [(0.080, 0.028, 0.0), (0.104, 0.030, -0.004), (0.124, 0.030, -0.008), (0.140, 0.030, -0.012)],
        "middle": [(0.082, 0.009, 0.0), (0.108, 0.009, -0.004), (0.130, 0.009, -0.010), (0.148, 0.009, -0.016)],
        "ring": [(0.080, -0.010, 0.0), (0.104, -0.011, -0.004), (0.124, -0.012, -0.010), (0.140, -0.013, -0.016)],
        "pinky": [(0.074, -0.028, 0.0), (0.092, -0.030, -0.004), (0.107, -0.031, -0.008), (0.120, -0.032, -0.012)],
    }
    names, arr = ["wrist"], [pts["wrist"]]
    for finger, joints in chains.items():
        for j, p in enumerate(joints):
            names.append(f"{finger}_{j}")
            arr.append(p)
    return tuple(names), np.array(arr, dtype=np.float64)


HAND_KEYPOINT_NAMES, HAND_TEMPLATE = _hand_template()

# capsule hull of a hand: pairs of keypoint indices (chains + knuckle web)
def _hand_capsule_pairs():
    idx = {n: i for i, n in enumerate(HAND_KEYPOINT_NAMES)}
    pairs = [(idx["wrist"], idx["thumb_0"])]
    for finger in ("thumb", "index", "middle", "ring", "pinky"):
        for j in range(3):
            pairs.append((idx[f"{finger}_{j}"], idx[f"{finger}_{j + 1}"]))
    web = ["thumb_0", "index_0", "middle_0", "ring_0", "pinky_0"]
    for a, b in zip(web, web[1:]):
        pairs.append((idx[a], idx[b]))
    return tuple(pairs)


HAND_CAPSULE_PAIRS = _hand_capsule_pairs()


@dataclass(frozen=True)
class DriverRig:
    driver_id: str
    scale: float
    skin_tone: float
    rest_offsets: dict  # joint -> local offset from parent (root offset is world)
    limb_radii: dict  # capsule radii in meters
    hand_scale: float

    def hand_keypoints_local(self):
        return HAND_TEMPLATE * self.hand_scale

    def bone_lengths(self):
        return {j: float(np.linalg.norm(off)) for j, off in self.rest_offsets.items() if PARENT[j]}


def make_rig(driver_id: str, scale: float = 1.0, skin_tone: float = 0.6) -> DriverRig:
    s = scale
    offsets = {
        "pelvis": geo.vec(-0.08, 0.0, 0.56),
        "spine": geo.vec(0.01, 0.0, 0.16 * s),
        "chest": geo.vec(0.02, 0.0, 0.16 * s),
        "neck": geo.vec(0.0, 0.0, 0.14 * s),
        "head": geo.vec(0.01, 0.0, 0.12 * s),
        "left_shoulder": geo.vec(0.02, 0.185 * s, 0.10 * s),
        "left_elbow": geo.vec(0.0, 0.02, -0.33 * s),
        "left_wrist": geo.vec(0.0, 0.0, -0.31 * s),
        "right_shoulder": geo.vec(0.02, -0.185 * s, 0.10 * s),
        "right_elbow": geo.vec(0.0, -0.02, -0.33 * s),
        "right_wrist": geo.vec(0.0, 0.0, -0.31 * s),
        "left_hip": geo.vec(0.0, 0.09 * s, -0.02),
        "right_hip": geo.vec(0.0, -0.09 * s, -0.02),
    }
    radii = {
        "torso": 0.13 * s, "head": 0.10 * s, "upper_arm": 0.042 * s,
        "forearm": 0.036 * s, "finger": 0.008, "thigh": 0.07 * s,
    }
    return DriverRig(driver_id, scale, skin_tone, offsets, radii, hand_scale=s)


# Built-in driver pools: ten synthetic-domain drivers and a disjoint pool
# used by the pseudo-real profile.
SYNTH_DRIVERS = tuple(
    make_rig(f"synth_{i:02d}", scale=0.92 + 0.016 * i, skin_tone=0.30 + 0.06 * i)
    for i in range(10)
)
PSEUDO_REAL_DRIVERS = tuple(
    make_rig(f"real_{i:02d}", scale=0.94 + 0.013 * i, skin_tone=0.34 + 0.055 * i)
    for i in range(10)
)


@dataclass(frozen=True)
class VehiclePreset:
    name: str
    wheel: geo.Torus
    cabin_half_extents: np.ndarray
    seat_color: tuple
    wall_color: tuple


def _wheel(center_x, center_z, big, small):
    # column tilted back toward the driver
    axis = geo.normalize(geo.vec(-0.88, 0.0, 0.47))
    return geo.Torus(geo.vec(center_x, 0.0, center_z), axis, big, small)


VEHICLES = (
    VehiclePreset("suv_large", _wheel(0.36, 0.80, 0.200, 0.018), geo.vec(1.3, 0.9, 1.3), (0.35, 0.30, 0.28), (0.55, 0.55, 0.58)),
    VehiclePreset("suv_medium", _wheel(0.35, 0.79, 0.190, 0.017), geo.vec(1.2, 0.85, 1.25), (0.30, 0.28, 0.33), (0.50, 0.52, 0.55)),
    VehiclePreset("sedan", _wheel(0.34, 0.77, 0.180, 0.016), geo.vec(1.15, 0.8, 1.15), (0.26, 0.26, 0.30), (0.47, 0.47, 0.50)),
)
VEHICLES_BY_NAME = {v.name: v for v in VEHICLES}


@dataclass(frozen=True)
class GenerationConfig:
    num_sequences: int = 10
    behavior_weights: dict = field(default_factory=lambda: {
        "two_handed": 0.30,
        "one_handed_left": 0.18,
        "one_handed_right": 0.14,
        "texting": 0.14,
        "turning_around": 0.10,
        "falling_asleep": 0.10,
        "both_hands_off": 0.04,
    })
    lighting_weights: dict = field(default_factory=lambda: {
        "daylight": 0.5, "evening": 0.3, "night": 0.2,
    })
    vehicle_set: tuple = ("suv_large", "suv_medium", "sedan")
    driver_set: tuple = tuple(r.driver_id for r in SYNTH_DRIVERS)
    sequence_seconds: float = 10.0
    fps: float = 15.0
    seed: int = 0
    domain: str = "synthetic"  # which render profile & image tree this feeds
    image_size: int = 64
    cross_reach: bool = False  # one-handed grips may cross to the far side
    motion_blur_frames: int = 0  # rolling average over this many previous frames

    def __post_init__(self):
        for name, w in (("behavior_weights", self.behavior_weights), ("lighting_weights", self.lighting_weights)):
            if abs(sum(w.values()) - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1")
        if self.num_sequences < 1:
            raise ValueError("num_sequences must be >= 1")

    @property
    def frames_per_sequence(self) -> int:
        return int(round(self.sequence_seconds * self.fps))


DRIVER_POOLS = {r.driver_id: r for r in SYNTH_DRIVERS + PSEUDO_REAL_DRIVERS}


@dataclass(frozen=True)
class Scenario:
    sequence_id: str
    driver: DriverRig
    vehicle: VehiclePreset
    camera: geo.PinholeCamera
    lighting: str
    behavior: str
    seed: int
    cross_reach: bool = False


@dataclass(frozen=True)
class FramePose:
    frame_index: int
    time: float
    body: dict  # joint name -> world Vec3
    left_hand: np.ndarray  # (21, 3) world keypoints
    right_hand: np.ndarray
    wheel_angle: float


def _camera_for(vehicle: VehiclePreset, image_size: int) -> geo.PinholeCamera:
    return geo.PinholeCamera(
        position=geo.vec(0.82, -0.38, 1.22),
        look_at=geo.vec(-0.02, 0.03, 0.86),
        up=geo.vec(0, 0, 1),
        focal_length_px=0.9 * image_size,
        principal_point=(image_size / 2.0, image_size / 2.0),
        image_size=(image_size, image_size),
    )


def _weighted_choice(rng, weights: dict):
    items = sorted(weights.items())
    if not items:
        raise EmptyAxis("empty weighted set")
    names = [k for k, _ in items]
    probs = np.array([v for _, v in items], dtype=np.float64)
    probs = probs / probs.sum()
    return names[int(rng.choice(len(names), p=probs))]


def sample_scenario(cfg: GenerationConfig, index: int) -> Scenario:
    """Deterministic scenario draw for one sequence index."""
    if index >= cfg.num_sequences:
        raise ValueError(f"index {index} >= num_sequences {cfg.num_sequences}")
    if not cfg.driver_set:
        raise EmptyAxis("driver_set is empty")
    if not cfg.vehicle_set:
        raise EmptyAxis("vehicle_set is empty")
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFF, (cfg.seed >> 32) & 0xFFFFFFFF, index])
    behavior = _weighted_choice(rng, cfg.behavior_weights)
    lighting = _weighted_choice(rng, cfg.lighting_weights)
    driver_id = sorted(cfg.driver_set)[int(rng.integers(len(cfg.driver_set)))]
    vehicle = VEHICLES_BY_NAME[sorted(cfg.vehicle_set)[int(rng.integers(len(cfg.vehicle_set)))]]
    anim_seed = int(rng.integers(0, 2**63 - 1))
    return Scenario(
        sequence_id=f"seq_{cfg.seed:08x}_{index:04d}",
        driver=DRIVER_POOLS[driver_id],
        vehicle=vehicle,
        camera=_camera_for(vehicle, cfg.image_size),
        lighting=lighting,
        behavior=behavior,
        seed=anim_seed,
        cross_reach=cfg.cross_reach,
    )


# --- forward kinematics ------------------------------------------------------

JOINT_LIMIT_RAD = 2.8


def forward_kinematics(rig: DriverRig, joint_angles: dict) -> dict:
    """World positions of all body joints given per-joint rotation vectors."""
    world, rot = {}, {}
    for joint in BODY_JOINTS:
        ang = np.asarray(joint_angles.get(joint, np.zeros(3)), dtype=np.float64)
        mag = float(np.linalg.norm(ang))
        if mag > JOINT_LIMIT_RAD:
            raise JointLimit(f"{joint}: |rotation| {mag:.3f} rad exceeds {JOINT_LIMIT_RAD}")
        local = geo.rotation_about_axis(ang / mag, mag) if mag > 0 else np.eye(3)
        parent = PARENT[joint]
        if parent is None:
            world[joint] = rig.rest_offsets[joint].copy()
            rot[joint] = local
        else:
            world[joint] = world[parent] + rot[parent] @ rig.rest_offsets[joint]
            rot[joint] = rot[parent] @ local
    return world


def _two_bone_ik(shoulder, target, l1, l2, bend_hint):
    """Elbow position for a shoulder->elbow->wrist chain reaching target.

    The target must be reachable; callers arrange geometry so it is.
    """
    d_vec = target - shoulder
    d = float(np.linalg.norm(d_vec))
    d = min(max(d, abs(l1 - l2) + 1e-9), l1 + l2 - 1e-9)
    axis = d_vec / float(np.linalg.norm(d_vec))
    # law of cosines: distance from shoulder to the elbow's projection
    a = (l1 * l1 - l2 * l2 + d * d) / (2 * d)
    h = np.sqrt(max(l1 * l1 - a * a, 0.0))
    side = bend_hint - np.dot(bend_hint, axis) * axis
    n = float(np.linalg.norm(side))
    side = side / n if n > 1e-9 else geo.ring_basis(axis)[0]
    elbow = shoulder + a * axis + h * side
    # wrist sits exactly at l2 from the elbow along elbow->target
    to_t = target - elbow
    wrist = elbow + to_t / float(np.linalg.norm(to_t)) * l2
    return elbow, wrist


def _slerp(r_a: np.ndarray, r_b: np.ndarray, s: float) -> np.ndarray:
    """Interpolate rotation matrices along the geodesic."""
    rel = r_a.T @ r_b
    angle = np.arccos(np.clip((np.trace(rel) - 1) / 2, -1.0, 1.0))
    if angle < 1e-12:
        return r_a
    axis = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]]) / (2 * np.sin(angle))
    return r_a @ geo.rotation_about_axis(axis, s * angle)


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


# --- behavior scripts --------------------------------------------------------
#
# A hand state at any time is ("grip", ring_angle) or ("free", anchor_point).
# Scripts are keyframe lists [(t_frac, state)]; between keyframes the hand
# position/orientation is smoothstep-interpolated, which keeps motion C^1.

def _grip_world(wheel: geo.Torus, ring_angle: float):
    """Grip pose: middle-knuckle anchor on the tube center circle."""
    u, v = geo.ring_basis(wheel.axis)
    p = wheel.center + wheel.major_radius * (np.cos(ring_angle) * u + np.sin(ring_angle) * v)
    tangent = -np.sin(ring_angle) * u + np.cos(ring_angle) * v
    radial = (p - wheel.center) / wheel.major_radius
    return p, tangent, radial


def _hand_frame_for_grip(wheel, ring_angle, left: bool):
    p, tangent, radial = _grip_world(wheel, ring_angle)
    x = tangent if left else -tangent  # fingers wrap along the rim
    z = radial  # palm faces outward from the wheel center
    y = np.cross(z, x)
    return p, np.stack([x, y, z], axis=1)


def _hand_frame_for_free(anchor, left: bool):
    # relaxed pose: fingers forward-down, palm down
    x = geo.normalize(geo.vec(0.8, 0.0, -0.6))
    z = geo.normalize(geo.vec(0.55, 0.15 if left else -0.15, 0.72))
    z = geo.normalize(z - np.dot(z, x) * x)
    y = np.cross(z, x)
    return np.asarray(anchor, dtype=np.float64), np.stack([x, y, z], axis=1)


ANCHOR_IDX = HAND_KEYPOINT_NAMES.index("middle_1")  # keypoint pinned to the pose anchor


def _hand_keypoints(rig: DriverRig, anchor, rot):
    local = rig.hand_keypoints_local()
    offset = anchor - rot @ local[ANCHOR_IDX]
    return local @ rot.T + offset


def _free_anchors(wheel_center):
    """Free-space anchor points, all comfortably far from the wheel."""
    c = wheel_center
    return {
        "lap_left": c + geo.vec(-0.16, 0.17, -0.34),
        "lap_right": c + geo.vec(-0.16, -0.17, -0.34),
        "phone_cross": c + geo.vec(-0.12, 0.16, -0.27),  # right hand crosses to the left
        "gear": c + geo.vec(-0.10, -0.30, -0.30),
        "seat_back": c + geo.vec(-0.38, -0.24, 0.0),
        "door_rest": c + geo.vec(-0.18, 0.36, -0.22),
    }


def _behavior_script(behavior: str, rng, anchors, grips, cross_reach: bool):
    """Keyframes for (left, right) hands. Times are fractions of the sequence."""
    gl, gr = grips["left"], grips["right"]
    if cross_reach and behavior in ("one_handed_left", "one_handed_right") and rng.uniform() < 0.5:
        gl, gr = gr, gl  # hand reaches across to the far side of the rim

    def jitter_t(t):
        return float(np.clip(t * (1.0 + rng.uniform(-0.1, 0.1)), 0.02, 0.98))

    hold = lambda state: [(0.0, state), (1.0, state)]

    if behavior == "two_handed":
        wob = rng.uniform(0.05, 0.18)
        left = [(0.0, ("grip", gl)), (0.5, ("grip", gl + wob)), (1.0, ("grip", gl - wob / 2))]
        right = [(0.0, ("grip", gr)), (0.5, ("grip", gr - wob)), (1.0, ("grip", gr + wob / 2))]
        return left, right
    if behavior == "one_handed_left":
        return hold(("grip", gl)), hold(("free", anchors["gear"]))
    if behavior == "one_handed_right":
        return hold(("free", anchors["door_rest"])), hold(("grip", gr))
    if behavior == "texting":
        t0, t1 = jitter_t(0.15), jitter_t(0.45)
        right = [(0.0, ("grip", gr)), (t0, ("grip", gr)), (t1, ("free", anchors["phone_cross"])), (1.0, ("free", anchors["phone_cross"]))]
        return hold(("grip", gl)), right
    if behavior == "turning_around":
        t0, t1 = jitter_t(0.12), jitter_t(0.44)
        t2, t3 = jitter_t(0.60), 0.94
        right = [
            (0.0, ("grip", gr)), (t0, ("grip", gr)), (t1, ("free", anchors["seat_back"])),
            (t2, ("free", anchors["seat_back"])), (t3, ("grip", gr)), (1.0, ("grip", gr)),
        ]
        return hold(("grip", gl)), right
    if behavior == "falling_asleep":
        t0, t1 = jitter_t(0.32), jitter_t(0.66)
        left = [(0.0, ("grip", gl)), (t0, ("grip", gl)), (t1, ("free", anchors["lap_left"])), (1.0, ("free", anchors["lap_left"]))]
        right = [(0.0, ("grip", gr)), (t0 + 0.02, ("grip", gr)), (min(t1 + 0.04, 0.99), ("free", anchors["lap_right"])), (1.0, ("free", anchors["lap_right"]))]
        return left, right
    if behavior == "both_hands_off":
        t0, t1 = jitter_t(0.10), jitter_t(0.36)
        left = [(0.0, ("grip", gl)), (t0, ("grip", gl)), (t1, ("free", anchors["lap_left"])), (1.0, ("free", anchors["lap_left"]))]
        right = [(0.0, ("grip", gr)), (t0, ("grip", gr)), (t1, ("free", anchors["lap_right"])), (1.0, ("free", anchors["lap_right"]))]
        return left, right
    raise ValueError(f"unknown behavior {behavior}")


def _pose_at(script, t, wheel, wheel_angle, left: bool):
    """Resolve a hand script to (anchor, rotation) at time fraction t."""
    def resolve(state):
        kind, val = state
        if kind == "grip":
            return _hand_frame_for_grip(wheel, val + wheel_angle, left)
        return _hand_frame_for_free(val, left)

    for (ta, sa), (tb, sb) in zip(script, script[1:]):
        if ta <= t <= tb:
            if sa == sb or tb <= ta:
                return resolve(sa)
            s = _smoothstep((t - ta) / (tb - ta))
            pa, ra = resolve(sa)
            pb, rb = resolve(sb)
            return pa + s * (pb - pa), _slerp(ra, rb, s)
    return resolve(script[-1][1])


def animate_sequence(sc: Scenario, cfg: GenerationConfig) -> list:
    """Animate a scenario into sequence_seconds * fps frame poses."""
    n_frames = cfg.frames_per_sequence
    rng = np.random.default_rng(sc.seed)
    wheel = sc.vehicle.wheel
    anchors = _free_anchors(wheel.center)
    for k in anchors:
        anchors[k] = anchors[k] + rng.uniform(-0.02, 0.02, 3)
    # grip angles near "10 and 2": measured on the ring basis of the wheel
    grips = {
        "left": float(np.deg2rad(150 + rng.uniform(-12, 12))),
        "right": float(np.deg2rad(30 + rng.uniform(-12, 12))),
    }
    script_l, script_r = _behavior_script(sc.behavior, rng, anchors, grips, sc.cross_reach)

    wheel_amp = np.deg2rad(18 if sc.behavior != "turning_around" else 30) * rng.uniform(0.4, 1.0)
    wheel_phase = rng.uniform(0, 2 * np.pi)

    body_rest = forward_kinematics(sc.driver, {})
    l1 = float(np.linalg.norm(sc.driver.rest_offsets["left_elbow"]))
    l2 = float(np.linalg.norm(sc.driver.rest_offsets["left_wrist"]))
    wrist_to_anchor = sc.driver.hand_keypoints_local()[ANCHOR_IDX]

    frames = []
    for i in range(n_frames):
        t = i / max(n_frames - 1, 1)
        time_s = i / cfg.fps
        wheel_angle = wheel_amp * np.sin(2 * np.pi * time_s / 8.0 + wheel_phase)
        body = dict(body_rest)
        pose_hands = {}
        for side, script in (("left", script_l), ("right", script_r)):
            left = side == "left"
            anchor, rot = _pose_at(script, t, wheel, wheel_angle, left)
            keypoints = _hand_keypoints(sc.driver, anchor, rot)
            wrist = keypoints[0]
            shoulder = body[f"{side}_shoulder"]
            hint = geo.vec(-0.3, 0.9 if left else -0.9, -0.6)
            elbow, wrist_ik = _two_bone_ik(shoulder, wrist, l1, l2, hint)
            body[f"{side}_elbow"] = elbow
            body[f"{side}_wrist"] = wrist
            pose_hands[side] = keypoints
        frames.append(FramePose(i, time_s, body, pose_hands["left"], pose_hands["right"], float(wheel_angle)))
    return frames


def hand_capsules(keypoints: np.ndarray, radius: float = 0.008):
    """Capsule hull of a hand, built on adjacent keypoints."""
    caps = []
    for a, b in HAND_CAPSULE_PAIRS:
        pa, pb = keypoints[a], keypoints[b]
        if np.linalg.norm(pb - pa) < 1e-9:
            continue
        caps.append(geo.Capsule(pa, pb, radius))
    return caps


def body_capsules(pose: FramePose, rig: DriverRig):
    """Torso/arm/head solids for rendering and occlusion."""
    b = pose.body
    r = rig.limb_radii
    solids = [
        geo.Capsule(b["pelvis"], b["chest"], r["torso"]),
        geo.Capsule(b["chest"], b["neck"], r["torso"] * 0.8),
        geo.Sphere(b["head"], r["head"]),
        geo.Capsule(b["left_shoulder"], b["left_elbow"], r["upper_arm"]),
        geo.Capsule(b["left_elbow"], b["left_wrist"], r["forearm"]),
        geo.Capsule(b["right_shoulder"], b["right_elbow"], r["upper_arm"]),
        geo.Capsule(b["right_elbow"], b["right_wrist"], r["forearm"]),
        geo.Capsule(b["left_hip"], b["left_hip"] + geo.vec(0.35, 0.02, -0.05), r["thigh"]),
        geo.Capsule(b["right_hip"], b["right_hip"] + geo.vec(0.35, -0.02, -0.05), r["thigh"]),
    ]
    return solids


# --- config files ------------------------------------------------------------

def config_to_text(cfg: GenerationConfig) -> str:
    """Plain-text key/value serialization (one `key = value` per line)."""
    lines = [
        "# wheellab generation config",
        f"num_sequences = {cfg.num_sequences}",
        f"sequence_seconds = {cfg.sequence_seconds!r}",
        f"fps = {cfg.fps!r}",
        f"seed = {cfg.seed}",
        f"domain = {cfg.domain}",
        f"image_size = {cfg.image_size}",
        f"cross_reach = {int(cfg.cross_reach)}",
        f"motion_blur_frames = {cfg.motion_blur_frames}",
        f"vehicle_set = {','.join(cfg.vehicle_set)}",
        f"driver_set = {','.join(cfg.driver_set)}",
    ]
    for k in sorted(cfg.behavior_weights):
        lines.append(f"behavior_weights.{k} = {cfg.behavior_weights[k]!r}")
    for k in sorted(cfg.lighting_weights):
        lines.append(f"lighting_weights.{k} = {cfg.lighting_weights[k]!r}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> GenerationConfig:
    from .errors import ParseError

    kv, bw, lw = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key.startswith("behavior_weights."):
            bw[key.split(".", 1)[1]] = float(val)
        elif key.startswith("lighting_weights."):
            lw[key.split(".", 1)[1]] = float(val)
        else:
            kv[key] = val
    try:
        return GenerationConfig(
            num_sequences=int(kv["num_sequences"]),
            behavior_weights=bw,
            lighting_weights=lw,
            vehicle_set=tuple(kv["vehicle_set"].split(",")),
            driver_set=tuple(kv["driver_set"].split(",")),
            sequence_seconds=float(kv["sequence_seconds"]),
            fps=float(kv["fps"]),
            seed=int(kv["seed"]),
            domain=kv.get("domain", "synthetic"),
            image_size=int(kv.get("image_size", "64")),
            cross_reach=bool(int(kv.get("cross_reach", "0"))),
            motion_blur_frames=int(kv.get("motion_blur_frames", "0")),
        )
    except KeyError as e:
        raise ParseError(f"missing config key {e}") from e


def config_hash(cfg: GenerationConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()[:16]
