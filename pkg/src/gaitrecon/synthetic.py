"""Synthetic scenes with known ground truth.

A walker with constant limb lengths crosses the room diagonal while a rig
of pinhole cameras watches.  Footfalls are generated first (with small
step-to-step variability), feet are clamped still during stance and swing
along a smooth profile in between, and the rest of the body follows by
two-link leg IK and rigid attachments.  Detections are rendered with a
counter-based RNG keyed by (seed, frame, camera, joint) so every entry's
noise is independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import Camera, in_view, look_at, project
from .errors import DegenerateGeometryError
from .gait import WalkwayRecord
from .optim.losses import Skeleton
from .triangulation import Detections2D, Trajectory3D

BODY25_NAMES = [
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist",
    "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle", "REye", "LEye",
    "REar", "LEar", "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
]
J = {name: i for i, name in enumerate(BODY25_NAMES)}
FOOT_KEYPOINTS = {"heel": {"L": J["LHeel"], "R": J["RHeel"]},
                  "toe": {"L": J["LBigToe"], "R": J["RBigToe"]}}

SKELETON_PAIRS = [
    ("LHeel", "LBigToe"), ("RHeel", "RBigToe"),
    ("LAnkle", "LKnee"), ("RAnkle", "RKnee"),
    ("LKnee", "LHip"), ("RKnee", "RHip"),
    ("LShoulder", "LElbow"), ("RShoulder", "RElbow"),
    ("LElbow", "LWrist"), ("RElbow", "RWrist"),
]


def body25_skeleton() -> Skeleton:
    return Skeleton([(J[a], J[b]) for a, b in SKELETON_PAIRS],
                    names=[f"{a}-{b}" for a, b in SKELETON_PAIRS])


# body dimensions (m)
THIGH, SHANK = 0.44, 0.43
HIP_HEIGHT = 0.85
HIP_HALF_WIDTH = 0.09
FOOT_LENGTH = 0.22
HEEL_HEIGHT, TOE_HEIGHT = 0.03, 0.02
ANKLE_OFFSET = np.array([0.06, 0.0, 0.07])  # forward, left, up from the heel
UPPER_ARM, FOREARM = 0.30, 0.27
FOOT_LIFT = 0.08
STANCE_OVERLAP = 0.10  # fraction of a stride both feet are down after each contact


@dataclass(frozen=True)
class SceneSpec:
    n_cameras: int = 10
    room: tuple[float, float] = (7.4, 8.0)
    walk_length: float = 11.0
    walk_offset: float = 0.0  # shift of the walk's midpoint along the diagonal (m)
    fps: float = 30.0
    duration: float = 10.0
    n_joints: int = 25
    noise_px: float = 0.0
    outlier_rate: float = 0.0
    outlier_px: float = 30.0
    dropout_rate: float = 0.0
    seed: int = 0
    step_length: float = 0.65
    step_width: float = 0.10
    variability: float = 0.03
    path: str = "straight"
    curve_radius: float = 15.0
    direction: str = "asc"
    focal_px: float = 1000.0
    image_size: tuple[int, int] = (1920, 1200)
    k1_range: float = 0.03
    walkway_rotation_deg: float | None = None
    walkway_translation: tuple[float, float, float] | None = None
    walkway_scale: float = 1.0
    time_offset: float = 0.0
    trial_id: str = "trial0"
    min_coverage: float = 0.0

    def __post_init__(self):
        for name in ("outlier_rate", "dropout_rate", "min_coverage"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("walk_length", "fps", "duration", "step_length", "step_width", "focal_px",
                     "walkway_scale", "curve_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if min(self.room) <= 0:
            raise ValueError("room extents must be positive")
        if self.noise_px < 0 or self.outlier_px < 0:
            raise ValueError("pixel noise magnitudes must be non-negative")
        if self.n_joints < 25:
            raise ValueError("the synthetic walker needs at least the 25 body keypoints")
        if self.path not in ("straight", "curved"):
            raise ValueError("path must be 'straight' or 'curved'")
        if self.direction not in ("asc", "desc"):
            raise ValueError("direction must be 'asc' or 'desc'")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        for key in ("room", "image_size", "walkway_translation"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def noisy_benchmark(seed: int = 0, **overrides) -> SceneSpec:
    """The default noisy scene: 2 px noise, 5% outliers, 5% dropout."""
    kw = dict(noise_px=2.0, outlier_rate=0.05, dropout_rate=0.05, seed=seed)
    kw.update(overrides)
    return SceneSpec(**kw)


# --- counter-based RNG ------------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x + np.uint64(0x9E3779B97F4A7C15)) & _M64
        x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _M64
        x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _M64
        return x ^ (x >> np.uint64(31))


def counter_uniform(seed: int, stream: int, *index) -> np.ndarray:
    """Uniform [0, 1) values that depend only on (seed, stream, index...)."""
    grids = np.meshgrid(*[np.arange(n, dtype=np.uint64) for n in index], indexing="ij")
    with np.errstate(over="ignore"):
        h = _splitmix64(np.full(grids[0].shape, np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.uint64(stream * 0x632BE59BD9B4E019 & 0xFFFFFFFFFFFFFFFF))
        for g in grids:
            h = _splitmix64(h ^ g)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def counter_normal(seed: int, stream: int, *index) -> np.ndarray:
    u1 = counter_uniform(seed, 2 * stream, *index)
    u2 = counter_uniform(seed, 2 * stream + 1, *index)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


# --- rig ----------------------------------------------------------------------

def walk_endpoints(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Start and end of the walk on the floor, centered on the room diagonal."""
    W, D = spec.room
    diag = np.array([W, D]) / math.hypot(W, D)
    center = np.array([W / 2, D / 2]) + spec.walk_offset * diag
    a = center - 0.5 * spec.walk_length * diag
    b = center + 0.5 * spec.walk_length * diag
    return (a, b) if spec.direction == "asc" else (b, a)


def make_rig(spec: SceneSpec = SceneSpec()) -> list[Camera]:
    """Cameras around the room perimeter, aimed at the walkway diagonal."""
    n = spec.n_cameras
    if n < 2:
        raise ValueError("a rig needs at least 2 cameras")
    W, D = spec.room
    inset = 0.15
    perim = 2 * (W + D)
    rng = np.random.default_rng(spec.seed + 7919)
    heights = (2.4, 1.9, 2.7, 1.6)
    # aim along the full room diagonal so the rig does not depend on the walk
    a, b = np.zeros(2), np.array([W, D])
    cams = []
    for i in range(n):
        s = ((i + 0.5) / n * perim + 0.3 * W) % perim
        if s < W:
            xy = (s, inset)
        elif s < W + D:
            xy = (W - inset, s - W)
        elif s < 2 * W + D:
            xy = (W - (s - W - D), D - inset)
        else:
            xy = (inset, D - (s - 2 * W - D))
        center = np.array([xy[0], xy[1], heights[i % len(heights)]])
        # aim at the point of the walkway nearest the camera, pulled toward the middle
        ab = b - a
        u = np.clip(np.dot(center[:2] - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        u = 0.5 + 0.6 * (u - 0.5)
        target = np.array([*(a + u * ab), 0.9])
        R, t = look_at(center, target)
        k1 = float(rng.uniform(-spec.k1_range, spec.k1_range)) if spec.k1_range > 0 else 0.0
        w, h = spec.image_size
        cams.append(Camera(fx=spec.focal_px, fy=spec.focal_px, cx=w / 2, cy=h / 2, k1=k1,
                           rotation=R, translation=t, id=f"cam{i:02d}", width=w, height=h))
    if spec.min_coverage > 0:
        cov = coverage(cams, spec)
        if cov < spec.min_coverage:
            raise ValueError(f"rig covers {cov:.2f} of the walkway with 3 views, need {spec.min_coverage}")
    return cams


def make_ring_rig(spec: SceneSpec = SceneSpec(), radius: float = 4.5) -> list[Camera]:
    """``spec.n_cameras`` cameras on a circle around the walk midpoint, all aimed at it.

    Unlike the perimeter rig every camera sees the whole (short) walk, which
    is what outlier-rejection experiments need: a joint seen by only two
    cameras cannot out-vote a corrupted one.
    """
    n = spec.n_cameras
    a, b = walk_endpoints(spec)
    mid = 0.5 * (a + b)
    rng = np.random.default_rng(spec.seed + 7919)
    heights = (2.4, 1.9, 2.7, 1.6)
    w, h = spec.image_size
    cams = []
    for i in range(n):
        ang = 2 * math.pi * (i + 0.25) / n
        center = np.array([mid[0] + radius * math.cos(ang), mid[1] + radius * math.sin(ang), heights[i % 4]])
        R, t = look_at(center, np.array([mid[0], mid[1], 0.9]))
        k1 = float(rng.uniform(-spec.k1_range, spec.k1_range)) if spec.k1_range > 0 else 0.0
        cams.append(Camera(fx=spec.focal_px, fy=spec.focal_px, cx=w / 2, cy=h / 2, k1=k1,
                           rotation=R, translation=t, id=f"ring{i:02d}", width=w, height=h))
    return cams


def coverage(cameras: list[Camera], spec: SceneSpec = SceneSpec(), n_samples: int = 111,
             heights=(0.05, 0.9, 1.6), min_views: int = 3) -> float:
    """Fraction of walkway sample points seen by at least ``min_views`` cameras."""
    a, b = walk_endpoints(spec)
    u = np.linspace(0.0, 1.0, n_samples)
    pts = np.array([[*(a + ui * (b - a)), h] for ui in u for h in heights])
    views = sum(in_view(c, pts).astype(int) for c in cameras)
    return float(np.mean(views >= min_views))


# --- gait -----------------------------------------------------------------------

def _path(spec: SceneSpec):
    """Arc-length parametrized walking path: returns (point(s), tangent(s))."""
    a, b = walk_endpoints(spec)
    d = (b - a) / np.linalg.norm(b - a)
    nrm = np.array([-d[1], d[0]])
    if spec.path == "straight":
        def point(s):
            s = np.asarray(s, dtype=float)
            return a + s[..., None] * d

        def tangent(s):
            s = np.asarray(s, dtype=float)
            return np.broadcast_to(d, s.shape + (2,)).copy()
        return point, tangent
    R = spec.curve_radius

    def point(s):
        s = np.asarray(s, dtype=float)
        th = s / R
        return a + R * np.sin(th)[..., None] * d + R * (1 - np.cos(th))[..., None] * nrm

    def tangent(s):
        th = np.asarray(s, dtype=float) / R
        return np.cos(th)[..., None] * d + np.sin(th)[..., None] * nrm
    return point, tangent


@dataclass
class Footfall:
    side: str
    arc: float
    contact: float
    toeoff: float
    heel: np.ndarray  # (3,) world, stance position
    toe: np.ndarray
    heading: float  # foot yaw (rad)


@dataclass
class GaitTruth:
    trajectory: Trajectory3D
    walkway: WalkwayRecord
    skeleton: Skeleton
    footfalls: list[Footfall]
    walkway_transform: dict = field(default_factory=dict)


def walkway_transform(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray, float]:
    """(R 3x3, t 3, scale) with walkway = scale * R @ world + t.

    By default the walkway x axis follows the walk from its start point.
    """
    if spec.walkway_rotation_deg is None:
        a, b = walk_endpoints(SceneSpec(room=spec.room, walk_length=spec.walk_length, walk_offset=spec.walk_offset))
        ang = -math.atan2(b[1] - a[1], b[0] - a[0])
    else:
        ang = math.radians(spec.walkway_rotation_deg)
    c, s = math.cos(ang), math.sin(ang)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    if spec.walkway_translation is None:
        a, _ = walk_endpoints(SceneSpec(room=spec.room, walk_length=spec.walk_length, walk_offset=spec.walk_offset))
        t = -spec.walkway_scale * R @ np.array([a[0], a[1], 0.0])
    else:
        t = np.asarray(spec.walkway_translation, dtype=float)
    return R, t, spec.walkway_scale


def _footfalls(spec: SceneSpec) -> list[Footfall]:
    point, tangent = _path(spec)
    rng = np.random.default_rng([spec.seed, 104729])
    speed = spec.walk_length / spec.duration
    step_time = spec.step_length / speed
    stride = 2 * step_time
    var = spec.variability
    falls = []
    arc = -2 * spec.step_length
    t = arc / speed
    k = 0
    while t < spec.duration + 2 * stride:
        side = "L" if k % 2 == 0 else "R"
        sign = 1.0 if side == "L" else -1.0
        width = 0.5 * spec.step_width * (1 + var * rng.uniform(-1, 1))
        base = point(arc)
        tan = tangent(arc)
        nrm = np.array([-tan[1], tan[0]])
        heel_xy = base + sign * width * nrm
        yaw = math.atan2(tan[1], tan[0]) + sign * 0.08 * (1 + var * rng.uniform(-1, 1))
        fwd = np.array([math.cos(yaw), math.sin(yaw)])
        falls.append(Footfall(side, float(arc), float(t), math.nan,
                              np.array([*heel_xy, HEEL_HEIGHT]),
                              np.array([*(heel_xy + FOOT_LENGTH * fwd), TOE_HEIGHT]), yaw))
        arc += spec.step_length * (1 + var * rng.uniform(-1, 1))
        t += step_time * (1 + var * rng.uniform(-1, 1))
        k += 1
    for i in range(len(falls) - 1):
        falls[i].toeoff = falls[i + 1].contact + STANCE_OVERLAP * stride
    falls[-1].toeoff = falls[-1].contact + (0.5 + STANCE_OVERLAP) * stride
    return falls


def _foot_state(falls: list[Footfall], side: str, times: np.ndarray):
    """Heel xyz, foot yaw and arc parameter of one foot at each time."""
    own = [f for f in falls if f.side == side]
    heel = np.zeros((len(times), 3))
    yaw = np.zeros(len(times))
    arc = np.zeros(len(times))
    for n, t in enumerate(times):
        k = np.searchsorted([f.contact for f in own], t, side="right") - 1
        if k < 0:
            f = own[0]
            heel[n], yaw[n], arc[n] = f.heel, f.heading, f.arc
            continue
        f = own[k]
        if t <= f.toeoff or k + 1 >= len(own):
            heel[n], yaw[n], arc[n] = f.heel, f.heading, f.arc
            continue
        g = own[k + 1]
        tau = (t - f.toeoff) / (g.contact - f.toeoff)
        rho = tau - math.sin(2 * math.pi * tau) / (2 * math.pi)
        heel[n, :2] = f.heel[:2] + rho * (g.heel[:2] - f.heel[:2])
        heel[n, 2] = HEEL_HEIGHT + FOOT_LIFT * 0.5 * (1 - math.cos(2 * math.pi * tau))
        yaw[n] = f.heading + rho * (g.heading - f.heading)
        arc[n] = f.arc + rho * (g.arc - f.arc)
    return heel, yaw, arc


def _two_link(hip, ankle, bend_dir, l1, l2):
    d_vec = ankle - hip
    d = np.linalg.norm(d_vec, axis=-1, keepdims=True)
    if np.any(d >= l1 + l2) or np.any(d <= abs(l1 - l2)):
        raise DegenerateGeometryError("leg cannot reach the foot; adjust step length or hip height")
    along = d_vec / d
    a = (l1**2 - l2**2 + d**2) / (2 * d)
    h = np.sqrt(l1**2 - a**2)
    perp = bend_dir - np.sum(bend_dir * along, axis=-1, keepdims=True) * along
    perp /= np.linalg.norm(perp, axis=-1, keepdims=True)
    return hip + a * along + h * perp


def _frame_vectors(yaw):
    f = np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=-1)
    l = np.stack([-np.sin(yaw), np.cos(yaw), np.zeros_like(yaw)], axis=-1)
    u = np.broadcast_to(np.array([0.0, 0.0, 1.0]), f.shape)
    return f, l, u


def make_gait_trajectory(spec: SceneSpec = SceneSpec()) -> GaitTruth:
    """Ground-truth walker in world coordinates plus the walkway record it produces."""
    _, tangent = _path(spec)
    falls = _footfalls(spec)
    T = spec.n_frames
    times = np.arange(T) / spec.fps
    X = np.zeros((T, spec.n_joints, 3))

    feet = {}
    for side in ("L", "R"):
        heel, yaw, arc = _foot_state(falls, side, times)
        f, l, u = _frame_vectors(yaw)
        sign = 1.0 if side == "L" else -1.0
        feet[side] = dict(heel=heel, arc=arc,
                          toe=heel + FOOT_LENGTH * f + (TOE_HEIGHT - HEEL_HEIGHT) * u,
                          small_toe=heel + 0.8 * FOOT_LENGTH * f + sign * 0.04 * l + (TOE_HEIGHT - HEEL_HEIGHT) * u,
                          ankle=heel + ANKLE_OFFSET[0] * f + ANKLE_OFFSET[2] * u)

    pelvis_arc = 0.5 * (feet["L"]["arc"] + feet["R"]["arc"])
    tan = tangent(pelvis_arc)
    body_yaw = np.arctan2(tan[:, 1], tan[:, 0])
    f, l, u = _frame_vectors(body_yaw)
    stride_time = 2 * spec.step_length / (spec.walk_length / spec.duration)
    phase = 2 * np.pi * times / stride_time
    pelvis = 0.5 * (feet["L"]["ankle"] + feet["R"]["ankle"])
    pelvis[:, 2] = HIP_HEIGHT + 0.015 * np.cos(2 * phase)
    lateral_sway = 0.02 * np.sin(phase)
    pelvis = pelvis + lateral_sway[:, None] * l

    X[:, J["MidHip"]] = pelvis
    for side, s in (("L", 1.0), ("R", -1.0)):
        p = side
        hip = pelvis + s * HIP_HALF_WIDTH * l
        knee = _two_link(hip, feet[side]["ankle"], f, THIGH, SHANK)
        X[:, J[f"{p}Hip"]] = hip
        X[:, J[f"{p}Knee"]] = knee
        X[:, J[f"{p}Ankle"]] = feet[side]["ankle"]
        X[:, J[f"{p}Heel"]] = feet[side]["heel"]
        X[:, J[f"{p}BigToe"]] = feet[side]["toe"]
        X[:, J[f"{p}SmallToe"]] = feet[side]["small_toe"]

    neck = pelvis + 0.50 * u
    X[:, J["Neck"]] = neck
    X[:, J["Nose"]] = neck + 0.20 * u + 0.10 * f
    for p, s in (("L", 1.0), ("R", -1.0)):
        X[:, J[f"{p}Eye"]] = neck + 0.24 * u + 0.08 * f + s * 0.035 * l
        X[:, J[f"{p}Ear"]] = neck + 0.20 * u - 0.01 * f + s * 0.075 * l
        shoulder = neck - 0.02 * u + s * 0.18 * l
        # arms swing opposite to the same-side leg
        swing = -s * 0.35 * np.sin(phase)[:, None]
        d1 = -np.cos(swing) * u + np.sin(swing) * f
        d2 = -np.cos(swing + 0.3) * u + np.sin(swing + 0.3) * f
        elbow = shoulder + UPPER_ARM * d1
        X[:, J[f"{p}Shoulder"]] = shoulder
        X[:, J[f"{p}Elbow"]] = elbow
        X[:, J[f"{p}Wrist"]] = elbow + FOREARM * d2

    if spec.n_joints > 25:
        offs = np.random.default_rng([spec.seed, 31337]).uniform(-0.1, 0.1, (spec.n_joints - 25, 3))
        offs[:, 2] += 0.15
        X[:, 25:] = neck[:, None] + offs[None, :, 0:1] * f[:, None] + offs[None, :, 1:2] * l[:, None] + offs[None, :, 2:3] * u[:, None]

    truth = Trajectory3D(X, np.ones((T, spec.n_joints), bool))
    R, t, scale = walkway_transform(spec)
    record = _walkway_record(spec, falls, R, t, scale)
    return GaitTruth(truth, record, body25_skeleton(), falls,
                     {"rotation": R, "translation": t, "scale": scale, "offset": spec.time_offset})


def _walkway_record(spec, falls, R, t, scale, margin: float = 0.2) -> WalkwayRecord:
    keep = [f for f in falls if f.contact >= margin and f.toeoff <= spec.duration - margin]
    to_w = lambda p: (scale * (R @ p) + t)[:2] * 1000.0  # noqa: E731
    heel = np.array([to_w(f.heel) for f in keep]).reshape(-1, 2)
    toe = np.array([to_w(f.toe) for f in keep]).reshape(-1, 2)
    if len(keep) >= 2:
        fwd = heel[-1, 0] - heel[0, 0]
        direction = "asc" if fwd >= 0 else "desc"
    else:
        direction = spec.direction
    return WalkwayRecord(
        trial_id=[spec.trial_id] * len(keep),
        side=[f.side for f in keep],
        contact_time=np.array([f.contact - spec.time_offset for f in keep]),
        toeoff_time=np.array([f.toeoff - spec.time_offset for f in keep]),
        heel_mm=heel, toe_mm=toe, direction=[direction] * len(keep),
    )


# --- detections -----------------------------------------------------------------

def render_detections(truth: Trajectory3D, cameras: list[Camera], spec: SceneSpec = SceneSpec()) -> Detections2D:
    """Project the ground truth and corrupt it per the spec's noise model."""
    X = truth.positions
    T, Jn, _ = X.shape
    C = len(cameras)
    idx = (T, C, Jn)
    uv = np.full((T, C, Jn, 2), np.nan)
    vis = np.zeros((T, C, Jn), dtype=bool)
    for c, cam in enumerate(cameras):
        v = in_view(cam, X) & truth.valid
        vis[:, c] = v
        uv[:, c][v] = project(cam, X[v])
    seed = spec.seed
    noise = np.stack([counter_normal(seed, 0, *idx), counter_normal(seed, 1, *idx)], axis=-1)
    uv = uv + spec.noise_px * noise
    u_out = counter_uniform(seed, 10, *idx)
    u_drop = counter_uniform(seed, 11, *idx)
    u_conf = counter_uniform(seed, 12, *idx)
    ang = 2 * np.pi * counter_uniform(seed, 13, *idx)
    outlier = u_out < spec.outlier_rate
    dropout = (u_drop < spec.dropout_rate) & ~outlier
    uv = uv + np.where(outlier[..., None], spec.outlier_px * np.stack([np.cos(ang), np.sin(ang)], -1), 0.0)
    conf = 0.7 + 0.3 * u_conf
    conf = np.where(outlier, 0.5 + 0.4 * u_conf, conf)
    conf = np.where(dropout, 0.49 * u_conf, conf)
    conf = np.where(vis, conf, 0.0)
    uv = np.where(vis[..., None], uv, np.nan)
    return Detections2D(uv, conf, [c.id for c in cameras], spec.fps)


def corrupt_camera(detections: Detections2D, camera: int, offset_px=(50.0, 0.0),
                   frame_fraction: float = 0.2, seed: int = 0) -> tuple[Detections2D, np.ndarray]:
    """Shift every detection of one camera by ``offset_px`` on a random subset of frames."""
    T = detections.shape[0]
    frames = counter_uniform(seed, 99, T) < frame_fraction
    uv = detections.uv.copy()
    uv[frames, camera] += np.asarray(offset_px, dtype=float)
    return Detections2D(uv, detections.confidence.copy(), list(detections.camera_ids), detections.fps), frames


@dataclass
class Scene:
    spec: SceneSpec
    cameras: list[Camera]
    truth: GaitTruth
    detections: Detections2D


def make_scene(spec: SceneSpec = SceneSpec()) -> Scene:
    cams = make_rig(spec)
    truth = make_gait_trajectory(spec)
    return Scene(spec, cams, truth, render_detections(truth.trajectory, cams, spec))


# --- oracles -----------------------------------------------------------------------

def oracle_dlt(observations) -> np.ndarray:
    """Weighted DLT solved through the normal equations A^T A and eigh.

    Same problem as :func:`gaitrecon.triangulation.dlt_triangulate`, solved
    by an independent route for cross-checking.
    """
    from .camera import projection_matrix

    M = np.zeros((4, 4))
    n = 0
    for cam, uv, w in observations:
        if w <= 0:
            continue
        P = projection_matrix(cam) if isinstance(cam, Camera) else np.asarray(cam, dtype=float)
        u, v = uv
        for row in (u * P[2] - P[0], v * P[2] - P[1]):
            r = w * row
            M += np.outer(r, r)
        n += 1
    if n < 2:
        raise DegenerateGeometryError("oracle needs at least 2 weighted views")
    vals, vecs = np.linalg.eigh(M)
    if vals[1] <= 1e-14 * vals[-1]:
        raise DegenerateGeometryError("normal equations are singular")
    X = vecs[:, 0]
    if abs(X[3]) < 1e-14:
        raise DegenerateGeometryError("point at infinity")
    return X[:3] / X[3]


def oracle_step_metrics(sides, heels) -> dict[str, list[float]]:
    """Step metrics computed in exact rational arithmetic with sympy geometry."""
    import sympy as sp

    pts = [sp.Point2D(sp.Rational(float(x)), sp.Rational(float(y))) if np.isfinite([x, y]).all() else None
           for x, y in np.asarray(heels, dtype=float)]
    n = len(sides)
    out = {"step_length": [math.nan] * n, "stride_length": [math.nan] * n, "step_width": [math.nan] * n}
    for k in range(n):
        if k >= 2 and sides[k - 2] == sides[k] != sides[k - 1] and pts[k] is not None and pts[k - 2] is not None:
            out["stride_length"][k] = float(sp.N(pts[k].distance(pts[k - 2]), 30))
        if 1 <= k < n - 1 and sides[k - 1] != sides[k] and sides[k + 1] != sides[k]:
            a, b, p = pts[k - 1], pts[k + 1], pts[k]
            if None not in (a, b, p) and a != b:
                line = sp.Line(a, b)
                foot = line.projection(p)
                out["step_width"][k] = float(sp.N(p.distance(foot), 30))
                along = (foot - a).dot(b - a)
                out["step_length"][k] = float(sp.N(sp.sign(along) * foot.distance(a), 30))
    return out
