"""Weighted DLT triangulation and robust camera weighting.

The robust scheme triangulates every pair of usable cameras, takes the
geometric median of the resulting cluster, scores each camera by how far
its pair points fall from that median, and finishes with a DLT weighted by
those scores.  All heavy lifting is batched over (frame, joint) entries.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, projection_matrix, undistort
from .errors import DegenerateGeometryError, EmptyInputError, InsufficientViewsError

logger = logging.getLogger(__name__)

GEOMEDIAN_MAX_ITER = 100
GEOMEDIAN_TOL = 1e-9
GEOMEDIAN_EPS = 1e-10
_CHUNK = 2048


@dataclass
class Detections2D:
    """2D keypoints indexed (frame, camera, joint).

    ``uv`` holds distorted pixel coordinates and is NaN where a detection is
    missing; ``confidence`` is 0 there.
    """

    uv: np.ndarray  # (T, C, J, 2)
    confidence: np.ndarray  # (T, C, J)
    camera_ids: list[str]
    fps: float = 30.0

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=float)
        self.confidence = np.asarray(self.confidence, dtype=float)
        T, C, J = self.confidence.shape
        if self.uv.shape != (T, C, J, 2):
            raise ValueError(f"uv shape {self.uv.shape} does not match confidence {self.confidence.shape}")
        if len(self.camera_ids) != C:
            raise ValueError("camera_ids length does not match camera axis")
        missing = ~self.present
        if np.any((self.confidence[~missing] < 0) | (self.confidence[~missing] > 1)):
            raise ValueError("confidence must lie in [0, 1]")
        self.confidence = np.where(missing, 0.0, self.confidence)

    @property
    def present(self) -> np.ndarray:
        return np.all(np.isfinite(self.uv), axis=-1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.confidence.shape

    def aligned_to(self, cameras: list[Camera]) -> "Detections2D":
        """Reorder the camera axis to follow ``cameras``."""
        order = [self.camera_ids.index(c.id) for c in cameras]
        return Detections2D(self.uv[:, order], self.confidence[:, order],
                            [self.camera_ids[i] for i in order], self.fps)


@dataclass(frozen=True)
class TriangulationConfig:
    sigma: float = 0.150
    gamma: float = 0.5
    min_cameras: int = 2
    squared_kernel: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.min_cameras < 2:
            raise ValueError("min_cameras must be at least 2")


@dataclass
class Trajectory3D:
    positions: np.ndarray  # (T, J, 3), NaN where invalid
    valid: np.ndarray = None  # (T, J)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.valid is None:
            self.valid = np.all(np.isfinite(self.positions), axis=-1)
        self.valid = np.asarray(self.valid, dtype=bool)
        self.positions = np.where(self.valid[..., None], self.positions, np.nan)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_joints(self) -> int:
        return self.positions.shape[1]


@dataclass
class WeightedTrajectory3D(Trajectory3D):
    weights: np.ndarray = field(default=None)  # (T, C, J) in [0, 1]


def _pixel_rows(P: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """DLT rows (u p3 - p1, v p3 - p2) for broadcastable P (..., 3, 4) and uv (..., 2)."""
    r1 = uv[..., 0:1] * P[..., 2, :] - P[..., 0, :]
    r2 = uv[..., 1:2] * P[..., 2, :] - P[..., 1, :]
    return np.stack([r1, r2], axis=-2)


def _solve_homogeneous(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched argmin |Ax| over unit x, dehomogenized. Returns (points, degenerate flags)."""
    _, s, vh = np.linalg.svd(A, full_matrices=False)
    X = vh[..., -1, :]
    w = X[..., 3]
    degenerate = (np.abs(w) < 1e-12 * np.linalg.norm(X, axis=-1)) | (s[..., -2] <= 1e-12 * s[..., 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        pts = X[..., :3] / w[..., None]
    return pts, degenerate


def dlt_triangulate(observations) -> np.ndarray:
    """Triangulate one point from ``(camera, undistorted_pixel, weight)`` triples.

    ``camera`` may be a :class:`Camera` or a 3x4 projection matrix.  Rows of
    cameras with zero weight are dropped.
    """
    rows = []
    for cam, uv, w in observations:
        if w <= 0:
            continue
        P = projection_matrix(cam) if isinstance(cam, Camera) else np.asarray(cam, dtype=float)
        rows.append(w * _pixel_rows(P, np.asarray(uv, dtype=float)))
    if len(rows) < 2:
        raise InsufficientViewsError(f"need at least 2 weighted views, got {len(rows)}")
    A = np.concatenate(rows, axis=0)
    pt, degenerate = _solve_homogeneous(A)
    if degenerate:
        raise DegenerateGeometryError("DLT system is rank deficient")
    return pt


def pairwise_triangulate(observations) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Unweighted two-view DLT for every pair of the given observations.

    ``observations`` is a sequence of ``(camera, undistorted_pixel)``; the
    caller is expected to have removed views below the confidence gate.
    Returns the cluster (n_pairs, 3) and the index pairs that produced it.
    """
    observations = list(observations)
    if len(observations) < 2:
        raise InsufficientViewsError(f"need at least 2 usable cameras, got {len(observations)}")
    Ps = np.stack([projection_matrix(c) if isinstance(c, Camera) else np.asarray(c, float)
                   for c, _ in observations])
    uv = np.stack([np.asarray(p, dtype=float) for _, p in observations])
    pairs = list(itertools.combinations(range(len(observations)), 2))
    rows = _pixel_rows(Ps, uv)  # (C, 2, 4)
    A = np.stack([np.concatenate([rows[a], rows[b]]) for a, b in pairs])
    pts, degenerate = _solve_homogeneous(A)
    if np.any(degenerate):
        raise DegenerateGeometryError("degenerate camera pair")
    return pts, pairs


def _geometric_median_batch(points: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Weiszfeld iteration over a batch of clusters.

    points (N, K, 3), mask (N, K).  Starts from the coordinate-wise median.
    When the iterate sits on data points (within GEOMEDIAN_EPS) the
    Vardi-Zhang step is used: stay if the pull of the other points is
    weaker than the coincident multiplicity, otherwise move off.  The same
    test on the nearest data point lets the iterate land exactly on a
    vertex optimum instead of creeping toward it.  Clusters
    are frozen once an update moves less than the tolerance, so a cluster's
    result does not depend on what else is in the batch.
    """
    pts = np.where(mask[..., None], points, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        x = np.nanmedian(np.where(mask[..., None], points, np.nan), axis=1)
    active = np.all(np.isfinite(x), axis=1)
    x = np.where(active[:, None], x, np.nan)
    for _ in range(GEOMEDIAN_MAX_ITER):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        m = mask[idx]
        diff = pts[idx] - x[idx, None, :]
        d = np.linalg.norm(diff, axis=-1)
        on = m & (d < GEOMEDIAN_EPS)
        off = m & ~on
        inv = np.where(off, 1.0 / np.where(off, d, 1.0), 0.0)
        s = inv.sum(axis=1)
        T = np.einsum("nk,nkd->nd", inv, pts[idx]) / np.where(s > 0, s, 1.0)[:, None]
        eta = on.sum(axis=1).astype(float)
        r = np.linalg.norm(np.einsum("nk,nkd->nd", inv, diff), axis=1)
        g = np.where(eta > 0, np.minimum(1.0, eta / np.where(r > 0, r, 1.0)), 0.0)
        g = np.where((eta > 0) & (r <= eta), 1.0, g)
        g = np.where(s > 0, g, 1.0)  # every point coincides with x
        x_new = (1.0 - g)[:, None] * T + g[:, None] * x[idx]
        # Weiszfeld creeps toward an optimum that sits on a data point; test
        # the nearest one directly and jump there if it is optimal
        dn = np.where(m, np.linalg.norm(pts[idx] - x_new[:, None, :], axis=-1), np.inf)
        q = pts[idx, np.argmin(dn, axis=1)]
        dq = np.linalg.norm(pts[idx] - q[:, None, :], axis=-1)
        at_q = m & (dq < GEOMEDIAN_EPS)
        away = m & ~at_q
        uq = np.where(away[..., None], (pts[idx] - q[:, None, :]) / np.where(away, dq, 1.0)[..., None], 0.0)
        opt_q = np.linalg.norm(uq.sum(axis=1), axis=1) < at_q.sum(axis=1)
        x_new = np.where(opt_q[:, None], q, x_new)
        shift = np.linalg.norm(x_new - x[idx], axis=1)
        x[idx] = x_new
        active[idx[shift < GEOMEDIAN_TOL]] = False
    return x


def geometric_median(points) -> np.ndarray:
    """Point minimizing the summed Euclidean distance to ``points`` (K, 3)."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise EmptyInputError("geometric median of an empty set")
    points = points.reshape(-1, points.shape[-1])
    return _geometric_median_batch(points[None], np.ones((1, len(points)), bool))[0]


def _kernel(d: np.ndarray, sigma: float, squared: bool) -> np.ndarray:
    if squared:
        return np.exp(-((d / sigma) ** 2))
    return np.exp(-d / sigma**2)


def robust_weights(cluster, pairs, sigma: float, n_cameras: int | None = None,
                   squared_kernel: bool = False, median=None) -> np.ndarray:
    """Per-camera weight: median over the camera's pairs of exp(-d / sigma^2).

    ``d`` is the distance of each pair point to the cluster's geometric median.
    Cameras that appear in no pair get weight 0.
    """
    cluster = np.asarray(cluster, dtype=float)
    if n_cameras is None:
        n_cameras = max(max(p) for p in pairs) + 1
    x_med = geometric_median(cluster) if median is None else np.asarray(median)
    k = _kernel(np.linalg.norm(cluster - x_med, axis=1), sigma, squared_kernel)
    w = np.zeros(n_cameras)
    for c in range(n_cameras):
        vals = [k[i] for i, p in enumerate(pairs) if c in p]
        if vals:
            w[c] = np.median(vals)
    return w


def _pair_index(C: int):
    pairs = np.array(list(itertools.combinations(range(C), 2)), dtype=int).reshape(-1, 2)
    return pairs


def _robust_batch(P: np.ndarray, uv: np.ndarray, usable: np.ndarray, config: TriangulationConfig):
    """Robust triangulation for a batch. uv (N, C, 2) undistorted, usable (N, C)."""
    N, C = usable.shape
    pairs = _pair_index(C)
    n_use = usable.sum(axis=1)
    ok = n_use >= max(2, config.min_cameras)
    pts_out = np.full((N, 3), np.nan)
    w_out = np.zeros((N, C))
    if not np.any(ok) or len(pairs) == 0:
        return pts_out, w_out, np.zeros(N, dtype=bool)

    uv0 = np.where(usable[..., None], uv, 0.0)
    rows = _pixel_rows(P[None], uv0)  # (N, C, 2, 4)
    A = np.concatenate([rows[:, pairs[:, 0]], rows[:, pairs[:, 1]]], axis=2)  # (N, K, 4, 4)
    pair_pts, degenerate = _solve_homogeneous(A)
    pair_ok = usable[:, pairs[:, 0]] & usable[:, pairs[:, 1]] & ~degenerate & ok[:, None]
    pair_ok &= np.all(np.isfinite(pair_pts), axis=-1)

    median = _geometric_median_batch(pair_pts, pair_ok)
    d = np.linalg.norm(pair_pts - median[:, None, :], axis=-1)
    k = np.where(pair_ok, _kernel(np.nan_to_num(d, nan=0.0), config.sigma, config.squared_kernel), np.nan)

    # member[c, p] is True when camera c takes part in pair p
    member = np.zeros((C, len(pairs)), dtype=bool)
    member[pairs[:, 0], np.arange(len(pairs))] = True
    member[pairs[:, 1], np.arange(len(pairs))] = True
    kc = np.where(member[None], k[:, None, :], np.nan)  # (N, C, K)
    has = np.any(np.isfinite(kc), axis=-1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        w = np.nanmedian(kc, axis=-1)
    w = np.where(has & usable, w, 0.0)

    wrows = rows * w[..., None, None]
    pts, degenerate = _solve_homogeneous(wrows.reshape(N, 2 * C, 4))
    ok = ok & ((w > 0).sum(axis=1) >= 2) & ~degenerate & np.all(np.isfinite(pts), axis=1)
    pts_out[ok] = pts[ok]
    w_out[ok] = w[ok]
    return pts_out, w_out, ok


def _plain_batch(P: np.ndarray, uv: np.ndarray, usable: np.ndarray, config: TriangulationConfig):
    N, C = usable.shape
    w = usable.astype(float)
    uv0 = np.where(usable[..., None], uv, 0.0)
    rows = _pixel_rows(P[None], uv0) * w[..., None, None]
    ok = usable.sum(axis=1) >= max(2, config.min_cameras)
    pts, degenerate = _solve_homogeneous(rows.reshape(N, 2 * C, 4))
    ok &= ~degenerate & np.all(np.isfinite(pts), axis=1)
    pts_out = np.where(ok[:, None], pts, np.nan)
    return pts_out, np.where(ok[:, None], w, 0.0), ok


def robust_triangulate_frame(uv, confidence, cameras, config: TriangulationConfig = TriangulationConfig()):
    """Robustly triangulate one keypoint seen by ``cameras``.

    ``uv`` (C, 2) are undistorted pixels (NaN for missing views) and
    ``confidence`` (C,) the detector scores.  Returns ``(point, weights)``;
    ``point`` is None when fewer than ``config.min_cameras`` views pass the
    confidence gate.
    """
    uv = np.asarray(uv, dtype=float)[None]
    conf = np.asarray(confidence, dtype=float)[None]
    P = np.stack([projection_matrix(c) for c in cameras])
    usable = np.all(np.isfinite(uv), axis=-1) & (conf >= config.gamma)
    pts, w, ok = _robust_batch(P, uv, usable, config)
    return (pts[0] if ok[0] else None), w[0]


def undistort_detections(detections: Detections2D, cameras: list[Camera]) -> np.ndarray:
    """Undistorted copy of ``detections.uv`` (T, C, J, 2); missing stays NaN."""
    out = np.full_like(detections.uv, np.nan)
    present = detections.present
    for c, cam in enumerate(cameras):
        sel = present[:, c]
        out[:, c][sel] = undistort(cam, detections.uv[:, c][sel])
    return out


def triangulate_trajectory(detections: Detections2D, cameras: list[Camera],
                           config: TriangulationConfig = TriangulationConfig(),
                           method: str = "robust") -> WeightedTrajectory3D:
    """Triangulate every (frame, joint) independently.

    ``method`` is ``"robust"`` (pairwise + geometric median weighting) or
    ``"plain"`` (equal-weight DLT over the cameras above the gate).
    """
    if method not in ("robust", "plain"):
        raise ValueError(f"unknown triangulation method {method!r}")
    detections = detections.aligned_to(cameras)
    T, C, J = detections.shape
    uv = undistort_detections(detections, cameras)
    usable = detections.present & (detections.confidence >= config.gamma)
    P = np.stack([projection_matrix(c) for c in cameras])

    # (T, C, J) -> (T*J, C)
    uv_n = uv.transpose(0, 2, 1, 3).reshape(T * J, C, 2)
    use_n = usable.transpose(0, 2, 1).reshape(T * J, C)
    solve = _robust_batch if method == "robust" else _plain_batch
    pts = np.full((T * J, 3), np.nan)
    w = np.zeros((T * J, C))
    ok = np.zeros(T * J, dtype=bool)
    for s in range(0, T * J, _CHUNK):
        sl = slice(s, s + _CHUNK)
        pts[sl], w[sl], ok[sl] = solve(P, uv_n[sl], use_n[sl], config)
    n_bad = int((~ok).sum())
    if n_bad:
        logger.debug("%d of %d entries could not be triangulated", n_bad, T * J)
    return WeightedTrajectory3D(
        positions=pts.reshape(T, J, 3),
        valid=ok.reshape(T, J),
        weights=w.reshape(T, J, C).transpose(0, 2, 1),
    )
