"""Walkway alignment and spatiotemporal gait parameters.

The reconstruction frame is assumed to have +z vertical.  Walkway
coordinates are 2D (x along the mat, y to the left of +x); the walkway file
stores millimeters, everything in here works in meters unless a name says
otherwise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, NoCandidatesError
from .evaluation import sigma_iqr

logger = logging.getLogger(__name__)

SIDES = ("L", "R")
SCALE_BOUNDS = (0.95, 1.05)


@dataclass
class WalkwayRecord:
    """Footfalls from a pressure walkway, one row per footfall."""

    trial_id: list[str]
    side: list[str]
    contact_time: np.ndarray  # s
    toeoff_time: np.ndarray  # s
    heel_mm: np.ndarray  # (N, 2)
    toe_mm: np.ndarray  # (N, 2)
    direction: list[str]  # per footfall, "asc" | "desc"

    def __post_init__(self):
        self.trial_id = [str(t) for t in self.trial_id]
        self.side = [str(s) for s in self.side]
        self.contact_time = np.asarray(self.contact_time, dtype=float)
        self.toeoff_time = np.asarray(self.toeoff_time, dtype=float)
        self.heel_mm = np.asarray(self.heel_mm, dtype=float).reshape(-1, 2)
        self.toe_mm = np.asarray(self.toe_mm, dtype=float).reshape(-1, 2)
        self.direction = [str(d) for d in self.direction]
        n = len(self.side)
        for name in ("trial_id", "direction"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from footfall count")
        if not (len(self.contact_time) == len(self.toeoff_time) == len(self.heel_mm) == len(self.toe_mm) == n):
            raise ValueError("walkway columns have inconsistent lengths")
        if any(s not in SIDES for s in self.side):
            raise ValueError("side must be 'L' or 'R'")
        if any(d not in ("asc", "desc") for d in self.direction):
            raise ValueError("direction must be 'asc' or 'desc'")
        if np.any(self.toeoff_time <= self.contact_time):
            raise ValueError("toe-off must follow contact for every footfall")
        for trial in set(self.trial_id):
            for s in SIDES:
                idx = [i for i in range(n) if self.trial_id[i] == trial and self.side[i] == s]
                if np.any(np.diff(self.contact_time[idx]) <= 0):
                    raise ValueError(f"footfalls of trial {trial} side {s} are not time ordered")

    def __len__(self):
        return len(self.side)

    @property
    def trials(self) -> list[str]:
        return list(dict.fromkeys(self.trial_id))

    def trial_indices(self, trial: str) -> np.ndarray:
        idx = np.array([i for i, t in enumerate(self.trial_id) if t == trial], dtype=int)
        return idx[np.argsort(self.contact_time[idx], kind="stable")]


@dataclass
class FootTracks:
    """Heel and toe keypoint trajectories (T, 3) per side, NaN where invalid."""

    heel: dict[str, np.ndarray]
    toe: dict[str, np.ndarray]
    fps: float

    @classmethod
    def from_trajectory(cls, trajectory, fps: float, heel=None, toe=None) -> "FootTracks":
        from .synthetic import FOOT_KEYPOINTS

        heel = heel or FOOT_KEYPOINTS["heel"]
        toe = toe or FOOT_KEYPOINTS["toe"]
        X = trajectory.positions
        return cls({s: X[:, heel[s]] for s in SIDES}, {s: X[:, toe[s]] for s in SIDES}, fps)

    @property
    def n_frames(self) -> int:
        return len(self.heel["L"])


@dataclass
class AlignmentResult:
    """Similarity transform reconstruction -> walkway: p_w = scale * R p + t.

    Only the horizontal part is fitted: ``rotation`` is a rotation about +z
    and ``translation[2]`` is 0.
    """

    rotation: np.ndarray
    translation: np.ndarray
    scale: float
    offsets: list[float]
    rms: float
    history: list[float] = field(default_factory=list)
    converged: bool = True
    warning: str | None = None

    def apply(self, points) -> np.ndarray:
        """Map reconstruction points (..., 3) to walkway (x, y) meters."""
        p = np.asarray(points, dtype=float)
        return self.scale * p[..., :2] @ self.rotation[:2, :2].T + self.translation[:2]

    @property
    def angle_deg(self) -> float:
        return math.degrees(math.atan2(self.rotation[1, 0], self.rotation[0, 0]))

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
                "scale": self.scale, "offsets": list(self.offsets), "rms": self.rms,
                "history": list(self.history), "converged": self.converged, "warning": self.warning}


def _stance_frames(contact, toeoff, offset, fps, n_frames):
    lo = max(0, math.ceil((contact + offset) * fps - 1e-9))
    hi = min(n_frames - 1, math.floor((toeoff + offset) * fps + 1e-9))
    return lo, hi


def stance_position(track: np.ndarray, contact: float, toeoff: float, offset: float, fps: float):
    """Median of the valid positions inside the shifted stance window, or None."""
    lo, hi = _stance_frames(contact, toeoff, offset, fps, len(track))
    if hi < lo:
        return None
    window = track[lo:hi + 1]
    window = window[np.all(np.isfinite(window), axis=1)]
    if len(window) == 0:
        return None
    return np.median(window, axis=0)


def stance_speed_objective(tracks: FootTracks, record: WalkwayRecord, offset: float,
                           min_fraction: float = 0.5, return_count: bool = False):
    """Mean heel speed (m/s) over the stance windows shifted by ``offset``.

    NaN unless at least ``min_fraction`` of the footfalls (and at least 2)
    have two or more consecutive valid frames in their window.  With
    ``return_count`` also returns how many footfalls contributed.
    """
    speeds = []
    n_used = 0
    for i in range(len(record)):
        track = tracks.heel[record.side[i]]
        lo, hi = _stance_frames(record.contact_time[i], record.toeoff_time[i], offset, tracks.fps, len(track))
        if hi - lo < 1:
            continue
        seg = track[lo:hi + 1]
        v = np.linalg.norm(np.diff(seg, axis=0), axis=1) * tracks.fps
        v = v[np.isfinite(v)]
        if len(v) == 0:
            continue
        n_used += 1
        speeds.append(v)
    if n_used < max(2, math.ceil(min_fraction * len(record))):
        value = math.nan
    else:
        value = float(np.mean(np.concatenate(speeds)))
    return (value, n_used) if return_count else value


def offset_grid(search_range=(-10.0, 10.0), fps: float = 30.0) -> np.ndarray:
    lo, hi = search_range
    k0, k1 = math.ceil(lo * fps - 1e-9), math.floor(hi * fps + 1e-9)
    return np.arange(k0, k1 + 1) / fps


def candidate_offsets(tracks: FootTracks, record: WalkwayRecord, search_range=(-10.0, 10.0),
                      step: float | None = None, return_objective: bool = False):
    """Local minima of the stance-speed objective over a grid of offsets.

    Offsets are such that trajectory time = walkway time + offset.  The grid
    step defaults to one frame.  Minima come back sorted by the number of
    footfalls whose window overlaps the trajectory, then by objective: a
    shift by whole strides can look just as still while covering fewer steps.
    """
    if step is None:
        grid = offset_grid(search_range, tracks.fps)
    else:
        grid = np.arange(search_range[0], search_range[1] + 0.5 * step, step)
    evals = [stance_speed_objective(tracks, record, o, return_count=True) for o in grid]
    obj = np.array([e[0] for e in evals])
    used = np.array([e[1] for e in evals])
    finite = np.isfinite(obj)
    if not finite.any():
        raise NoCandidatesError("no offset in the search range overlaps the stance windows")
    o = np.where(finite, obj, np.inf)
    left = np.concatenate([[np.inf], o[:-1]])
    right = np.concatenate([o[1:], [np.inf]])
    is_min = finite & (o <= left) & (o < right)
    idx = np.flatnonzero(is_min)
    idx = idx[np.lexsort((o[idx], -used[idx]))]
    cands = [float(grid[i]) for i in idx]
    if return_objective:
        return cands, [float(o[i]) for i in idx]
    return cands


def fit_similarity_2d(src, dst, with_scale: bool = True):
    """Least-squares s, R, t with dst ~ s R src + t (2D, proper rotation)."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if len(src) < 2:
        raise InsufficientDataError("similarity fit needs at least 2 correspondences")
    mu_s, mu_d = src.mean(0), dst.mean(0)
    a, b = src - mu_s, dst - mu_d
    cov = b.T @ a / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.diag([1.0, np.sign(np.linalg.det(U) * np.linalg.det(Vt)) or 1.0])
    R = U @ S @ Vt
    var_s = np.mean(np.sum(a * a, axis=1))
    s = float(np.trace(np.diag(D) @ S) / var_s) if with_scale else 1.0
    t = mu_d - s * R @ mu_s
    return s, R, t


@dataclass
class Session:
    tracks: FootTracks
    record: WalkwayRecord
    candidates: list[float] | None = None


def _correspondences(session: Session, offset: float):
    """Matched (reconstruction xyz, walkway xy meters) for heel and toe stance positions."""
    src, dst = [], []
    rec = session.record
    for i in range(len(rec)):
        s = rec.side[i]
        for track, target in ((session.tracks.heel[s], rec.heel_mm[i]), (session.tracks.toe[s], rec.toe_mm[i])):
            p = stance_position(track, rec.contact_time[i], rec.toeoff_time[i], offset, session.tracks.fps)
            if p is not None:
                src.append(p)
                dst.append(target / 1000.0)
    return np.array(src).reshape(-1, 3), np.array(dst).reshape(-1, 2)


def _transform(s, R2, t2):
    R = np.eye(3)
    R[:2, :2] = R2
    return R, np.array([t2[0], t2[1], 0.0]), s


def _fit(matches, with_scale):
    src = np.concatenate([m[0][:, :2] for m in matches])
    dst = np.concatenate([m[1] for m in matches])
    s, R2, t2 = fit_similarity_2d(src, dst, with_scale)
    res = s * src @ R2.T + t2 - dst
    return (s, R2, t2), float(np.sqrt(np.mean(np.sum(res * res, axis=1))))


def _session_rms(session, offset, params):
    src, dst = _correspondences(session, offset)
    if len(src) == 0:
        return math.inf
    s, R2, t2 = params
    res = s * src[:, :2] @ R2.T + t2 - dst
    return float(np.sqrt(np.mean(np.sum(res * res, axis=1))))


def fit_alignment(sessions: list[Session], fit_scale: bool = True, max_rounds: int = 20,
                  search_range=(-10.0, 10.0), max_starts: int = 10) -> AlignmentResult:
    """Jointly pick per-session offsets and one shared similarity transform.

    Alternates between choosing each session's candidate offset with the
    lowest residual under the current transform and refitting the transform
    in closed form.  Several starts are tried, one per leading candidate of
    the first session; the lowest final residual wins.
    """
    if not sessions or all(len(s.record) < 4 for s in sessions):
        raise InsufficientDataError("alignment needs a session with at least 4 footfalls")
    for s in sessions:
        if s.candidates is None:
            s.candidates = candidate_offsets(s.tracks, s.record, search_range)
        if not s.candidates:
            raise NoCandidatesError("session has no candidate offsets")

    best = None
    for start in sessions[0].candidates[:max_starts]:
        choice = [start] + [s.candidates[0] for s in sessions[1:]]
        result = _alternate(sessions, choice, fit_scale, max_rounds)
        if result is not None and (best is None or result.rms < best.rms - 1e-12):
            best = result
    if best is None:
        raise InsufficientDataError("no candidate combination yielded enough correspondences")
    lo, hi = SCALE_BOUNDS
    if not lo <= best.scale <= hi:
        best.warning = f"scale {best.scale:.4f} outside sanity bounds {SCALE_BOUNDS}"
        logger.warning(best.warning)
    return best


def _alternate(sessions, choice, fit_scale, max_rounds):
    cache = {}

    def matches_for(i, off):
        key = (i, off)
        if key not in cache:
            cache[key] = _correspondences(sessions[i], off)
        return cache[key]

    def fit(choice):
        ms = [matches_for(i, o) for i, o in enumerate(choice)]
        if sum(len(m[0]) for m in ms) < 3:
            return None, math.inf
        return _fit(ms, fit_scale)

    params, rms = fit(choice)
    if params is None:
        return None
    history = [rms]
    converged = False
    for _ in range(max_rounds):
        new_choice = []
        for i, s in enumerate(sessions):
            scores = [_session_rms(s, o, params) for o in s.candidates]
            new_choice.append(s.candidates[int(np.argmin(scores))])
        if new_choice == choice:
            converged = True
            break
        new_params, new_rms = fit(new_choice)
        if new_params is None or new_rms > rms:
            break
        choice, params, rms = new_choice, new_params, new_rms
        history.append(rms)
    R, t, s = _transform(*params)
    return AlignmentResult(R, t, float(s), list(choice), rms, history, converged,
                           None if converged else "alignment did not reach a fixed point")


# --- gait parameters -------------------------------------------------------

@dataclass
class StepMetrics:
    step_length: np.ndarray
    stride_length: np.ndarray
    step_width: np.ndarray
    skipped: int = 0


def step_metrics(sides, heels) -> StepMetrics:
    """Step length, stride length and step width per footfall of one pass.

    ``heels`` (N, 2) are heel contact positions in time order; rows may be
    NaN for discarded footfalls.  Entries that cannot be computed are NaN.

    * stride length: distance to the previous same-side contact, which must
      be two footfalls back with the opposite side in between;
    * step length / width: with ``a``, ``b`` the contralateral contacts
      before and after, step length is the projection of ``heel - a`` on the
      line ``a -> b`` and step width the perpendicular distance to it.
    """
    sides = list(sides)
    h = np.asarray(heels, dtype=float).reshape(-1, 2)
    n = len(sides)
    step = np.full(n, np.nan)
    stride = np.full(n, np.nan)
    width = np.full(n, np.nan)
    skipped = 0
    for k in range(n):
        if k >= 2:
            if sides[k - 2] == sides[k] and sides[k - 1] != sides[k]:
                stride[k] = np.linalg.norm(h[k] - h[k - 2])
            else:
                skipped += 1
        if 1 <= k < n - 1:
            a, b = h[k - 1], h[k + 1]
            if sides[k - 1] != sides[k] and sides[k + 1] != sides[k]:
                line = b - a
                L = np.linalg.norm(line)
                if L > 0:
                    u = line / L
                    rel = h[k] - a
                    step[k] = rel @ u
                    width[k] = abs(u[0] * rel[1] - u[1] * rel[0])
            else:
                skipped += 1
    return StepMetrics(step, stride, width, skipped)


RESIDUAL_COLUMNS = ("heel_forward", "heel_lateral", "toe_forward", "toe_lateral",
                    "step_length", "stride_length", "step_width")


@dataclass
class GaitReport:
    rows: list[dict]
    aggregates: dict[str, dict[str, float]]
    discarded: int = 0
    skipped: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_dict(self) -> dict:
        return {"aggregates": self.aggregates, "discarded_footfalls": self.discarded,
                "skipped_steps": self.skipped, "n_footfalls": len(self.rows)}


def _aggregate(values) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    out = {"n": int(v.size), "mean": math.nan, "std": math.nan, "sigma_iqr": math.nan}
    if v.size:
        out["mean"] = float(np.mean(v))
    if v.size >= 2:
        out["std"] = float(np.std(v, ddof=1))
    if v.size >= 4:
        out["sigma_iqr"] = sigma_iqr(v)
    return out


def residuals(ours_heel_mm, ours_toe_mm, record: WalkwayRecord) -> GaitReport:
    """Per-footfall residuals (ours - walkway) in millimeters.

    ``ours_*_mm`` (N, 2) are our stance positions already mapped into
    walkway coordinates, NaN where the footfall was discarded.  Forward
    residuals flip sign for passes walked in the descending direction;
    step metrics are computed per pass on both sides of the comparison.
    """
    ours_heel_mm = np.asarray(ours_heel_mm, dtype=float).reshape(-1, 2)
    ours_toe_mm = np.asarray(ours_toe_mm, dtype=float).reshape(-1, 2)
    rows = []
    skipped = 0
    discarded = int(np.sum(~np.all(np.isfinite(ours_heel_mm), axis=1)))
    for trial in record.trials:
        idx = record.trial_indices(trial)
        sides = [record.side[i] for i in idx]
        ours = step_metrics(sides, ours_heel_mm[idx])
        ref = step_metrics(sides, record.heel_mm[idx])
        skipped += ours.skipped
        for n, i in enumerate(idx):
            sign = -1.0 if record.direction[i] == "desc" else 1.0
            dh = ours_heel_mm[i] - record.heel_mm[i]
            dt = ours_toe_mm[i] - record.toe_mm[i]
            rows.append({
                "trial_id": trial, "footfall": int(i), "side": record.side[i],
                "direction": record.direction[i],
                "heel_forward": sign * dh[0], "heel_lateral": dh[1],
                "toe_forward": sign * dt[0], "toe_lateral": dt[1],
                "step_length_ours": ours.step_length[n], "step_length_walkway": ref.step_length[n],
                "step_length": ours.step_length[n] - ref.step_length[n],
                "stride_length_ours": ours.stride_length[n], "stride_length_walkway": ref.stride_length[n],
                "stride_length": ours.stride_length[n] - ref.stride_length[n],
                "step_width_ours": ours.step_width[n], "step_width_walkway": ref.step_width[n],
                "step_width": ours.step_width[n] - ref.step_width[n],
            })
    aggregates = {c: _aggregate([r[c] for r in rows]) for c in RESIDUAL_COLUMNS}
    return GaitReport(rows, aggregates, discarded, skipped)


def stance_positions_mm(session: Session, offset: float, alignment: AlignmentResult):
    """Our heel and toe stance positions in walkway millimeters, NaN if discarded."""
    rec = session.record
    heel = np.full((len(rec), 2), np.nan)
    toe = np.full((len(rec), 2), np.nan)
    for i in range(len(rec)):
        s = rec.side[i]
        ph = stance_position(session.tracks.heel[s], rec.contact_time[i], rec.toeoff_time[i], offset, session.tracks.fps)
        pt = stance_position(session.tracks.toe[s], rec.contact_time[i], rec.toeoff_time[i], offset, session.tracks.fps)
        if ph is not None and pt is not None:
            heel[i] = alignment.apply(ph) * 1000.0
            toe[i] = alignment.apply(pt) * 1000.0
    return heel, toe
