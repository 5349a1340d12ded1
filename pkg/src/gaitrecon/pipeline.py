"""End-to-end workflow: scene directories in, trajectories and reports out.

A scene directory holds ``calibration.json``, ``detections.csv``, an
optional ``walkway.csv``, an optional ``scene.json`` (fps, skeleton, foot
keypoints) and, for synthetic scenes, the ground truth ``truth.csv``.

A run directory holds ``manifest.json``, ``status.json`` and one
subdirectory per trial (scene) with the trajectory, its loss curve, the
consistency curve, gait residuals and a ``summary.json``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .camera import Camera, dump_calibration, load_calibration
from .config import PipelineConfig
from .errors import ReconstructionError, ValidationError
from .evaluation import (consistency_curve, reprojection_deltas, reprojection_metric, sigma_iqr,
                         trajectory_quality)
from .gait import (RESIDUAL_COLUMNS, AlignmentResult, FootTracks, GaitReport, Session,
                   WalkwayRecord, fit_alignment, residuals, stance_positions_mm)
from .optim import make_fit_data, observation_weights, optimize_explicit, optimize_implicit
from .optim.losses import Skeleton
from .synthetic import FOOT_KEYPOINTS, SKELETON_PAIRS, J as BODY25, Scene, body25_skeleton
from .triangulation import Detections2D, Trajectory3D, triangulate_trajectory

logger = logging.getLogger(__name__)

METHODS = ("robust_triangulation", "explicit", "implicit", "plain_dlt")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4

REPORT_COLUMNS = ("method", "scene_hash", "GC5", "GC10", "GC20", "L_reproj", "L_skeleton", "L_smooth",
                  *RESIDUAL_COLUMNS)


# --- scenes -------------------------------------------------------------------

@dataclass
class SceneData:
    name: str
    cameras: list[Camera]
    detections: Detections2D
    skeleton: Skeleton
    foot_keypoints: dict
    walkway: WalkwayRecord | None = None
    truth: Trajectory3D | None = None
    scene_hash: str = ""


def write_scene(directory, scene: Scene) -> str:
    """Write a synthetic scene in the pipeline's input formats; returns its hash."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dump_calibration(scene.cameras, d / "calibration.json")
    io.write_detections(d / "detections.csv", scene.detections)
    io.write_walkway(d / "walkway.csv", scene.truth.walkway)
    io.write_trajectory(d / "truth.csv", scene.truth.trajectory)
    X = scene.truth.trajectory.positions
    meta = {
        "fps": scene.spec.fps,
        "n_frames": int(X.shape[0]),
        "n_joints": int(X.shape[1]),
        "camera_ids": [c.id for c in scene.cameras],
        "skeleton": [[BODY25[a], BODY25[b]] for a, b in SKELETON_PAIRS],
        "foot_keypoints": FOOT_KEYPOINTS,
        "spec": scene.spec.to_dict(),
        "walkway_transform": {k: np.asarray(v).tolist() for k, v in scene.truth.walkway_transform.items()},
    }
    io.write_json(d / "scene.json", meta)
    return scene_hash(d)


def scene_hash(directory) -> str:
    d = Path(directory)
    files = [d / "calibration.json", d / "detections.csv"]
    if (d / "walkway.csv").exists():
        files.append(d / "walkway.csv")
    return io.file_digest(*files)


def load_scene(directory) -> SceneData:
    d = Path(directory)
    if not d.is_dir():
        raise ValidationError("scene directory not found", d)
    for name in ("calibration.json", "detections.csv"):
        if not (d / name).exists():
            raise ValidationError(f"missing {name}", d)
    meta = io.read_json(d / "scene.json") if (d / "scene.json").exists() else {}
    cameras = load_calibration(d / "calibration.json")
    ids = meta.get("camera_ids", [c.id for c in cameras])
    det = io.read_detections(d / "detections.csv", camera_ids=ids, n_frames=meta.get("n_frames"),
                             n_joints=meta.get("n_joints"), fps=float(meta.get("fps", 30.0)))
    J = det.shape[2]
    if "skeleton" in meta:
        skeleton = Skeleton([tuple(p) for p in meta["skeleton"]])
    else:
        skeleton = body25_skeleton()
    try:
        skeleton.validate(J)
    except ValueError as exc:
        raise ValidationError(str(exc), d / "scene.json") from exc
    feet = meta.get("foot_keypoints", FOOT_KEYPOINTS)
    walkway = io.read_walkway(d / "walkway.csv") if (d / "walkway.csv").exists() else None
    truth = io.read_trajectory(d / "truth.csv") if (d / "truth.csv").exists() else None
    return SceneData(d.name, cameras, det.aligned_to(cameras), skeleton, feet, walkway, truth, scene_hash(d))


# --- stages -----------------------------------------------------------------------

@dataclass
class Reconstruction:
    trajectory: Trajectory3D
    weights: np.ndarray  # loss weights used for L_reproj reporting, (T, C, J)
    loss_curve: list[dict] = field(default_factory=list)


def reconstruct(scene: SceneData, method: str, config: PipelineConfig = PipelineConfig(),
                seed: int = 0) -> Reconstruction:
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; choose from {METHODS}")
    robust = triangulate_trajectory(scene.detections, scene.cameras, config.triangulation)
    fit_cfg = config.fit_config()
    weights = observation_weights(scene.detections, robust, config.loss.weight_source, config.triangulation.gamma)
    if method == "robust_triangulation":
        return Reconstruction(robust, weights)
    if method == "plain_dlt":
        plain = triangulate_trajectory(scene.detections, scene.cameras, config.triangulation, method="plain")
        return Reconstruction(Trajectory3D(plain.positions, plain.valid), weights)
    data = make_fit_data(scene.detections, scene.cameras, scene.skeleton, robust, fit_cfg)
    if method == "explicit":
        res = optimize_explicit(robust, data, fit_cfg)
    else:
        res = optimize_implicit(robust, data, fit_cfg, seed=seed)
    return Reconstruction(res.trajectory, weights, res.loss_curve)


def evaluate(scene: SceneData, traj: Trajectory3D, weights: np.ndarray,
             config: PipelineConfig = PipelineConfig()) -> tuple[dict, object]:
    """Consistency curve plus trajectory-quality and reprojection metrics."""
    deltas = reprojection_deltas(traj, scene.detections, scene.cameras)
    curve = consistency_curve(deltas, scene.detections.confidence, config.evaluation.thresholds,
                              config.evaluation.lam, config.evaluation.subset)
    smooth, skel = trajectory_quality(traj, scene.skeleton)
    metrics = {
        "GC5": curve.at(5.0), "GC10": curve.at(10.0), "GC20": curve.at(20.0),
        "L_reproj": reprojection_metric(traj, scene.detections, scene.cameras, weights, config.loss),
        "L_skeleton": skel, "L_smooth": smooth,
        "valid_fraction": float(traj.valid.mean()),
    }
    if scene.truth is not None and scene.truth.positions.shape == traj.positions.shape:
        ok = traj.valid & scene.truth.valid
        err = np.linalg.norm(traj.positions - scene.truth.positions, axis=-1)[ok]
        metrics["rmse_m"] = float(np.sqrt(np.mean(err ** 2))) if err.size else math.nan
    return metrics, curve


def align(scene: SceneData, traj: Trajectory3D,
          config: PipelineConfig = PipelineConfig()) -> tuple[AlignmentResult, GaitReport]:
    if scene.walkway is None:
        raise ValidationError("scene has no walkway.csv", scene.name)
    fps = scene.detections.fps
    X = np.where(traj.valid[..., None], traj.positions, np.nan)
    tracks = FootTracks.from_trajectory(Trajectory3D(X, traj.valid), fps,
                                        heel=scene.foot_keypoints["heel"], toe=scene.foot_keypoints["toe"])
    session = Session(tracks, scene.walkway)
    ac = config.alignment
    result = fit_alignment([session], fit_scale=ac.fit_scale, max_rounds=ac.max_rounds,
                           search_range=ac.search_range, max_starts=ac.max_starts)
    heel, toe = stance_positions_mm(session, result.offsets[0], result)
    return result, residuals(heel, toe, scene.walkway)


# --- writers -------------------------------------------------------------------------

def write_consistency(path, curve) -> None:
    io.write_csv(path, ("d_px", "fraction"), [(io.fmt(d), io.fmt(f)) for d, f in zip(curve.thresholds, curve.fractions)])


def write_residuals(path, report: GaitReport) -> None:
    cols = ("trial_id", "footfall", "side", "direction", *RESIDUAL_COLUMNS)
    rows = [[r[c] if c in ("trial_id", "footfall", "side", "direction") else io.fmt(r[c]) for c in cols]
            for r in report.rows]
    io.write_csv(path, cols, rows)


def _residual_summary(report: GaitReport) -> dict:
    return {c: report.aggregates[c] for c in RESIDUAL_COLUMNS}


# --- run -----------------------------------------------------------------------------

@dataclass
class RunManifest:
    inputs: list[Path]
    method: str
    out: Path
    seed: int = 0
    config: PipelineConfig = field(default_factory=PipelineConfig)
    jobs: int = 1

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.inputs:
            raise ValidationError("no input scenes given")
        for p in self.inputs:
            if not Path(p).is_dir():
                raise ValidationError("input scene directory not found", p)
        names = [Path(p).name for p in self.inputs]
        if len(set(names)) != len(names):
            raise ValidationError("input scene directories must have distinct names")
        if self.jobs < 1:
            raise ValidationError("--jobs must be at least 1")

    def to_dict(self) -> dict:
        return {"inputs": [str(p) for p in self.inputs], "method": self.method, "seed": self.seed,
                "config": self.config.to_dict()}


def run_trial(scene_dir, method: str, config: PipelineConfig, seed: int, out_dir) -> dict:
    """Process one scene; every file lands inside ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = load_scene(scene_dir)
    rec = reconstruct(scene, method, config, seed)
    sidecar = {"method": method, "seed": seed, "scene_hash": scene.scene_hash, "config": config.to_dict()}
    io.write_trajectory(out / "trajectory.csv", rec.trajectory, sidecar)
    if rec.loss_curve:
        io.write_loss_curve(out / "loss_curve.csv", rec.loss_curve)
    metrics, curve = evaluate(scene, rec.trajectory, rec.weights, config)
    write_consistency(out / "consistency.csv", curve)
    summary = {"trial": scene.name, "method": method, "scene_hash": scene.scene_hash, "metrics": metrics}
    if scene.walkway is not None:
        try:
            alignment, report = align(scene, rec.trajectory, config)
        except ReconstructionError as exc:
            summary["alignment_error"] = f"{type(exc).__name__}: {exc}"
        else:
            io.write_json(out / "alignment.json", alignment.to_dict())
            write_residuals(out / "gait_residuals.csv", report)
            summary["gait"] = _residual_summary(report)
            summary["alignment"] = {"offset_s": alignment.offsets[0], "angle_deg": alignment.angle_deg,
                                    "scale": alignment.scale, "rms_m": alignment.rms}
    io.write_json(out / "summary.json", summary)
    return summary


def _trial_job(args):
    scene_dir, method, config, seed, out_dir = args
    try:
        run_trial(scene_dir, method, config, seed, out_dir)
        return Path(scene_dir).name, "ok", None
    except ValidationError as exc:
        return Path(scene_dir).name, "validation", str(exc)
    except (ReconstructionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return Path(scene_dir).name, "numeric", f"{type(exc).__name__}: {exc}"


def run(manifest: RunManifest) -> int:
    """Execute a manifest; returns the process exit code."""
    manifest.validate()
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "manifest.json", manifest.to_dict())
    jobs = [(str(p), manifest.method, manifest.config, manifest.seed, str(out / "trials" / Path(p).name))
            for p in manifest.inputs]
    if manifest.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(manifest.jobs, len(jobs))) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    status = {name: {"status": s, "error": err} for name, s, err in results}
    io.write_json(out / "status.json", status)
    failed = [r for r in results if r[1] != "ok"]
    for name, s, err in failed:
        logger.error("trial %s failed (%s): %s", name, s, err)
    if not failed:
        return EXIT_OK
    if len(failed) < len(results):
        return EXIT_PARTIAL
    return EXIT_VALIDATION if all(r[1] == "validation" for r in failed) else EXIT_NUMERIC


# --- report -----------------------------------------------------------------------------

@dataclass
class RunSummary:
    path: Path
    method: str
    scene_hash: str
    trials: list[dict]
    curves: list[np.ndarray]  # per trial (n, 2) consistency curves
    residuals: dict[str, np.ndarray]
    loss_curves: list[list[dict]]


def load_run(run_dir) -> RunSummary:
    d = Path(run_dir)
    if not (d / "manifest.json").exists():
        raise ValidationError("not a run directory (manifest.json missing)", d)
    manifest = io.read_json(d / "manifest.json")
    trials, curves, losses = [], [], []
    res = {c: [] for c in RESIDUAL_COLUMNS}
    trial_root = d / "trials"
    for td in sorted(p for p in trial_root.iterdir() if p.is_dir()) if trial_root.exists() else []:
        if not (td / "summary.json").exists():
            continue
        trials.append(io.read_json(td / "summary.json"))
        curves.append(np.loadtxt(td / "consistency.csv", delimiter=",", skiprows=1, ndmin=2))
        if (td / "loss_curve.csv").exists():
            losses.append(io.read_loss_curve(td / "loss_curve.csv"))
        if (td / "gait_residuals.csv").exists():
            for line, row in io._read_rows(td / "gait_residuals.csv", RESIDUAL_COLUMNS):
                for c in RESIDUAL_COLUMNS:
                    res[c].append(float(row[c]))
    if not trials:
        raise ValidationError("run has no completed trials", d)
    combined = io.file_digest_text("|".join(sorted(f"{t['trial']}:{t['scene_hash']}" for t in trials)))
    return RunSummary(d, manifest["method"], combined, trials, curves,
                      {c: np.array(v) for c, v in res.items()}, losses)


def report_rows(runs: list[RunSummary]) -> list[dict]:
    hashes = {r.scene_hash for r in runs}
    if len(hashes) > 1:
        raise ValidationError(f"runs were made on different scenes (hashes {sorted(hashes)}); refusing to aggregate")
    rows = []
    for r in runs:
        row = {"method": r.method, "scene_hash": r.scene_hash}
        for k in ("GC5", "GC10", "GC20", "L_reproj", "L_skeleton", "L_smooth"):
            row[k] = float(np.mean([t["metrics"][k] for t in r.trials]))
        for c in RESIDUAL_COLUMNS:
            v = r.residuals[c]
            v = v[np.isfinite(v)]
            row[c] = sigma_iqr(v) if v.size >= 4 else math.nan
        rows.append(row)
    return rows


def report(run_dirs, out, figures: bool = True) -> list[dict]:
    """Merge run directories into ``report.csv`` (one row per run) plus figures."""
    runs = [load_run(d) for d in run_dirs]
    rows = report_rows(runs)
    out = Path(out)
    io.write_csv(out / "report.csv", REPORT_COLUMNS,
                 [[row[c] if c in ("method", "scene_hash") else io.fmt(row[c]) for c in REPORT_COLUMNS] for row in rows])
    if figures:
        from . import plotting

        plotting.consistency_figure(runs, out / "consistency.png")
        plotting.residual_figure(runs, out / "residuals.png")
        if any(r.loss_curves for r in runs):
            plotting.loss_figure(runs, out / "loss_curves.png")
    return rows


def evaluate_files(scene_dir, trajectory_path, out, config: PipelineConfig = PipelineConfig()) -> dict:
    """``evaluate`` subcommand: metrics for an existing trajectory file."""
    scene = load_scene(scene_dir)
    traj = io.read_trajectory(trajectory_path)
    if traj.positions.shape[:2] != (scene.detections.shape[0], scene.detections.shape[2]):
        raise ValidationError("trajectory shape does not match the scene's frames and joints", trajectory_path)
    robust = triangulate_trajectory(scene.detections, scene.cameras, config.triangulation)
    weights = observation_weights(scene.detections, robust, config.loss.weight_source, config.triangulation.gamma)
    metrics, curve = evaluate(scene, traj, weights, config)
    out = Path(out)
    write_consistency(out / "consistency.csv", curve)
    io.write_json(out / "metrics.json", {"scene_hash": scene.scene_hash, "metrics": metrics})
    return metrics


def align_files(scene_dir, trajectory_path, out, config: PipelineConfig = PipelineConfig()) -> dict:
    """``align`` subcommand: alignment and gait residuals for an existing trajectory file."""
    scene = load_scene(scene_dir)
    traj = io.read_trajectory(trajectory_path)
    result, rep = align(scene, traj, config)
    out = Path(out)
    io.write_json(out / "alignment.json", result.to_dict())
    write_residuals(out / "gait_residuals.csv", rep)
    summary = _residual_summary(rep)
    io.write_json(out / "gait_summary.json", summary)
    return {"alignment": result.to_dict(), "gait": summary}
