"""Command-line entry point: ``gaitrecon {synth,run,evaluate,align,report}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import ReconstructionError, ValidationError
from .synthetic import make_scene

logger = logging.getLogger("gaitrecon")


def _global_flags(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=default(None), help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=default(0), help="random seed (synth scene, MLP init)")
    parser.add_argument("--jobs", type=int, default=default(1), help="worker processes for multi-trial runs")
    parser.add_argument("--out", type=Path, default=default(None), help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaitrecon", description="Multi-camera 3D gait reconstruction.")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic scene directory")
    s.add_argument("--noisy", action="store_true", help="2 px noise, 5%% outliers, 5%% dropout")
    s.add_argument("--noise-px", type=float)
    s.add_argument("--outlier-rate", type=float)
    s.add_argument("--dropout-rate", type=float)
    s.add_argument("--duration", type=float)
    s.add_argument("--walk-length", type=float)
    s.add_argument("--cameras", type=int, dest="n_cameras")
    s.add_argument("--path", choices=("straight", "curved"))
    s.add_argument("--direction", choices=("asc", "desc"))
    s.add_argument("--time-offset", type=float)
    s.add_argument("--walkway-rotation-deg", type=float)
    s.add_argument("--walkway-translation", type=float, nargs=3)
    s.add_argument("--walkway-scale", type=float)

    r = sub.add_parser("run", parents=[common], help="reconstruct one or more scenes")
    r.add_argument("scenes", nargs="+", type=Path)
    r.add_argument("--method", required=True, choices=pipeline.METHODS)
    r.add_argument("--steps", type=int, help="override schedule.total_steps")

    e = sub.add_parser("evaluate", parents=[common], help="metrics for an existing trajectory")
    e.add_argument("scene", type=Path)
    e.add_argument("trajectory", type=Path)

    a = sub.add_parser("align", parents=[common], help="walkway alignment and gait residuals")
    a.add_argument("scene", type=Path)
    a.add_argument("trajectory", type=Path)

    rep = sub.add_parser("report", parents=[common], help="comparison table and figures from run directories")
    rep.add_argument("runs", nargs="+", type=Path)
    rep.add_argument("--no-figures", action="store_true")
    return p


SYNTH_FIELDS = ("noise_px", "outlier_rate", "dropout_rate", "duration", "walk_length", "n_cameras", "path",
                "direction", "time_offset", "walkway_rotation_deg", "walkway_translation", "walkway_scale")


def _require_out(args):
    if args.out is None:
        raise ValidationError(f"{args.command} needs --out")
    return args.out


def _cmd_synth(args, config: PipelineConfig) -> int:
    out = _require_out(args)
    overrides = {"seed": args.seed}
    if args.noisy:
        overrides.update(noise_px=2.0, outlier_rate=0.05, dropout_rate=0.05)
    for name in SYNTH_FIELDS:
        v = getattr(args, name)
        if v is not None:
            overrides[name] = tuple(v) if isinstance(v, list) else v
    try:
        spec = dataclasses.replace(config.scene, **overrides)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    h = pipeline.write_scene(out, make_scene(spec))
    print(f"scene {out} hash {h}")
    return pipeline.EXIT_OK


def _cmd_run(args, config: PipelineConfig) -> int:
    out = _require_out(args)
    if args.steps is not None:
        try:
            config = config.override("schedule", total_steps=args.steps)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
    manifest = pipeline.RunManifest(inputs=list(args.scenes), method=args.method, out=out, seed=args.seed,
                                    config=config, jobs=args.jobs)
    code = pipeline.run(manifest)
    status = json.loads((Path(out) / "status.json").read_text())
    for name, st in status.items():
        print(f"{name}: {st['status']}" + (f" ({st['error']})" if st["error"] else ""))
    return code


def _cmd_evaluate(args, config) -> int:
    metrics = pipeline.evaluate_files(args.scene, args.trajectory, _require_out(args), config)
    for k, v in metrics.items():
        print(f"{k}: {v:.6g}")
    return pipeline.EXIT_OK


def _cmd_align(args, config) -> int:
    res = pipeline.align_files(args.scene, args.trajectory, _require_out(args), config)
    al = res["alignment"]
    print(f"offset {al['offsets'][0]:.4f} s  scale {al['scale']:.5f}  rms {al['rms'] * 1000:.2f} mm")
    for k, agg in res["gait"].items():
        print(f"{k}: mean {agg['mean']:.2f} mm  sigma_iqr {agg['sigma_iqr']:.2f} mm  n {agg['n']}")
    return pipeline.EXIT_OK


def _cmd_report(args, config) -> int:
    rows = pipeline.report(args.runs, _require_out(args), figures=not args.no_figures)
    cols = pipeline.REPORT_COLUMNS
    print("\t".join(cols))
    for row in rows:
        print("\t".join(row[c] if isinstance(row[c], str) else f"{row[c]:.4g}" for c in cols))
    return pipeline.EXIT_OK


COMMANDS = {"synth": _cmd_synth, "run": _cmd_run, "evaluate": _cmd_evaluate, "align": _cmd_align,
            "report": _cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config) if args.config else PipelineConfig()
        return COMMANDS[args.command](args, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_VALIDATION
    except ReconstructionError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return pipeline.EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
