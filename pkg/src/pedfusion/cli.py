"""``pedfusion`` command line: calibrate, run, replay."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .calib import load_calibration
from .errors import MissingCalibration, PedFusionError
from .fusion import write_fusion_csv
from .pipeline import SweepConfig, calibrate, replay_dir, run_scenario
from .sim.scenario import ScenarioConfig


def _scenario(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.scenario) if args.scenario else ScenarioConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _calibration(args):
    if not args.calib:
        raise MissingCalibration("--calib is required (run `pedfusion calibrate` first)")
    if not Path(args.calib).exists():
        raise MissingCalibration(f"calibration file not found: {args.calib}")
    return load_calibration(args.calib)


def cmd_calibrate(args) -> int:
    cfg = _scenario(args)
    sweep = SweepConfig(positions=args.positions, near_m=args.near, far_m=args.far)
    cal = calibrate(cfg, sweep)
    out = Path(args.out)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "calibration.json"
    cal.save(out)
    print(f"wrote {out} (max residual {cal.report['max_residual_m']:.4f} m)")
    return 0


def cmd_run(args) -> int:
    poly, smap = _calibration(args)
    cfg = _scenario(args)
    res = run_scenario(cfg, poly, smap, out_dir=args.out, dump_frames=args.dump_frames)
    print(f"{cfg.kind.value}: {res.report.frames} frames -> {args.out}")
    return 0


def cmd_replay(args) -> int:
    _, smap = _calibration(args)
    cfg = ScenarioConfig.load(args.scenario) if args.scenario else None
    outputs = replay_dir(args.logs, smap, cfg)
    out = Path(args.out) if args.out else Path(args.logs)
    out.mkdir(parents=True, exist_ok=True)
    name = "fusion.csv" if args.out else "replay_fusion.csv"
    write_fusion_csv(out / name, outputs)
    print(f"replayed {len(outputs)} frames -> {out / name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pedfusion", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", help="scenario JSON (defaults to a CVFA run)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")

    c = sub.add_parser("calibrate", help="static sweep -> calibration JSON")
    common(c)
    c.add_argument("--out", default="calibration.json", help="output file or directory")
    c.add_argument("--positions", type=int, default=SweepConfig.positions)
    c.add_argument("--near", type=float, default=SweepConfig.near_m, help="nearest sweep distance (m)")
    c.add_argument("--far", type=float, default=SweepConfig.far_m, help="farthest sweep distance (m)")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("run", help="simulate a scenario and write logs + report")
    common(r)
    r.add_argument("--calib", help="calibration JSON")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--dump-frames", action="store_true", help="also write frames/frame_%%06d.pgm")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("replay", help="re-run gating and fusion from a run's logs")
    e.add_argument("logs", help="directory holding lidar.csv, camera.csv and frames.csv")
    e.add_argument("--calib", help="calibration JSON")
    e.add_argument("--scenario", help="scenario JSON (defaults to the one saved with the logs)")
    e.add_argument("--out", help="output directory (default: write replay_fusion.csv into the logs)")
    e.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PedFusionError, OSError, ValueError, KeyError) as exc:
        print(f"pedfusion {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
