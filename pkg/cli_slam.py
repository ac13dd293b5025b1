#!/usr/bin/env python3
import argparse
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from pipeline import (
    Align, Association, Mode, SlamRunResult, TrajectoryEstimate, evaluate, generate_synthetic, get_frame_source,
    load_config, load_synthetic_spec, plot_trajectories, run_slam,
)
from pipeline.evaluation import EUROC_MAX_DT
from utils.errors import SlamError
from utils.logger import RunLogger, setup_logging

# Load environment variables from .env file
load_dotenv()


class SlamInterface:
    def __init__(self, log_dir: Optional[str] = None):
        """Initialize the command-line front of the SLAM pipeline.

        Args:
            log_dir: Directory for JSON run logs; SLAM_LOG_DIR or run_logs when None
        """
        self.log_dir = log_dir or os.getenv("SLAM_LOG_DIR", "run_logs")

    def run(self, args: argparse.Namespace) -> int:
        """Run SLAM over a dataset and write the trajectory."""
        config = load_config(args.config, mode=args.mode, profile=args.profile, seed=args.seed,
                             rt_mode=True if args.rt else None)
        source = get_frame_source(args.layout, args.dataset, config.mode)
        print(f"Running {config.mode.value} SLAM ({config.profile.value}) on {len(source)} frames")
        result = run_slam(config, source)
        result.trajectory.save(args.out)
        self.print_summary(result)
        log_path = RunLogger(self.log_dir).log_run(config, result.summary, result.events)
        print(f"\nTrajectory written to {args.out}, run log {log_path}")
        return 0

    def evaluate(self, args: argparse.Namespace) -> int:
        """Compare an estimated trajectory with ground truth."""
        est = TrajectoryEstimate.load(args.est)
        gt = TrajectoryEstimate.load(args.gt)
        align = Align(args.align)
        association = Association(args.associate)
        report = evaluate(est, gt, align, args.max_dt, association)
        text = report.as_text()
        print(text, end="")
        if args.report:
            with open(args.report, 'w', encoding='utf-8') as f:
                f.write(text)
        if args.plot:
            plot_trajectories(est, gt, args.plot, align, args.max_dt, association=association)
            print(f"Plot written to {args.plot}")
        return 0

    def synthesize(self, args: argparse.Namespace) -> int:
        """Render a synthetic sequence into an image directory."""
        sequence = generate_synthetic(load_synthetic_spec(args.spec))
        out = sequence.save(args.out)
        print(f"Wrote {len(sequence)} frames ({sequence.spec.trajectory.value}) to {out}")
        return 0

    def print_summary(self, result: SlamRunResult) -> None:
        print("\nRun summary:")
        for key, value in result.summary.items():
            if key == "timings":
                continue
            print(f"- {key}: {value}")
        timings = result.summary.get("timings", {})
        if timings:
            print("\nTimings (ms):")
            for name, stats in timings.items():
                print(f"- {name}: mean {stats['mean_ms']:.1f}, max {stats['max_ms']:.1f} over {stats['count']}")
        for line in result.events:
            print(line)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Stereo and monocular visual SLAM")
    parser.add_argument('--log-level', default=os.getenv("SLAM_LOG_LEVEL", "INFO"))
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help="run SLAM on a dataset")
    run.add_argument('--config', help="flat key=value (or YAML key: value) config with thresholds and calibration")
    run.add_argument('--dataset', required=True, help="dataset directory (or synthetic spec file)")
    run.add_argument('--layout', default='imagedir', choices=['euroc', 'kitti', 'imagedir', 'synthetic'])
    run.add_argument('--rt', action='store_true', help="real-time mode: newest frame wins")
    run.add_argument('--mode', choices=[m.value for m in Mode], help="override the configured mode")
    run.add_argument('--profile', choices=['standard', 'fast'])
    run.add_argument('--seed', type=int)
    run.add_argument('--out', default='traj.txt', help="trajectory output (TUM format)")

    ev = commands.add_parser('eval', help="evaluate a trajectory against ground truth")
    ev.add_argument('--est', required=True)
    ev.add_argument('--gt', required=True)
    ev.add_argument('--align', default='se3', choices=[a.value for a in Align])
    ev.add_argument('--max-dt', type=float, default=EUROC_MAX_DT, help="association tolerance in seconds")
    ev.add_argument('--associate', default='auto', choices=[a.value for a in Association],
                    help="nearest timestamp, row index, or index on a shared frame grid (auto)")
    ev.add_argument('--report', help="write the metrics to this file")
    ev.add_argument('--plot', help="write a top-down SVG overlay to this file")

    synth = commands.add_parser('synth', help="render a synthetic sequence")
    synth.add_argument('--spec', required=True, help="flat key=value (or YAML key: value) synthetic spec")
    synth.add_argument('--out', required=True, help="output directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    interface = SlamInterface()
    handlers = {'run': interface.run, 'eval': interface.evaluate, 'synth': interface.synthesize}
    try:
        return handlers[args.command](args)
    except SlamError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
