#!/usr/bin/env python3
"""
FabuLight-ASD command-line launcher.

Exit codes: 0 on success, 1 when a command fails (invalid data, missing
files, numeric failure), 2 for usage errors reported by argparse.
"""
import argparse
import sys

from app.main import FabuLightApp
from config.config import Config
from core.errors import FabuLightError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fabulight", description="Body-pose augmented active speaker detection"
    )
    parser.add_argument("--config", help="YAML configuration file")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train a model")
    train.add_argument("--manifest", required=True)
    train.add_argument("--media-root", required=True)
    train.add_argument("--out-dir", required=True)
    train.add_argument("--mode", choices=["fabulight", "lightasd"])
    train.add_argument("--body", choices=["whole", "upper"])
    train.add_argument("--seed", type=int)
    train.add_argument("--epochs", type=int, help="Override training.max_epochs")
    train.add_argument("--val-manifest", help="Validation manifest for best.fblw selection")

    infer = commands.add_parser("infer", help="Score a manifest with trained weights")
    infer.add_argument("--weights", required=True)
    infer.add_argument("--manifest", required=True)
    infer.add_argument("--media-root", required=True)
    infer.add_argument("--out", required=True, help="Score CSV to write")

    analyze = commands.add_parser("analyze", help="Parameter and MAC counts")
    analyze.add_argument("--mode", choices=["fabulight", "lightasd"], default="fabulight")
    analyze.add_argument("--body", choices=["whole", "upper"], default="whole")
    analyze.add_argument("--frames", type=int, help="Reference input length in frames")

    evaluate = commands.add_parser("eval", help="mAP of a score file")
    evaluate.add_argument("--scores", required=True)
    evaluate.add_argument("--by-category", action="store_true")

    synth = commands.add_parser("synth", help="Generate the synthetic dataset")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--entities", type=int, default=60)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--min-frames", type=int, default=20)
    synth.add_argument("--max-frames", type=int, default=60)
    synth.add_argument("--corrupt-faces", action="store_true", help="Replace face crops by noise")

    graph = commands.add_parser("inspect-graph", help="Print a skeleton partition")
    graph.add_argument("--body", choices=["whole", "upper"], default="whole")
    graph.add_argument("--radius", type=int, choices=[1, 2], default=1)
    return parser


def run(app: FabuLightApp, args: argparse.Namespace) -> str:
    if args.command == "train":
        return app.train(
            args.manifest,
            args.media_root,
            args.out_dir,
            mode=args.mode,
            body=args.body,
            seed=args.seed,
            epochs=args.epochs,
            val_manifest=args.val_manifest,
        )
    if args.command == "infer":
        return app.infer(args.weights, args.manifest, args.media_root, args.out)
    if args.command == "analyze":
        return app.analyze(args.mode, args.body, args.frames)
    if args.command == "eval":
        return app.evaluate(args.scores, args.by_category)
    if args.command == "synth":
        return app.synth(
            args.out_dir,
            args.entities,
            args.seed,
            args.min_frames,
            args.max_frames,
            args.corrupt_faces,
        )
    return app.inspect_graph(args.body, args.radius)


def main(argv=None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    try:
        app = FabuLightApp(Config(args.config) if args.config else None)
        print(run(app, args))
        return 0
    except (FabuLightError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
