"""Command-line entry point.

Exit status: 0 on success, 2 when input fails validation (bad config, rejected
scenes, undefined metrics), 1 on I/O errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .labels import MetricsUndefinedError
from .pipeline.config import ConfigError, load_config
from .pipeline.dataset import DEFAULT_MIN_COVERAGE, DatasetIOError, dump_json, list_scenes, load_manifest, validate_input
from .pipeline.evaluate import TASKS, evaluate, format_metrics
from .pipeline.fixtures import KINDS, gen_fixture
from .pipeline.run import OutputExistsError, run_batch

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2

log = logging.getLogger("scene_augment")


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    report = run_batch(cfg, overwrite=args.overwrite)
    sys.stdout.write(report.format_table())
    log.info("wrote %s", cfg.output)
    return EXIT_OK


def cmd_validate(args) -> int:
    scenes = list_scenes(args.dataset)
    results = {}
    io_error = False
    for s in scenes:
        try:
            res = validate_input(load_manifest(s), args.min_coverage).to_dict()
        except DatasetIOError as exc:
            io_error = True
            res = {"ok": False, "reason": "io", "detail": str(exc), "coverage": None}
        results[s.name] = res
        status = "ok" if res["ok"] else f"FAIL {res['reason']}: {res['detail']}"
        print(f"{s.name}: {status}")
    if args.json:
        Path(args.json).write_text(dump_json(results))
    if io_error:
        return EXIT_IO
    return EXIT_OK if all(r["ok"] for r in results.values()) else EXIT_INVALID


def cmd_fixture(args) -> int:
    cfg = gen_fixture(args.kind, args.out, seed=args.seed, scenes=args.scenes, width=args.width, height=args.height)
    print(cfg)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    result = evaluate(args.pred, args.gt, args.task, threshold=args.threshold, radius_limit=args.radius_limit)
    sys.stdout.write(format_metrics(result))
    if args.json:
        Path(args.json).write_text(dump_json(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scene-augment", description="Insert 3D assets into multi-camera driving scenes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="augment every scene of a dataset")
    g.add_argument("--config", required=True, help="TOML or JSON run configuration")
    g.add_argument("--seed", type=_u64, help="overrides the config seed")
    g.add_argument("--jobs", type=_positive, help="worker processes (overrides the config)")
    g.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="check calibration and coverage of every scene")
    v.add_argument("--dataset", required=True)
    v.add_argument("--min-coverage", type=float, default=DEFAULT_MIN_COVERAGE)
    v.add_argument("--json", help="also write per-scene results here")
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("fixture", help="write a synthetic dataset, assets and config")
    f.add_argument("--kind", required=True, choices=KINDS)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=_u64, default=0)
    f.add_argument("--scenes", type=_positive, default=4)
    f.add_argument("--width", type=_positive, default=640, help="image width in pixels")
    f.add_argument("--height", type=_positive, default=480, help="image height in pixels")
    f.set_defaults(func=cmd_fixture)

    e = sub.add_parser("evaluate", help="score predictions against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--task", required=True, choices=TASKS)
    e.add_argument("--threshold", type=float, default=0.5, help="score threshold for precision/recall/F")
    e.add_argument("--radius-limit", type=float, default=10.0, help="freespace bins beyond this are ignored")
    e.add_argument("--json", help="also write metrics here")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are validation failures
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MetricsUndefinedError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OutputExistsError, DatasetIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
