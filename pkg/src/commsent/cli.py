"""Command-line entry point.

One subcommand per pipeline stage plus ``all``. Exit codes: 0 success,
1 config validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__, pipeline
from .sentiment import ConvergenceError

log = logging.getLogger(__name__)

# CLI flag -> dotted config key
_OVERRIDES = {
    "rng_seed": "rng_seed",
    "window": "embed.window",
    "dims": "embed.dims",
    "top_words": "embed.top_words",
    "beta": "propagation.beta",
    "knn": "propagation.knn",
    "runs": "propagation.runs",
    "clusters": "analysis.clusters",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="commsent",
        description="community text/user/sentiment representations and their comparison",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="stage")
    stage_help = {
        "ingest": "parse the comment dump into per-community token streams",
        "vectors": "tf-idf text/user matrices reduced to community vectors",
        "embed": "per-community PPMI-SVD word embeddings",
        "induce": "seed-propagated sentiment lexicons and vectors",
        "compare": "pairwise similarity matrices and rank correlations",
        "cluster": "agglomerative clustering and AMI between views",
        "misalign": "z2 rank-shift misalignment between views",
        "report": "aggregate JSON/text report",
        "all": "run every stage in order",
    }
    for name in pipeline.STAGES + ("all",):
        sp = sub.add_parser(name, help=stage_help[name])
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--workers", type=int, default=1,
                        help="parallel workers for per-community stages")
        sp.add_argument("--rng-seed", type=int, dest="rng_seed")
        sp.add_argument("--window", type=int, help="co-occurrence window")
        sp.add_argument("--beta", type=float, help="walk damping factor")
        sp.add_argument("--knn", type=int, help="graph nearest-neighbor count")
        sp.add_argument("--runs", type=int, help="bootstrap run count")
        sp.add_argument("--dims", type=int, help="embedding dimensions")
        sp.add_argument("--top-words", type=int, dest="top_words",
                        help="vocabulary cut for sentiment induction")
        sp.add_argument("--clusters", type=int, help="cluster count")
        sp.add_argument("--export-neighbors", action="store_true",
                        help="write nearest-neighbor lists next to embeddings")
        sp.add_argument("--force", action="store_true",
                        help="recompute even when the cache is valid")
        sp.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    overrides = {dotted: getattr(args, attr) for attr, dotted in _OVERRIDES.items()}
    try:
        cfg = pipeline.validate_config(
            args.config,
            overrides=overrides,
            out_dir=args.out,
            workers=args.workers,
            export_neighbors=args.export_neighbors,
        )
    except pipeline.ConfigError as exc:
        for message in exc.errors:
            print(f"config error: {message}", file=sys.stderr)
        return 1

    stages = pipeline.STAGES if args.command == "all" else (args.command,)
    try:
        for stage in stages:
            record = pipeline.run_stage(stage, cfg, force=args.force)
            if record["status"] == "cache_hit":
                print(f"{stage}: cache hit")
            else:
                print(f"{stage}: done ({record.get('duration_s', 0):.1f}s)")
    except pipeline.PrerequisiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (pipeline.StageError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
