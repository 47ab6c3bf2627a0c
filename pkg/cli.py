"""
Command-line front end.

    python cli.py profile --dimension 3 --sources candidate,lower_bound
    python cli.py verify --suite lemmas
    python cli.py figure1 --out out/figure1.csv
    python cli.py oracle --dimension 2 --grid-n 4 --ks 1,2,3
    python cli.py optimize --dimension 2 --volume 0.3 --grid-n 128

Exit codes: 0 success, 1 a checked invariant failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from backend import __version__
from backend.config import FORMATS, SOURCES, SUITES, configure_logging, resolve_run_config
from backend.errors import ToolkitError
from backend.reports import run_command

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_USAGE = 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output path (default under OUTPUT_DIR)")
    p.add_argument("--format", choices=FORMATS, help="table format (default csv)")
    p.add_argument("--seed", type=int, help="random seed (default DEFAULT_SEED)")
    p.add_argument("--config", help="key=value file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Relative isoperimetry of the unit cube.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("profile", help="profile table for one dimension")
    _common(p)
    p.add_argument("-d", "--dimension", type=int)
    p.add_argument("--points", type=int, help="uniform lambda grid size")
    p.add_argument("--lambdas", help="comma-separated lambda values (overrides --points)")
    p.add_argument("--sources", help=f"comma-separated subset of {','.join(SOURCES)}")
    p.add_argument("--grid-n", type=int, help="optimizer grid for the numerical source")
    p.add_argument("--init", help="optimizer initial field")
    p.add_argument("--max-iterations", type=int)

    p = sub.add_parser("verify", help="run a verification suite")
    _common(p)
    p.add_argument("--suite", help=f"one of {','.join(SUITES)}")
    p.add_argument("--fuzz-count", type=int, help="configurations per fuzz family")

    p = sub.add_parser("figure1", help="profiles for d = 1, 2, 3 and the Gaussian bound")
    _common(p)

    p = sub.add_parser("oracle", help="exhaustive discrete minima")
    _common(p)
    p.add_argument("-d", "--dimension", type=int)
    p.add_argument("--grid-n", type=int)
    p.add_argument("--ks", help="comma-separated cell counts (default 1..N/2)")
    p.add_argument("--symmetry", action="store_true", default=None)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("optimize", help="phase-field upper bound at one volume")
    _common(p)
    p.add_argument("-d", "--dimension", type=int)
    p.add_argument("--volume", type=float)
    p.add_argument("--grid-n", type=int)
    p.add_argument("--init")
    p.add_argument("--max-iterations", type=int)

    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    skip = {"command", "config", "log_level"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level.upper() if args.log_level else None)

    try:
        cfg = resolve_run_config(args.command, _flags(args), args.config)
    except (ValidationError, ValueError, FileNotFoundError) as e:
        print(f"[cli.py] invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        result = run_command(cfg)
    except ToolkitError as e:
        print(f"[cli.py] {cfg.command} failed: {e}", file=sys.stderr)
        return EXIT_USAGE

    if cfg.command == "verify":
        print(json.dumps({
            "success": result.payload["success"],
            "checks": result.payload["checks"],
            "failures": result.payload["failures"],
            "summary": str(result.outfile),
        }, sort_keys=True))

    if result.success:
        logger.info("%s: %s -> %s", cfg.command, result.message, result.outfile)
        return EXIT_OK
    logger.error("%s: %s", cfg.command, result.message)
    return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
