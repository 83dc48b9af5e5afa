"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 usage or config error,
3 certification failure, 4 estimator precondition violation, 5 sampler
threshold overflow.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import CertificationError, ModelError, PreconditionError, ThresholdOverflow
from .experiments import (
    METHODS,
    cmd_classify,
    cmd_clt_test,
    cmd_renewal,
    cmd_simulate,
    cmd_validate,
    cmd_variance,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_CERTIFICATION = 3
EXIT_PRECONDITION = 4
EXIT_OVERFLOW = 5

COMMANDS = ("simulate", "variance", "renewal", "classify", "clt-test", "validate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gchains",
        description="Exact regenerative simulation and variance estimation for binary chains with infinite memory.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI file with [model] and [experiment] sections")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--replicas", type=int, help="number of independent replicas")
    common.add_argument("--n", type=int, help="trajectory length")
    common.add_argument("--out", help="output directory")
    common.add_argument("--max-lag", type=int, dest="max_lag", help="fixed autocovariance lag (default: regeneration-tail policy)")
    common.add_argument("--margin", type=int, help="renewal confirmation margin (default: smallest meeting the bias tolerance)")
    common.add_argument(
        "--allow-uncertified",
        action="store_true",
        default=None,
        dest="allow_uncertified",
        help="simulate even when the minorization product cannot be certified positive",
    )
    common.add_argument("--workers", type=int, help="worker processes; results do not depend on this")
    common.add_argument("--quiet", action="store_true", help="do not print the JSON report")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("simulate", parents=[common], help="write trajectories and a run manifest")
    pv = sub.add_parser("variance", parents=[common], help="estimate the limiting variance")
    pv.add_argument("--method", choices=(*METHODS, "all"), default="all")
    sub.add_parser("renewal", parents=[common], help="return probabilities and gap laws")
    sub.add_parser("classify", parents=[common], help="decay class, limit-theorem regime and uniqueness")
    sub.add_parser("clt-test", parents=[common], help="normality and path-variance diagnostics")
    sub.add_parser("validate", parents=[common], help="run the invariant suite")
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        seed=args.seed,
        replicas=args.replicas,
        n=args.n,
        out=args.out,
        max_lag=args.max_lag,
        margin=args.margin,
        allow_uncertified=args.allow_uncertified,
        workers=args.workers,
    )


def _dispatch(args: argparse.Namespace, cfg: ExperimentConfig):
    if args.command == "simulate":
        return cmd_simulate(cfg)
    if args.command == "variance":
        return cmd_variance(cfg, args.method)
    if args.command == "renewal":
        return cmd_renewal(cfg)
    if args.command == "classify":
        return cmd_classify(cfg)
    if args.command == "clt-test":
        return cmd_clt_test(cfg)
    return cmd_validate(cfg)


def _error(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
    except (ModelError, OSError, ValueError) as exc:
        return _error("usage", exc, EXIT_USAGE)
    try:
        result = _dispatch(args, cfg)
    except CertificationError as exc:
        return _error("certification", exc, EXIT_CERTIFICATION)
    except ThresholdOverflow as exc:
        return _error("threshold_overflow", exc, EXIT_OVERFLOW)
    except PreconditionError as exc:
        return _error("precondition", exc, EXIT_PRECONDITION)
    except ModelError as exc:
        return _error("usage", exc, EXIT_USAGE)
    if not args.quiet:
        from .results import dumps

        sys.stdout.write(dumps(result.payload))
    return EXIT_VALIDATION if result.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
