"""Command line front end.

Subcommands: `run` (one backend per seed from a config), `two-stage`
(MAP, then partition from the MAP magnitudes, then the configured
backend), `sweep` (two-stage across a list of subset sizes), `diagnose`
(chain agreement on stored prediction blobs), and `ucda-cert` (noise
recovery certificate for a constructive architecture).

Exit codes: 0 success, 1 runtime failure, 2 config or usage error. Config
problems name the offending field. PARTIAL_BNN_THREADS caps HMC chain
workers.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ConfigError, load_config
from .diagnostics import (
    ChainPredictions,
    agreement_report,
    bootstrap_agreement,
    read_chain_blob,
    save_report,
)
from .experiment import run_experiment, run_sweep, run_two_stage
from .ucda import CLAMP_LIMIT, TAGS, build_constructive, verify_recovery

RECOVERY_THRESHOLD = 1e-10


def _add_config_args(sub):
    sub.add_argument("-c", "--config", required=True, help="path to a YAML or JSON config")
    sub.add_argument("--seed", type=int, default=None, help="run only this seed")
    sub.add_argument("--out", default=None, help="output directory (default: config output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partial-bnn",
        description="partially stochastic network experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_config_args(sub.add_parser("run", help="one backend per configured seed"))
    _add_config_args(sub.add_parser("two-stage", help="MAP, then inference over a derived subset"))
    _add_config_args(sub.add_parser("sweep", help="two-stage across the configured subset sizes"))

    diag = sub.add_parser("diagnose", help="chain agreement on stored prediction blobs")
    diag.add_argument(
        "--chains",
        nargs="+",
        required=True,
        help="blob files: one (points, classes) tensor per chain, or a single "
        "(chains, points, classes) tensor",
    )
    diag.add_argument(
        "--bootstrap-samples",
        default=None,
        help="optional (samples, points, classes) blob for the bootstrap variant",
    )
    diag.add_argument("--seed", type=int, default=0)
    diag.add_argument("--out", default=None, help="also write the report JSON here")

    cert = sub.add_parser("ucda-cert", help="noise recovery certificate")
    cert.add_argument("--tag", required=True, choices=list(TAGS))
    cert.add_argument("--d", required=True, type=int, help="input dimension")
    cert.add_argument("--m", required=True, type=int, help="noise dimension")
    cert.add_argument("--depth", type=int, default=3, help="hidden layers (tag d)")
    cert.add_argument("--trials", type=int, default=10000)
    cert.add_argument("--bound", type=float, default=5.0, help="noise ball radius")
    cert.add_argument("--seed", type=int, default=0)
    cert.add_argument("--out", default=None, help="also write the certificate JSON here")
    return parser


def _cmd_experiment(args, runner) -> int:
    cfg = load_config(args.config)
    out_dir = args.out if args.out is not None else cfg["output_dir"]
    seeds = None if args.seed is None else [args.seed]
    runner(cfg, out_dir, seeds=seeds)
    print("wrote %s" % out_dir)
    return 0


def _cmd_diagnose(args) -> int:
    arrays = [read_chain_blob(p) for p in args.chains]
    if len(arrays) == 1 and arrays[0].ndim == 3:
        stacked = arrays[0]
    else:
        for path, arr in zip(args.chains, arrays):
            if arr.ndim != 2:
                raise ConfigError(
                    "chains", "%s holds a %d-d tensor, expected (points, classes)" % (path, arr.ndim)
                )
        shapes = {a.shape for a in arrays}
        if len(shapes) > 1:
            raise ConfigError("chains", "chain blobs disagree on shape: %s" % sorted(shapes))
        stacked = np.stack(arrays, axis=0)
    if stacked.shape[0] < 2:
        raise ConfigError("chains", ">=2 chains required")
    report = agreement_report(ChainPredictions(stacked))
    if args.bootstrap_samples is not None:
        samples = read_chain_blob(args.bootstrap_samples)
        report["bootstrap_agreement"] = bootstrap_agreement(samples, seed=args.seed)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        save_report(report, args.out)
    return 0


def _cmd_ucda_cert(args) -> int:
    cnet = build_constructive(args.tag, args.d, args.m, depth=args.depth, bound=args.bound)
    cert = verify_recovery(cnet, n_trials=args.trials, bound=args.bound, seed=args.seed)
    cert["threshold"] = RECOVERY_THRESHOLD
    cert["clamp_limit"] = CLAMP_LIMIT
    cert["pass"] = bool(cert["max_recovery_error"] <= RECOVERY_THRESHOLD)
    print(json.dumps(cert, indent=2, sort_keys=True))
    if args.out:
        save_report(cert, args.out)
    return 0 if cert["pass"] else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_experiment(args, run_experiment)
        if args.command == "two-stage":
            return _cmd_experiment(args, run_two_stage)
        if args.command == "sweep":
            return _cmd_experiment(args, run_sweep)
        if args.command == "diagnose":
            return _cmd_diagnose(args)
        return _cmd_ucda_cert(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print("missing file: %s" % exc, file=sys.stderr)
        return 2
    except (ValueError, TypeError, OSError, np.linalg.LinAlgError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
