"""Command line entry point: ``stochrb {offline,evaluate,convergence,validate}``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import StudyConfig, load_config
from .errors import ArtifactError, ConfigurationError, SolverError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("stochrb")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochrb", description="Certified reduced models for random-reactivity problems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    off = sub.add_parser("offline", help="build snapshots, POD bases and reduced models; write an artifact")
    off.add_argument("--config", type=Path, help="JSON study config (defaults if omitted)")
    off.add_argument("--artifact", type=Path, required=True, help="output artifact path")
    off.add_argument("--seed-override", type=int)

    ev = sub.add_parser("evaluate", help="online statistics and bounds at one parameter point")
    ev.add_argument("--artifact", type=Path, required=True)
    ev.add_argument("--mu", type=float, nargs=2, required=True, metavar=("X", "Y"))
    ev.add_argument("--R", type=int, required=True)
    ev.add_argument("--out", type=Path, help="directory for evaluate.json (stdout if omitted)")

    cv = sub.add_parser("convergence", help="error and bound tables over R")
    cv.add_argument("--artifact", type=Path, required=True)
    cv.add_argument("--mode", choices=("pointwise", "l2"), default="pointwise")
    cv.add_argument("--mu", type=float, nargs=2, metavar=("X", "Y"))
    cv.add_argument("--R", type=int, action="append", help="repeatable; defaults to the config R list")
    cv.add_argument("--out", type=Path, required=True)

    va = sub.add_parser("validate", help="run invariant checks against an artifact")
    va.add_argument("--artifact", type=Path, required=True)
    va.add_argument("--out", type=Path, help="directory for validation.txt")
    return p


def _config(args) -> StudyConfig:
    cfg = load_config(args.config) if args.config else StudyConfig()
    if args.seed_override is not None:
        cfg = cfg.with_seed_override(args.seed_override)
    return cfg


def _run(args) -> int:
    # heavy imports deferred so that --help stays fast
    from .artifact import load_artifact
    from .experiments import cmd_convergence, cmd_evaluate, cmd_offline

    if args.command == "offline":
        art = cmd_offline(_config(args), args.artifact)
        print(json.dumps({"artifact": str(args.artifact), **art.meta}))
        return EXIT_OK
    art = load_artifact(args.artifact)
    if args.command == "evaluate":
        text = json.dumps(cmd_evaluate(art, args.mu, args.R), indent=2)
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "evaluate.json").write_text(text + "\n")
        print(text)
        return EXIT_OK
    if args.command == "convergence":
        tables = cmd_convergence(art, args.mode, R_list=args.R, mu=args.mu, out_dir=args.out)
        for q, rows in tables.items():
            print(q)
            for R, err, bnd in rows:
                print(f"  R={R:3d}  error={err:.3e}  bound={bnd:.3e}")
        return EXIT_OK
    from .validate import cmd_validate

    ok, lines, seconds = cmd_validate(art)
    lines.append(f"{'PASSED' if ok else 'FAILED'} in {seconds:.1f} s")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "validation.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_VALIDATION


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigurationError, ArtifactError, IndexError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
