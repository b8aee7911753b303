"""Command line entry point ``wienermonge``.

Exit codes: 0 pass, 2 tolerance failure or replay mismatch, 3 invalid
input, 4 internal error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from .config import COMMANDS, build_config, load_yaml
from .errors import InvalidInputError, ToleranceError
from .runner import OUT_ENV, replay, run_pipeline

EXIT_PASS, EXIT_TOLERANCE, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="wienermonge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="YAML experiment configuration")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--out", type=Path, help=f"output directory (default under ${OUT_ENV} or ./runs)")
        s.add_argument("--tol-override", action="append", default=[], metavar="KEY=VALUE",
                       help="override one tolerance; repeatable")
        s.add_argument("--no-plots", action="store_true")
    r = sub.add_parser("replay")
    r.add_argument("summary", type=Path, help="summary.json of a previous run")
    return p


def _diagnostic(kind, exc):
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            res = replay(args.summary)
            print(("PASS " if res.passed else "FAIL ") + res.message)
            if not res.passed and res.line is not None:
                print(f"  recorded: {res.recorded}\n  replayed: {res.replayed}")
            return EXIT_PASS if res.passed else EXIT_TOLERANCE
        raw = load_yaml(args.config) if args.config else {}
        cfg = build_config(args.command, raw, seed=args.seed, overrides=args.tol_override)
        if args.no_plots:
            cfg.plots = False
        result = run_pipeline(cfg, args.out)
        print(json.dumps({"status": result.status, "out": str(result.out_dir),
                          "metrics": result.summary["metrics"]}, indent=1))
        return result.exit_code
    except InvalidInputError as exc:
        _diagnostic("invalid-input", exc)
        return EXIT_INPUT
    except ToleranceError as exc:
        _diagnostic("tolerance", exc)
        return EXIT_TOLERANCE
    except Exception as exc:  # noqa: BLE001
        _diagnostic("internal", exc)
        logging.getLogger(__name__).debug("internal error", exc_info=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
