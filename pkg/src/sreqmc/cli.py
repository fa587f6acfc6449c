"""Command-line entry point: ``sreqmc run|oracle|stats``.

Exit codes: 0 success, 2 configuration error, 3 runtime error. Failures print
a JSON error document on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sreqmc", description="Non-equilibrium QMC estimates of magic and entanglement.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sample work paths and estimate the configured quantity")
    run.add_argument("--config", required=True)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--seed", type=int, default=None, help="u64 seed, overrides rng.seed")
    run.add_argument("--resume", action="store_true", help="continue an interrupted run in place")
    run.add_argument("--out", default=None, help="output directory (default: output.directory)")

    orc = sub.add_parser("oracle", help="exact value for a small system, same result schema")
    orc.add_argument("--config", required=True)
    orc.add_argument("--seed", type=int, default=None)
    orc.add_argument("--finite-m", action="store_true", help="projector state at the configured m")
    orc.add_argument("--out", default=None)

    st = sub.add_parser("stats", help="work statistics, histograms and SNR fits of paths files")
    st.add_argument("paths", nargs="+")
    st.add_argument("--sizes", type=int, nargs="+", default=None)
    st.add_argument("--bins", type=int, default=20)
    st.add_argument("--out", default="stats")
    return p


def _load(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            from .config import ConfigError
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_run(args) -> dict:
    from .runner import run

    if args.workers < 1:
        raise _UsageError("--workers must be >= 1")
    cfg = _load(args)
    doc = run(cfg, args.out, workers=args.workers, resume=args.resume)
    return {"estimate": doc["estimate"], "stderr": doc["stderr"], "run_id": doc["run_id"],
            "output": str(Path(args.out or cfg.output_directory))}


def _cmd_oracle(args) -> dict:
    from .runner import RESULT_FILE, oracle_result, write_json

    cfg = _load(args)
    doc = oracle_result(cfg, finite_m=args.finite_m)
    out = Path(args.out or cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / RESULT_FILE, doc)
    return {"estimate": doc["estimate"], "exact": doc["exact"], "output": str(out)}


def _cmd_stats(args) -> dict:
    from .runner import stats_report

    rep = stats_report(args.paths, args.out, sizes=args.sizes, bins=args.bins)
    return {"output": args.out, "snr_fit": rep.get("snr_fit")}


def _error(kind: str, message: str, code: int, key: Optional[str] = None) -> int:
    doc = {"error": {"type": kind, "message": message, "exit_code": code}}
    if key is not None:
        doc["error"]["key"] = key
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .config import ConfigError

    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        return _error("usage", str(exc), EXIT_CONFIG)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    handler = {"run": _cmd_run, "oracle": _cmd_oracle, "stats": _cmd_stats}[args.command]
    try:
        summary = handler(args)
    except ConfigError as exc:
        return _error("config", str(exc), EXIT_CONFIG, exc.key)
    except _UsageError as exc:
        return _error("usage", str(exc), EXIT_CONFIG)
    except FileNotFoundError as exc:
        return _error("config" if args.command != "stats" else "runtime", str(exc),
                      EXIT_CONFIG if args.command != "stats" else EXIT_RUNTIME)
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        if args.verbose:
            traceback.print_exc()
        return _error(type(exc).__name__, str(exc), EXIT_RUNTIME)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
