"""Command-line driver.

Subcommands: solve (one target), experiment (a seeded grid), oracle
(exhaustive scan), targets (target-set generation), pauli (qubit-operator
export), summarize (aggregate a records file).

Exit codes: 0 success, 1 usage error, 2 runtime failure.  The SSR_LOG
environment variable (error, info, debug) sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import StackseqError
from .laminate import problem_from_dict
from .oracle import exhaustive_min
from .pauli import gate_cost, pauli_expand, term_census
from .runner import run_experiment, solve_single, summarize
from .targets import inequivalent_targets, kde_uniform_targets

logger = logging.getLogger("stackseq.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    """Bad flags, unreadable config files, or invalid config contents."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise UsageError(message)


def _configure_logging() -> None:
    name = os.environ.get("SSR_LOG", "error").lower()
    if name not in _LOG_LEVELS:
        raise UsageError(f"SSR_LOG must be one of {sorted(_LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(
        level=_LOG_LEVELS[name], format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _load_config(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def _build_problem(config: dict, require_target: bool):
    data = config.get("problem")
    if not isinstance(data, dict):
        raise UsageError("config needs a 'problem' object")
    if require_target and data.get("target") is None:
        raise UsageError("this command needs a 'target' inside the problem")
    try:
        return problem_from_dict(data)
    except StackseqError as exc:
        raise UsageError(f"bad problem config: {exc}") from None


def _emit(data, out: str | None) -> None:
    text = json.dumps(data, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_solve(args) -> int:
    config = _load_config(args.config)
    problem = _build_problem(config, require_target=True)
    plan = config.get("plan")
    if not isinstance(plan, dict):
        raise UsageError("config needs a 'plan' object")
    restarts = args.restarts if args.restarts is not None else int(config.get("restarts", 1))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    result = solve_single(problem, plan, restarts=restarts, seed=seed)
    if args.no_trace:
        result["best"] = {k: v for k, v in result["best"].items() if k != "trace"}
        result["runs"] = [{k: v for k, v in r.items() if k != "trace"} for r in result["runs"]]
    _emit(result, args.out)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    records = run_experiment(
        args.config,
        out=args.out,
        jobs=args.jobs,
        resume=args.resume,
        seed=args.seed,
    )
    if args.out is None:
        for rec in records:
            sys.stdout.write(json.dumps(rec.to_json_dict()) + "\n")
    else:
        n_failed = sum(1 for r in records if r.error is not None)
        _emit({"n_records": len(records), "n_failed": n_failed, "out": args.out}, None)
    return EXIT_OK


def _cmd_oracle(args) -> int:
    config = _load_config(args.config)
    problem = _build_problem(config, require_target=True)
    result = exhaustive_min(
        problem,
        include_penalties=not args.no_penalties,
        histogram_bins=args.histogram,
    )
    payload = {
        "min_value": result.min_loss,
        "n_evaluated": result.n_evaluated,
        "n_argmin": len(result.argmin_set),
        "argmin": [list(s) for s in result.argmin_set[: args.limit]],
    }
    if result.histogram is not None:
        counts, edges = result.histogram
        payload["histogram"] = {"counts": counts.tolist(), "edges": edges.tolist()}
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_targets(args) -> int:
    config = _load_config(args.config)
    problem = _build_problem(config, require_target=False)
    if args.method == "inequivalent":
        ts = inequivalent_targets(problem, count=args.count, seed=args.seed or 0)
    else:
        ts = kde_uniform_targets(
            problem, n_samples=args.samples, count=args.count, seed=args.seed or 0
        )
    _emit(ts.to_json_dict(), args.out)
    return EXIT_OK


def _cmd_pauli(args) -> int:
    config = _load_config(args.config)
    problem = _build_problem(config, require_target=True)
    expansion = pauli_expand(problem, include_disorientation=not args.no_disorientation)
    payload = expansion.to_json_dict()
    payload["census"] = {str(w): n for w, n in term_census(expansion).items()}
    payload["gate_cost"] = gate_cost(expansion)
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_summarize(args) -> int:
    records = []
    for path in args.records:
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as exc:
            raise UsageError(f"cannot read records {path}: {exc}") from None
        records.extend(json.loads(s) for s in lines if s.strip())
    rows = summarize(records, require_single_config=len(args.records) == 1)
    _emit(rows, args.out)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="stackseq", description="Stacking-sequence retrieval tools.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("solve", help="solve one target with restarts")
    p.add_argument("--config", required=True, help="JSON with problem (incl. target) and plan")
    p.add_argument("--out", help="write the result JSON here instead of stdout")
    p.add_argument("--restarts", type=int, help="override the config restart count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--no-trace", action="store_true", help="drop per-sweep traces")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("experiment", help="run a target x restart x plan grid")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", help="output directory for records.jsonl")
    p.add_argument("--jobs", type=int, help="parallel grid cells")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--resume", action="store_true", help="skip cells already recorded")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("oracle", help="exhaustive scan of small problems")
    p.add_argument("--config", required=True, help="JSON with problem (incl. target)")
    p.add_argument("--out", help="write the result JSON here instead of stdout")
    p.add_argument("--no-penalties", action="store_true", help="scan the pure loss")
    p.add_argument("--limit", type=int, default=10, help="max argmin sequences listed")
    p.add_argument("--histogram", type=int, help="also return a value histogram")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("targets", help="generate a target set")
    p.add_argument("--config", required=True, help="JSON with the problem (target ignored)")
    p.add_argument("--method", choices=("inequivalent", "kde"), required=True)
    p.add_argument("--count", type=int, required=True, help="number of targets")
    p.add_argument("--samples", type=int, default=5000, help="KDE sample pool size")
    p.add_argument("--seed", type=int, help="sampler seed (default 0)")
    p.add_argument("--out", help="write the target set here instead of stdout")
    p.set_defaults(func=_cmd_targets)

    p = sub.add_parser("pauli", help="export the qubit-operator expansion")
    p.add_argument("--config", required=True, help="JSON with problem (incl. target)")
    p.add_argument("--out", help="write the expansion here instead of stdout")
    p.add_argument(
        "--no-disorientation",
        action="store_true",
        help="expand the loss only, without the disorientation penalty",
    )
    p.set_defaults(func=_cmd_pauli)

    p = sub.add_parser("summarize", help="aggregate a records.jsonl file")
    p.add_argument("records", nargs="+", help="records.jsonl paths")
    p.add_argument("--out", help="write the summary rows here instead of stdout")
    p.set_defaults(func=_cmd_summarize)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        _configure_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"stackseq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StackseqError as exc:
        print(f"stackseq: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        logger.debug("unhandled failure", exc_info=True)
        print(f"stackseq: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
