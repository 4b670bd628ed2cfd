"""Command-line front end: run, grid, verify, fit, and trace-dump.

Exit codes: 0 when every verifiable cell honors its bounds, 1 when any cell
violates one, 2 for configuration or file errors.  The output directory is
resolved as: ``--out`` flag, then the RESTARTFOM_OUT environment variable,
then the config's ``out`` entry, then ``./runs``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from restartfom.errors import ConfigError, ParameterError
from restartfom.harness import (
    DEFAULT_OUTPUT_DIR,
    FIT_FIELDS,
    OUTPUT_DIR_ENV,
    fit_rate,
    load_summaries,
    parse_config,
    resolve_output_dir,
    run_cell,
    run_grid,
    verify_bounds,
)
from restartfom.traces import SchemeTrace


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="JSON experiment configuration file")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory (beats RESTARTFOM_OUT and the config)")
    parser.add_argument("--seed", type=int, metavar="INT",
                        help="replace the config's seed list with this one seed")
    parser.add_argument("--budget", type=int, metavar="INT",
                        help="replace the config's period/time budget")


def _load_config(args):
    if not args.config:
        raise ConfigError("--config", "this command requires a configuration file")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError(str(args.config), f"cannot read config: {exc}") from exc
    config = parse_config(text)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", f"expected a nonnegative seed, got {args.seed}")
        config = dataclasses.replace(config, seeds=(args.seed,))
    if args.budget is not None:
        if args.budget <= 0:
            raise ConfigError("--budget", f"expected a positive budget, got {args.budget}")
        config = dataclasses.replace(config, budget=float(args.budget))
    return config


def _output_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    if args.config:
        config = parse_config(Path(args.config).read_text())
        if config.out:
            return Path(config.out)
    return Path(DEFAULT_OUTPUT_DIR)


def _report_exit(report) -> int:
    for line in report.lines():
        print(line)
    return 0 if report.all_compliant else 1


def cmd_run(args) -> int:
    config = _load_config(args)
    if len(config.eps) != 1:
        raise ConfigError("eps", "the run command expects exactly one accuracy; use grid")
    directory = resolve_output_dir(config, args.out)
    directory.mkdir(parents=True, exist_ok=True)
    summary = run_cell(config, config.eps[0], config.seeds[0], out_dir=directory)
    print(json.dumps(summary.to_json(), indent=2))
    if summary.error is not None:
        print(f"cell failed: {summary.error}", file=sys.stderr)
        return 2
    return 1 if summary.compliant is False else 0


def cmd_grid(args) -> int:
    config = _load_config(args)
    summaries = run_grid(config, out_dir=args.out)
    for summary in summaries:
        if summary.error is not None:
            print(f"eps={summary.eps!r} seed={summary.seed}: {summary.error}",
                  file=sys.stderr)
    directory = resolve_output_dir(config, args.out)
    print(f"wrote {len(summaries)} cells to {directory}")
    return _report_exit(verify_bounds(summaries))


def cmd_verify(args) -> int:
    summaries = load_summaries(_output_dir(args))
    return _report_exit(verify_bounds(summaries))


def cmd_fit(args) -> int:
    summaries = load_summaries(_output_dir(args))
    print(fit_rate(summaries, args.model, field=args.field).line())
    return 0


def cmd_trace_dump(args) -> int:
    trace, summary = SchemeTrace.read_jsonl(args.trace)
    for event in trace.events:
        parts = [f"t={event.t:.6f}", f"copy={event.copy}", event.kind,
                 f"value={event.value!r}"]
        if event.source is not None:
            parts.append(f"source={event.source}")
        if event.sender is not None:
            parts.append(f"sender={event.sender}")
        if event.receiver is not None:
            parts.append(f"receiver={event.receiver}")
        if event.point is not None:
            parts.append(f"point={list(event.point)!r}")
        print(" ".join(parts))
    if summary is not None:
        print("summary: " + json.dumps(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restartfom",
        description="Benchmark harness for the parallel restart scheme.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a single (eps, seed) cell")
    _add_common_flags(run)
    run.set_defaults(handler=cmd_run)

    grid = commands.add_parser("grid", help="run every (eps, seed) cell of a config")
    _add_common_flags(grid)
    grid.set_defaults(handler=cmd_grid)

    verify = commands.add_parser("verify", help="check stored summaries against bounds")
    _add_common_flags(verify)
    verify.set_defaults(handler=cmd_verify)

    fit = commands.add_parser("fit", help="fit a summary column against a scaling model")
    fit.add_argument("model", choices=("log", "power"))
    fit.add_argument("--field", default="time_to_eps", choices=FIT_FIELDS,
                     help="summary column to fit (default: measured time)")
    _add_common_flags(fit)
    fit.set_defaults(handler=cmd_fit)

    dump = commands.add_parser("trace-dump", help="print a JSONL trace readably")
    dump.add_argument("trace", metavar="PATH")
    _add_common_flags(dump)
    dump.set_defaults(handler=cmd_trace_dump)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
