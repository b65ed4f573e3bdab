"""Command line: ``membrana run|compare|sort|trace``.

Exit status is 0 on success, 1 on a domain error (bad input file, bad
value, failed verification) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from typing import IO, Iterator, Sequence

from .comparator import ComparatorError, comparator_spec, run_comparator
from .core import Membrane, format_structure
from .dsl import DslError, parse_system, serialize_system
from .engine import (DEFAULT_MAX_STEPS, MAXIMAL, Configuration, EngineError, Mode,
                     TraceFormatError, read_trace, replay, run_to_halt, write_trace)
from .sorter import SORTER_TEXT, insert, new_sorter, read_sorted

SEED_ENV = "MEMBRANA_SEED"
RESULT_VERSION = 1


class CliError(Exception):
    """Domain error reported with exit status 1."""


def _mode(text: str) -> Mode:
    try:
        return Mode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return v


def _positive(text: str) -> int:
    v = _nonneg(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _seed(args, fallback: int | None = None) -> int:
    if args.seed is not None:
        return args.seed
    if fallback is not None:
        return fallback
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"{SEED_ENV} is not an integer: {env!r}") from None


def _emit(args, out: IO[str], text: str, payload: dict) -> None:
    if args.format == "json":
        out.write(json.dumps({"v": RESULT_VERSION, **payload}, sort_keys=True) + "\n")
    else:
        out.write(text)


def _write_trace(path: str, header: dict, events, config: Configuration, halted: bool) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fp:
            write_trace(fp, header, events, config, halted)
    except OSError as exc:
        raise CliError(f"cannot write trace {path}: {exc.strerror}") from None


def _contents_lines(root: Membrane) -> list[str]:
    lines = []

    def visit(node: Membrane, level: int) -> None:
        lines.append(f"{'  ' * level}{node.label}: {node.contents or '-'}")
        for ch in node.children:
            visit(ch, level + 1)

    visit(root, 1)
    return lines


def _membrane_json(node: Membrane) -> dict:
    return {"id": node.id, "label": node.label, "contents": node.contents.as_dict(),
            "children": [_membrane_json(c) for c in node.children]}


# ------------------------------------------------------------- commands

def cmd_run(args, out: IO[str]) -> int:
    try:
        with open(args.file, encoding="utf-8") as fp:
            text = fp.read()
    except OSError as exc:
        raise CliError(f"cannot read {args.file}: {exc.strerror}") from None
    try:
        spec = parse_system(text)
    except DslError as exc:
        raise CliError(f"{args.file}: {exc}") from None
    mode = args.mode or spec.mode
    seed = _seed(args, spec.seed)
    config = spec.build(seed=seed)
    record = args.trace is not None
    result = run_to_halt(config, mode, max_steps=args.max_steps, record=record)
    if record:
        header = {"spec": serialize_system(spec), "mode": str(mode), "seed": seed}
        _write_trace(args.trace, header, result.trace, config, result.halted)
    text = "\n".join([f"halted={str(result.halted).lower()} steps={result.steps}",
                      f"structure: {format_structure(config.root)}",
                      *_contents_lines(config.root)]) + "\n"
    _emit(args, out, text, {"command": "run", "system": spec.name, "mode": str(mode),
                            "seed": seed, "halted": result.halted, "steps": result.steps,
                            "configuration": _membrane_json(config.root)})
    return 0


def cmd_compare(args, out: IO[str]) -> int:
    mode = args.mode or MAXIMAL
    seed = _seed(args)
    spec = comparator_spec(args.x, args.y, args.minimizing, mode, seed)
    config = spec.build()
    if args.trace is not None:
        run = run_to_halt(config, mode, max_steps=args.max_steps)
        header = {"spec": serialize_system(spec), "mode": str(mode), "seed": seed}
        _write_trace(args.trace, header, run.trace, config, run.halted)
        config = spec.build()
    try:
        res = run_comparator(config, mode, max_steps=args.max_steps)
    except ComparatorError as exc:
        raise CliError(str(exc)) from None
    payload = {"command": "compare", "x": args.x, "y": args.y, "mode": str(mode), "seed": seed,
               "min": res.min_value, "max": res.max_value, "steps": res.steps,
               "h1": res.h1_value, "h2": res.h2_value, "minimizing": args.minimizing}
    if args.minimizing:
        text = f"h1-side={res.h1_value} h2-side={res.h2_value} steps={res.steps}\n"
    else:
        text = f"min={res.min_value} max={res.max_value} steps={res.steps}\n"
    _emit(args, out, text, payload)
    return 0


def _tokens(stream: IO[str]) -> Iterator[str]:
    # line by line, so --online settles each value as soon as it is typed
    for line in iter(stream.readline, ""):
        yield from line.split()


def _parse_value(token: str) -> int:
    try:
        v = int(token)
    except ValueError:
        raise CliError(f"invalid value {token!r}: not an integer") from None
    if v < 1:
        raise CliError(f"invalid value {token!r}: values must be >= 1 "
                       "(an empty multiset is indistinguishable from absence)")
    return v


def cmd_sort(args, out: IO[str], stdin: IO[str]) -> int:
    mode = args.mode or MAXIMAL
    seed = _seed(args)
    state = new_sorter(mode, seed, record=args.trace is not None, max_steps=args.max_steps)
    inserted = []
    with contextlib.ExitStack() as stack:
        if args.values:
            tokens: Iterator[str] = iter(args.values)
        elif args.file:
            try:
                stream = stack.enter_context(open(args.file, encoding="utf-8"))
            except OSError as exc:
                raise CliError(f"cannot read {args.file}: {exc.strerror}") from None
            tokens = _tokens(stream)
        else:
            tokens = _tokens(stdin)
        for tok in tokens:
            v = _parse_value(tok)
            try:
                insert(state, v)
            except EngineError as exc:
                raise CliError(str(exc)) from None
            inserted.append(v)
            if args.online:
                current = read_sorted(state)
                _emit(args, out, " ".join(map(str, current)) + "\n",
                      {"command": "sort", "prefix": len(inserted), "sorted": current})
                out.flush()
    result = read_sorted(state)
    stats = state.stats
    if state.events is not None:
        header = {"spec": SORTER_TEXT, "mode": str(mode), "seed": seed}
        _write_trace(args.trace, header, state.events, state.config, True)
    if not args.online:
        text = " ".join(map(str, result)) + "\n" if result else ""
        _emit(args, out, text, {"command": "sort", "sorted": result,
                                "settlements": stats.settlements,
                                "reproductions": stats.reproductions, "steps": stats.steps})
    if args.stats and args.format == "text":
        out.write(f"settlements={stats.settlements} reproductions={stats.reproductions} "
                  f"steps={stats.steps}\n")
    return 0


def cmd_trace(args, out: IO[str], err: IO[str]) -> int:
    if args.seed is not None:
        err.write("warning: --seed ignored, the trace is authoritative\n")
    if args.mode is not None:
        err.write("warning: --mode ignored, the trace is authoritative\n")
    try:
        with open(args.tracefile, encoding="utf-8") as fp:
            trace = read_trace(fp)
    except OSError as exc:
        raise CliError(f"cannot read {args.tracefile}: {exc.strerror}") from None
    except TraceFormatError as exc:
        raise CliError(str(exc)) from None
    try:
        spec = parse_system(trace.header["spec"])
        initial = spec.build(seed=int(trace.header.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"trace header does not describe a system: {exc}") from None
    try:
        final = replay(initial, trace.events)
    except (EngineError, ValueError) as exc:
        raise CliError(f"replay failed: {exc}") from None
    expected = trace.end.get("hash")
    actual = final.state_hash()
    if actual != expected:
        raise CliError(f"state hash mismatch: trace {expected}, replay {actual}")
    text = f"verified steps={final.step_counter} hash={actual}\n"
    _emit(args, out, text, {"command": "trace", "verified": True,
                            "steps": final.step_counter, "hash": actual})
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", type=_mode, default=None,
                        help="sequential, minimal, bounded K or maximal")
    common.add_argument("--seed", type=int, default=None,
                        help=f"generator seed (default: ${SEED_ENV}, else 0)")
    common.add_argument("--max-steps", type=_positive, default=DEFAULT_MAX_STEPS)
    common.add_argument("--trace", metavar="PATH", default=None,
                        help="write a JSONL trace to PATH")
    common.add_argument("--format", choices=("text", "json"), default="text")

    parser = argparse.ArgumentParser(
        prog="membrana", description="Membrane system simulator: run, compare, sort, trace.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a .psys system to halt")
    p.add_argument("file")

    p = sub.add_parser("compare", parents=[common], help="compare two integers")
    p.add_argument("x", type=_nonneg)
    p.add_argument("y", type=_nonneg)
    p.add_argument("--minimizing", action="store_true",
                   help="max ends in h1, min in h2")

    p = sub.add_parser("sort", parents=[common], help="sort positive integers online")
    p.add_argument("values", nargs="*", help="values; read from --file or stdin when omitted")
    p.add_argument("--file", default=None)
    p.add_argument("--online", action="store_true",
                   help="print the sorted prefix after each insertion")
    p.add_argument("--stats", action="store_true")

    p = sub.add_parser("trace", parents=[common], help="replay and verify a trace file")
    p.add_argument("tracefile")
    return parser


def main(argv: Sequence[str] | None = None, stdin: IO[str] | None = None,
         stdout: IO[str] | None = None, stderr: IO[str] | None = None) -> int:
    stdin = stdin or sys.stdin
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return cmd_run(args, out)
        if args.command == "compare":
            return cmd_compare(args, out)
        if args.command == "sort":
            return cmd_sort(args, out, stdin)
        return cmd_trace(args, out, err)
    except CliError as exc:
        err.write(f"membrana: error: {exc}\n")
        return 1
