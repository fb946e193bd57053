"""Command-line front end.

Subcommands: check, split, compile, eval, solve, bench.  The sub-program is
selected by exactly one of ``--lambda-idx FILE``, ``--markers`` (the
default), ``--constraints-only`` or ``--suggest``.

Exit status: 0 on success (an INCOHERENT verdict included), 1 on program
errors, 2 when a budget is exhausted.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import analysis
from .bench import DEFAULTS, SCENARIOS, bench
from .language import AspError, Program, canonical_text, format_atoms, parse_with_markers
from .plancomp import BACKENDS, cache_get_or_build
from .solve import (DEFAULT_CANDIDATE_BUDGET, DEFAULT_GROUND_BUDGET, INCOHERENT, BudgetExceeded,
                    SolveOptions, perfect_model, solve)

EXIT_OK, EXIT_PROGRAM, EXIT_BUDGET = 0, 1, 2


def _read_programs(paths: list[str]) -> tuple[Program, frozenset[int]]:
    text = "".join(Path(p).read_text() + "\n" for p in paths)
    return parse_with_markers(text)


def _selection(args, program: Program, markers: frozenset[int]) -> frozenset[int]:
    if args.lambda_idx:
        return analysis.read_selection_file(args.lambda_idx)
    if args.constraints_only:
        return analysis.constraints_only(program)
    if args.suggest:
        return analysis.suggest_subprogram(program)
    return markers


def _split(args):
    program, markers = _read_programs(args.programs)
    selection = _selection(args, program, markers)
    return program, analysis.split_program(program, selection)


def _write_stats(args, doc: dict) -> None:
    if args.stats:
        Path(args.stats).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_check(args) -> int:
    program, markers = _read_programs(args.programs)
    selection = _selection(args, program, markers)
    report = analysis.selection_report(program, selection)
    print(report.describe())
    _write_stats(args, {"command": "check", "selection": sorted(selection),
                        "compilable": report.compilable})
    return EXIT_OK if report.compilable else EXIT_PROGRAM


def cmd_split(args) -> int:
    _, sp = _split(args)
    for title, part in (("pi'", sp.pi_prime), ("lambda_R", sp.lambda_r), ("lambda_C", sp.lambda_c)):
        print(f"% {title}")
        sys.stdout.write(canonical_text(part))
    _write_stats(args, {"command": "split", "pi_prime": len(sp.pi_prime),
                        "lambda_r": len(sp.lambda_r), "lambda_c": len(sp.lambda_c)})
    return EXIT_OK


def cmd_compile(args) -> int:
    _, sp = _split(args)
    t = time.perf_counter()
    handle = cache_get_or_build(sp.lam, args.backend, args.cache)
    elapsed = time.perf_counter() - t
    print(handle.digest)
    _write_stats(args, {"command": "compile", "digest": handle.digest, "backend": args.backend,
                        "cache_hit": handle.cache_hit, "times": {"compile": elapsed}})
    return EXIT_OK


def cmd_eval(args) -> int:
    program, _ = _read_programs(args.programs)
    t = time.perf_counter()
    model = perfect_model(program, args.backend, args.cache)
    elapsed = time.perf_counter() - t
    print(model if model is INCOHERENT else format_atoms(model))
    _write_stats(args, {"command": "eval", "atoms": 0 if model is INCOHERENT else len(model),
                        "times": {"evaluate": elapsed}})
    return EXIT_OK


def _options(args) -> SolveOptions:
    return SolveOptions(backend=args.backend, cache_dir=args.cache, solver_cmd=args.solver_cmd,
                        budget_ground=args.budget_ground, budget_candidates=args.budget_candidates)


def cmd_solve(args) -> int:
    _, sp = _split(args)
    result = solve(sp.pi_prime, sp.lam, _options(args))
    print(result.answer if result.incoherent else format_atoms(result.answer))
    _write_stats(args, {"command": "solve", "outcome": "INCOHERENT" if result.incoherent else "model",
                        **result.stats.as_dict()})
    return EXIT_OK


def cmd_bench(args) -> int:
    report = bench(args.scenario, args.n, args.density, args.seed, args.instances,
                   _options(args), timings=args.timings)
    text = report.to_json()
    sys.stdout.write(text)
    if args.stats:
        Path(args.stats).write_text(text)
    return EXIT_OK


def _common(p: argparse.ArgumentParser, programs: bool = True, selection: bool = True) -> None:
    if programs:
        p.add_argument("programs", nargs="+", metavar="PROGRAM",
                       help="program and fact files, read in order as one program")
    if selection:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--lambda-idx", metavar="FILE",
                       help="file of 1-based rule indices forming the compiled part")
        g.add_argument("--markers", action="store_true",
                       help="compile the rules preceded by a %%@compile comment (default)")
        g.add_argument("--constraints-only", action="store_true",
                       help="compile exactly the constraints")
        g.add_argument("--suggest", action="store_true",
                       help="compile a greedily chosen compilable part")
    p.add_argument("--backend", choices=BACKENDS, default="interp")
    p.add_argument("--cache", metavar="DIR", help="compilation cache directory")
    p.add_argument("--stats", metavar="FILE", help="write statistics as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspcomp",
                                     description="Partial compilation of ASP programs.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", help="report whether the selected part is compilable")
    _common(p)
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("split", help="print pi', lambda_R and lambda_C")
    _common(p)
    p.set_defaults(func=cmd_split)
    p = sub.add_parser("compile", help="compile the selected part and print its digest")
    _common(p)
    p.set_defaults(func=cmd_compile)
    p = sub.add_parser("eval", help="perfect model of a stratified normal program")
    _common(p, selection=False)
    p.set_defaults(func=cmd_eval)
    for name, func in (("solve", cmd_solve), ("bench", cmd_bench)):
        if name == "solve":
            p = sub.add_parser("solve", help="find one answer set with the compiled part")
            _common(p)
        else:
            p = sub.add_parser("bench", help="run a benchmark scenario")
            p.add_argument("scenario", choices=SCENARIOS)
            p.add_argument("--n", type=int, help="node count (default: per scenario)")
            p.add_argument("--density", type=float, help="edge probability")
            p.add_argument("--instances", type=int, default=1)
            p.add_argument("--timings", action="store_true",
                           help="include wall-clock times (makes the report nondeterministic)")
            _common(p, programs=False, selection=False)
        p.add_argument("--solver-cmd", metavar="CMD", help="external solver command")
        p.add_argument("--budget-ground", type=int, default=DEFAULT_GROUND_BUDGET, metavar="N")
        p.add_argument("--budget-candidates", type=int, default=DEFAULT_CANDIDATE_BUDGET,
                       metavar="N")
        p.add_argument("--seed", type=int, default=0, metavar="N")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (AspError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROGRAM


if __name__ == "__main__":
    sys.exit(main())
