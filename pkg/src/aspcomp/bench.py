"""Desk-scale benchmark scenarios comparing full grounding with compilation.

``e1``            stratified transitive closure with a reachability check
``e3-kcut``       guessed node set that must be strongly connected
``e4-mincut-tc``  two-sided cut where each side is closed under reachability

Reports are deterministic for a fixed seed; wall-clock timings are only
included on request.
"""
from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field

from .generators import graph_facts, random_graph
from .language import Program, parse_program
from .solve import (INCOHERENT, BudgetExceeded, SolveOptions, count_ground_instances,
                    enumerate_answer_sets, is_stable, perfect_model, solve)

TC_RULES = """
r(X,Y) :- e(X,Y).
r(X,Y) :- e(X,Z), r(Z,Y).
"""
REACH_CONSTRAINT = ":- v(X), v(Y), not r(X,Y).\n"

KCUT_GUESS = """
in(X) | out(X) :- v(X).
:- v(1), not in(1).
"""
KCUT_LAMBDA = """
r(X,Y) :- e(X,Y), in(X), in(Y).
r(X,Y) :- r(X,Z), r(Z,Y).
:- in(X), in(Y), not r(X,Y).
"""

MINCUT_GUESS = """
in(X) | out(X) :- v(X).
"""
MINCUT_LAMBDA = """
ri(X,Y) :- e(X,Y), in(X), in(Y).
ri(X,Y) :- ri(X,Z), e(Z,Y), in(Y).
ro(X,Y) :- e(X,Y), out(X), out(Y).
ro(X,Y) :- ro(X,Z), e(Z,Y), out(Y).
cut(X,Y) :- e(X,Y), in(X), out(Y).
:- in(X), in(Y), not ri(X,Y).
:- out(X), out(Y), not ro(X,Y).
:- cut(X,Y), cut(Y,X).
"""

SCENARIOS = ("e1", "e3-kcut", "e4-mincut-tc")
DEFAULTS = {
    "e1": {"n": 100, "density": 0.05},
    "e3-kcut": {"n": 8, "density": 0.3},
    "e4-mincut-tc": {"n": 8, "density": 0.3},
}


@dataclass
class BenchReport:
    scenario: str
    params: dict
    rows: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"scenario": self.scenario, "params": self.params, "rows": self.rows},
                          sort_keys=True, indent=2) + "\n"


def _graph_program(n: int, density: float, rng: random.Random) -> Program:
    edges = random_graph(n, density, rng)
    return Program(tuple(graph_facts(edges, nodes=range(1, n + 1))))


def _outcome(answer) -> str:
    return "INCOHERENT" if answer is INCOHERENT else f"model:{len(answer)}"


def _baseline(whole: Program, budget: int) -> dict:
    """Full grounding plus enumeration of the first answer set."""
    row = {"baseline_ground_instances": count_ground_instances(whole)}
    if row["baseline_ground_instances"] > budget:
        row["baseline_outcome"] = "budget-exceeded"
        return row
    try:
        first = next(enumerate_answer_sets(whole, budget), None)
    except BudgetExceeded:
        row["baseline_outcome"] = "budget-exceeded"
        return row
    row["baseline_outcome"] = "INCOHERENT" if first is None else f"model:{len(first)}"
    row["_baseline_model"] = first
    return row


def run_e1(n: int, density: float, rng: random.Random, opts: SolveOptions,
           timings: bool) -> dict:
    facts = _graph_program(n, density, rng)
    lam = parse_program(TC_RULES + REACH_CONSTRAINT)
    whole = facts.union(lam)
    row: dict = {"nodes": n, "edges": sum(1 for r in facts.rules if r.head[0].predicate == "e")}
    row["constraint_ground_instances"] = count_ground_instances(
        parse_program(REACH_CONSTRAINT), whole.universe)
    row.update({k: v for k, v in _baseline(whole, opts.budget_ground).items()
                if not k.startswith("_")})
    t = time.perf_counter()
    tc = perfect_model(facts.union(parse_program(TC_RULES)), opts.backend, opts.cache_dir)
    elapsed_tc = time.perf_counter() - t
    row["r_tuples"] = sum(1 for a in tc if a.predicate == "r")
    t = time.perf_counter()
    result = solve(facts, lam, opts)
    elapsed = time.perf_counter() - t
    row["outcome"] = _outcome(result.answer)
    row["stats"] = result.stats.as_dict(timings=False)
    if timings:
        row["times"] = {"perfect_model": elapsed_tc, "solve": elapsed,
                        **{f"solve_{k}": v for k, v in result.stats.times.items()}}
    return row


def _guess_scenario(guess: str, lam_text: str, n: int, density: float,
                    rng: random.Random, opts: SolveOptions, timings: bool) -> dict:
    facts = _graph_program(n, density, rng)
    pi_prime = facts.union(parse_program(guess))
    lam = parse_program(lam_text)
    whole = pi_prime.union(lam)
    row: dict = {"nodes": n, "edges": sum(1 for r in facts.rules if r.head[0].predicate == "e")}
    t = time.perf_counter()
    base = _baseline(whole, opts.budget_ground)
    elapsed_base = time.perf_counter() - t
    model = base.pop("_baseline_model", None)
    row.update(base)
    t = time.perf_counter()
    try:
        result = solve(pi_prime, lam, opts)
    except BudgetExceeded as exc:
        row["outcome"] = "budget-exceeded"
        row["error"] = str(exc)
        return row
    elapsed = time.perf_counter() - t
    row["outcome"] = _outcome(result.answer)
    row["stats"] = result.stats.as_dict(timings=False)
    if base["baseline_outcome"] != "budget-exceeded":
        agrees = (model is None) == result.incoherent
        if not result.incoherent:
            agrees = agrees and is_stable(whole, result.answer)
        row["agrees_with_oracle"] = agrees
    if timings:
        row["times"] = {"baseline": elapsed_base, "solve": elapsed,
                        **{f"solve_{k}": v for k, v in result.stats.times.items()}}
    return row


def bench(scenario: str, n: int | None = None, density: float | None = None, seed: int = 0,
          instances: int = 1, opts: SolveOptions | None = None, timings: bool = False) -> BenchReport:
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    opts = opts or SolveOptions()
    n = DEFAULTS[scenario]["n"] if n is None else n
    density = DEFAULTS[scenario]["density"] if density is None else density
    rng = random.Random(seed)
    report = BenchReport(scenario, {"n": n, "density": density, "seed": seed,
                                    "instances": instances, "backend": opts.backend})
    for i in range(instances):
        if scenario == "e1":
            row = run_e1(n, density, rng, opts, timings)
        elif scenario == "e3-kcut":
            row = _guess_scenario(KCUT_GUESS, KCUT_LAMBDA, n, density, rng, opts, timings)
        else:
            row = _guess_scenario(MINCUT_GUESS, MINCUT_LAMBDA, n, density, rng, opts, timings)
        row["instance"] = f"{scenario}-{seed}-{i}"
        report.rows.append(row)
    return report

