"""Random programs, interpretations and graphs for tests and benchmarks.

All generators take an explicit ``random.Random`` so runs are reproducible.
Facts are instance data and are not counted against the rule limits.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from .language import Atom, Literal, Program, Rule, Variable

VARS = tuple(Variable(n) for n in ("X", "Y", "Z", "W"))


def constants(rng: random.Random, max_constants: int = 6) -> list:
    k = rng.randint(1, max_constants)
    pool = [1, 2, 3, "a", "b", "c"]
    return sorted(rng.sample(pool, k), key=lambda c: (isinstance(c, str), c))


def random_graph(n: int, density: float, seed: int | random.Random = 0) -> list[tuple[int, int]]:
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    return [(i, j) for i in range(1, n + 1) for j in range(1, n + 1)
            if i != j and rng.random() < density]


def graph_facts(edges: Iterable[tuple], nodes: Iterable | None = None,
                edge_pred: str = "e", node_pred: str | None = "v") -> list[Rule]:
    edges = list(edges)
    out = []
    if node_pred is not None:
        if nodes is None:
            nodes = sorted({x for e in edges for x in e})
        out.extend(Rule((Atom(node_pred, (x,)),)) for x in nodes)
    out.extend(Rule((Atom(edge_pred, tuple(e)),)) for e in edges)
    return out


class _RuleMaker:
    def __init__(self, rng: random.Random, consts: list, const_prob: float = 0.1):
        self.rng = rng
        self.consts = consts
        self.const_prob = const_prob

    def term(self, pool):
        if self.rng.random() < self.const_prob or not pool:
            return self.rng.choice(self.consts)
        return self.rng.choice(pool)

    def atom(self, pred: str, arity: int, pool) -> Atom:
        return Atom(pred, tuple(self.term(pool) for _ in range(arity)))

    def body(self, positive: list[tuple[str, int]], negative: list[tuple[str, int]],
             n_pos: int, n_neg: int, first: tuple[str, int] | None = None) -> tuple[list[Literal], list]:
        rng = self.rng
        lits = []
        chosen = [first] if first else []
        chosen += [rng.choice(positive) for _ in range(n_pos - len(chosen))]
        rng.shuffle(chosen)
        for pred, arity in chosen:
            lits.append(Literal(self.atom(pred, arity, VARS[:3]), True))
        bound = sorted({t for l in lits for t in l.atom.args if isinstance(t, Variable)})
        for _ in range(n_neg if negative else 0):
            pred, arity = rng.choice(negative)
            lits.append(Literal(self.atom(pred, arity, bound), False))
        return lits, bound


@dataclass(frozen=True)
class RandomInstance:
    pi_prime: Program
    lam: Program
    seed: int

    @property
    def whole(self) -> Program:
        return self.pi_prime.union(self.lam)


def random_split_program(seed: int, max_constants: int = 6, max_rules: int = 12) -> RandomInstance:
    """A program pi' (may be disjunctive and unstratified) plus a compilable
    lambda whose head predicates do not occur in pi'."""
    rng = random.Random(seed)
    consts = constants(rng, max_constants)
    mk = _RuleMaker(rng, consts)
    edb = [("v", 1), ("e", 2)]
    if rng.random() < 0.3:
        edb.append(("w", 3))
    facts = []
    for pred, arity in edb:
        density = rng.uniform(0.2, 0.7) if arity < 3 else 0.05
        tuples = _tuples(consts, arity)
        facts.extend(Rule((Atom(pred, t),)) for t in tuples if rng.random() < density)
    guess = [("g", 1), ("h", 1)] + ([("k", 2)] if rng.random() < 0.4 else [])
    pi_rules = []
    n_pi = rng.randint(1, 4)
    for _ in range(n_pi):
        kind = rng.random()
        if kind < 0.6:
            # disjunctive guess
            a, b = rng.sample(guess, 2)
            body, bound = mk.body(edb, [], 1, 0)
            pool = bound or [rng.choice(consts)]
            head = (mk.atom(a[0], a[1], pool), mk.atom(b[0], b[1], pool))
            pi_rules.append(Rule(head, tuple(body)))
        elif kind < 0.85:
            # normal rule, negation may create even loops
            head_pred = rng.choice(guess)
            body, bound = mk.body(edb, guess, 1, rng.randint(0, 1))
            pi_rules.append(Rule((mk.atom(*head_pred, bound or consts),), tuple(body)))
        else:
            body, _ = mk.body(edb + guess, guess, rng.randint(1, 2), rng.randint(0, 1))
            pi_rules.append(Rule((), tuple(body)))
    pi_preds = edb + guess
    derived = [("d", 1), ("r", 2)] + ([("t", 3)] if rng.random() < 0.3 else [])
    rng.shuffle(derived)
    lam_rules = []
    n_lam = rng.randint(1, max(1, max_rules - n_pi))
    for _ in range(n_lam):
        if rng.random() < 0.35:
            usable = pi_preds + derived
            body, _ = mk.body(usable, guess + derived, rng.randint(1, 2), rng.randint(0, 2),
                              first=rng.choice(guess + derived))
            lam_rules.append(Rule((), tuple(body)))
            continue
        level = rng.randrange(len(derived))
        head_pred = derived[level]
        lower = derived[:level]
        positive = pi_preds + lower + [head_pred]
        negative = pi_preds + lower
        body, bound = mk.body(positive, negative, rng.randint(1, 2), rng.randint(0, 1))
        head = mk.atom(*head_pred, bound)
        lam_rules.append(Rule((head,), tuple(body)))
    pi_prime = Program(tuple(facts + pi_rules))
    lam = Program(tuple(lam_rules))
    return RandomInstance(pi_prime, lam, seed)


def random_stratified_program(seed: int, max_constants: int = 6, max_rules: int = 12,
                              constraints: bool = False) -> Program:
    """Normal program stratified by construction (negation only downwards)."""
    rng = random.Random(seed)
    consts = constants(rng, max_constants)
    mk = _RuleMaker(rng, consts)
    edb = [("v", 1), ("e", 2)]
    facts = []
    for pred, arity in edb:
        density = rng.uniform(0.2, 0.6)
        facts.extend(Rule((Atom(pred, t),)) for t in _tuples(consts, arity) if rng.random() < density)
    levels = [("p", 1), ("q", 2), ("s", 1), ("t", 3)][:rng.randint(1, 4)]
    rng.shuffle(levels)
    rules = []
    for _ in range(rng.randint(1, max_rules)):
        i = rng.randrange(len(levels))
        head_pred = levels[i]
        if constraints and rng.random() < 0.1:
            body, _ = mk.body(edb + levels, edb + levels, rng.randint(1, 2), 1)
            rules.append(Rule((), tuple(body)))
            continue
        body, bound = mk.body(edb + levels[:i + 1], edb + levels[:i], rng.randint(1, 3),
                              rng.randint(0, 1))
        rules.append(Rule((mk.atom(*head_pred, bound),), tuple(body)))
    return Program(tuple(facts + rules))


def _tuples(consts: list, arity: int) -> list[tuple]:
    out: list[tuple] = [()]
    for _ in range(arity):
        out = [t + (c,) for t in out for c in consts]
    return out


def random_interpretation(p: Program, rng: random.Random, density: float = 0.4,
                          predicates: Iterable[str] | None = None) -> frozenset:
    """Random set of ground atoms over ``predicates`` (default: all of ``p``)."""
    consts = sorted(p.universe, key=lambda c: (isinstance(c, str), c)) or [1]
    preds = sorted(predicates if predicates is not None else p.predicates)
    out = set()
    for pred in preds:
        arity = p.arities.get(pred, 0)
        for t in _tuples(consts, arity):
            if rng.random() < density:
                out.add(Atom(pred, t))
    return frozenset(out)
