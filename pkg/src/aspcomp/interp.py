"""Generic semi-naive evaluation of a compilable sub-program over a candidate
answer set, plus the explanation procedure that turns a violated constraint
into a ground constraint over the solver-facing vocabulary.

This evaluator makes every syntax-directed decision (dependency graph, SCC
order, rule classification, starter choice, join order) at run time.  The
specialized plans in :mod:`aspcomp.plancomp` must reproduce its results
exactly.
"""
from __future__ import annotations

import functools
import itertools
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .analysis import classify_rules, dependency_graph, scc_order
from .language import Atom, Literal, Program, Rule, Variable

Interpretation = frozenset  # of ground Atom
Substitution = dict  # variable name -> term

DEFAULT_EXPLAIN_BUDGET = 512


# ------------------------------------------------------------- substitutions

def apply(sub: Substitution, atom: Atom) -> Atom:
    if not sub:
        return atom
    return Atom(atom.predicate, tuple(
        _walk(sub, t) if isinstance(t, Variable) else t for t in atom.args))


def apply_literal(sub: Substitution, lit: Literal) -> Literal:
    return Literal(apply(sub, lit.atom), lit.positive)


def _walk(sub: Substitution, term):
    while isinstance(term, Variable) and term.name in sub:
        term = sub[term.name]
    return term


def unify(lit: Literal, ground: Literal) -> Substitution | None:
    """One-sided matching: the substitution ``s`` with ``s(lit) == ground``."""
    if lit.positive != ground.positive:
        return None
    return match_atom(lit.atom, ground.atom.predicate, ground.atom.args, {})


def match_atom(atom: Atom, predicate: str, args: tuple, sub: Substitution) -> Substitution | None:
    if atom.predicate != predicate or len(atom.args) != len(args):
        return None
    out = sub
    for t, v in zip(atom.args, args):
        if isinstance(t, Variable):
            bound = out.get(t.name, _UNBOUND)
            if bound is _UNBOUND:
                if out is sub:
                    out = dict(sub)
                out[t.name] = v
            elif bound != v:
                return None
        elif t != v:
            return None
    return dict(out) if out is sub else out


_UNBOUND = object()


def mgu(a: Atom, b: Atom, sub: Substitution | None = None) -> Substitution | None:
    """Most general unifier of two (possibly non-ground) atoms."""
    if a.predicate != b.predicate or len(a.args) != len(b.args):
        return None
    sub = dict(sub or {})
    for x, y in zip(a.args, b.args):
        x, y = _walk(sub, x), _walk(sub, y)
        if isinstance(x, Variable):
            if not (isinstance(y, Variable) and y.name == x.name):
                sub[x.name] = y
        elif isinstance(y, Variable):
            sub[y.name] = x
        elif x != y:
            return None
    return sub


def relations_of(atoms: Iterable[Atom]) -> dict[str, set[tuple]]:
    rel: dict[str, set[tuple]] = defaultdict(set)
    for a in atoms:
        rel[a.predicate].add(a.args)
    return rel


# ------------------------------------------------------------------- outcome

@functools.total_ordering
@dataclass(frozen=True)
class GroundConstraint:
    """A ground constraint ``:- l1, ..., lk.``; body kept in canonical order."""

    body: tuple[Literal, ...]

    @classmethod
    def of(cls, literals: Iterable[Literal]) -> "GroundConstraint":
        return cls(tuple(sorted(set(literals), key=Literal.sort_key)))

    def sort_key(self) -> tuple:
        return tuple(l.sort_key() for l in self.body)

    def __lt__(self, other: "GroundConstraint") -> bool:
        return self.sort_key() < other.sort_key()

    def as_rule(self) -> Rule:
        return Rule((), self.body)

    def predicates(self) -> set[str]:
        return {l.predicate for l in self.body}

    def holds_in(self, model: Iterable[Atom]) -> bool:
        """True when every body literal is true in ``model`` (i.e. the
        constraint is violated by it)."""
        model = model if isinstance(model, (set, frozenset)) else set(model)
        return all((l.atom in model) == l.positive for l in self.body)

    def __str__(self) -> str:
        return ":- " + ", ".join(str(l) for l in self.body) + "." if self.body else ":- ."


@dataclass
class EvalCounters:
    dispatch: int = 0
    fixpoint_iterations: int = 0
    exit_evaluations: int = 0
    recursive_evaluations: int = 0
    constraint_instances: int = 0
    fallbacks: int = 0
    working_inserts: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "working_inserts"}
        out["working_inserts"] = dict(sorted(self.working_inserts.items()))
        return out


@dataclass(frozen=True)
class EvalOutcome:
    constraints: frozenset  # of GroundConstraint
    model: frozenset  # M_ext, of ground Atom
    counters: EvalCounters = field(default_factory=EvalCounters, compare=False, repr=False)

    def __iter__(self):
        return iter((self.constraints, self.model))


# --------------------------------------------------------------------- state

class EvaluationState:
    """Result sets, working sets and lazily built hash indices per predicate."""

    def __init__(self, m: Iterable[Atom] = ()):
        self.relations: dict[str, set[tuple]] = defaultdict(set)
        self.working: dict[str, set[tuple]] = defaultdict(set)
        self._indices: dict[str, dict[tuple, dict]] = defaultdict(dict)
        for a in m:
            self.relations[a.predicate].add(a.args)

    def relation(self, predicate: str) -> set[tuple]:
        return self.relations[predicate]

    def index(self, predicate: str, positions: tuple[int, ...]) -> dict:
        idx = self._indices[predicate].get(positions)
        if idx is None:
            idx = defaultdict(list)
            for t in self.relations[predicate]:
                idx[tuple(t[i] for i in positions)].append(t)
            self._indices[predicate][positions] = idx
        return idx

    def add(self, predicate: str, tuples: Iterable[tuple]) -> list[tuple]:
        """Insert into R_P and keep indices current; return the new tuples."""
        rel = self.relations[predicate]
        new = [t for t in set(tuples) if t not in rel]
        if new:
            rel.update(new)
            for positions, idx in self._indices[predicate].items():
                for t in new:
                    idx[tuple(t[i] for i in positions)].append(t)
        return new

    def atoms(self) -> frozenset:
        return frozenset(Atom(p, t) for p, rel in self.relations.items() for t in rel)

    def matches(self, atom: Atom, sub: Substitution) -> Iterator[tuple]:
        positions, key = [], []
        for i, t in enumerate(atom.args):
            if isinstance(t, Variable):
                if t.name in sub:
                    positions.append(i)
                    key.append(sub[t.name])
            else:
                positions.append(i)
                key.append(t)
        rel = self.relations[atom.predicate]
        if not positions:
            return iter(list(rel))
        if len(positions) == len(atom.args):
            key = tuple(key)
            return iter([key] if key in rel else [])
        return iter(list(self.index(atom.predicate, tuple(positions)).get(tuple(key), ())))


# --------------------------------------------------------------------- joins

def _extend(remaining: list[Literal], sub: Substitution,
            state: EvaluationState) -> Iterator[Substitution]:
    """Nested-loop join: negative literals as soon as they are bound, then the
    next positive literal in textual order via index lookup."""
    rest = []
    for lit in remaining:
        if not lit.positive and all(v in sub for v in lit.variables()):
            if apply(sub, lit.atom).args in state.relation(lit.predicate):
                return
        else:
            rest.append(lit)
    if not rest:
        yield sub
        return
    i = next(i for i, l in enumerate(rest) if l.positive)
    lit, others = rest[i], rest[:i] + rest[i + 1:]
    for tup in state.matches(lit.atom, sub):
        ext = match_atom(lit.atom, lit.predicate, tup, sub)
        if ext is not None:
            yield from _extend(others, ext, state)


def _substitutions(rule: Rule, starter: int | None, args: tuple | None,
                   state: EvaluationState) -> Iterator[Substitution]:
    if starter is None:
        yield from _extend(list(rule.body), {}, state)
        return
    lit = rule.body[starter]
    sub = match_atom(lit.atom, lit.predicate, args, {})
    if sub is None:
        return
    yield from _extend([l for i, l in enumerate(rule.body) if i != starter], sub, state)


def _pick_starter(rule: Rule, s: Atom) -> int:
    for i, lit in enumerate(rule.body):
        if lit.positive and match_atom(lit.atom, s.predicate, s.args, {}) is not None:
            return i
    raise ValueError(f"{s} does not match a positive body literal of '{rule}'")


def evaluate_rule(rule: Rule, s: Atom | None, state: EvaluationState,
                  starter: int | None = None) -> set[Atom]:
    """Heads derived by ``rule`` from starter atom ``s`` against ``state``.

    ``starter`` is the index of the body literal ``s`` is matched against;
    by default the first positive literal that ``s`` matches.  With
    ``s=None`` the rule is evaluated without a starter (rules whose body has
    no positive literal).
    """
    if s is not None and starter is None:
        starter = _pick_starter(rule, s)
    head = rule.head[0]
    return {apply(sub, head) for sub in
            _substitutions(rule, starter, None if s is None else s.args, state)}


def ground_constraint_instances(rule: Rule, s: Atom | None, state: EvaluationState,
                                starter: int | None = None) -> set[tuple[Literal, ...]]:
    """Ground bodies of constraint ``rule`` that are true in ``state``."""
    if s is not None and starter is None:
        starter = _pick_starter(rule, s)
    return {tuple(apply_literal(sub, l) for l in rule.body) for sub in
            _substitutions(rule, starter, None if s is None else s.args, state)}


def starter_index(rule: Rule, state: EvaluationState) -> int | None:
    """First positive body literal whose predicate has the smallest result set."""
    best = None
    for i, lit in enumerate(rule.body):
        if lit.positive:
            size = len(state.relations.get(lit.predicate, ()))
            if best is None or size < best[0]:
                best = (size, i)
    return None if best is None else best[1]


# ----------------------------------------------------------- explanation

class ExplanationOverflow(Exception):
    """Raised when a back-trace cannot be completed soundly within budget."""


def _canonical(lit: Literal) -> tuple:
    names: dict[str, int] = {}
    args = []
    for t in lit.atom.args:
        if isinstance(t, Variable):
            args.append(("?", names.setdefault(t.name, len(names))))
        else:
            args.append((type(t).__name__, t))
    return (lit.positive, lit.predicate, tuple(args))


class Explainer:
    """Back-traces violated constraint instances into ground constraints over
    the solver-facing predicates.

    Literals are processed first-in first-out.  Processed literals are
    remembered up to variable renaming.  A trace that would need a
    universally quantified non-ground literal, or that exceeds ``budget``
    selections, falls back to pinning every relevant solver-side atom.
    """

    def __init__(self, m_pi: Iterable[Atom], lambda_r: Program,
                 pi_prime_predicates: Iterable[str] | None = None,
                 universe: Iterable | None = None,
                 budget: int = DEFAULT_EXPLAIN_BUDGET):
        self.m_pi = relations_of(m_pi)
        self.rules_for: dict[str, list[Rule]] = defaultdict(list)
        for r in lambda_r.rules:
            if r.head:
                self.rules_for[r.head[0].predicate].append(r)
        self.arities = dict(lambda_r.arities)
        # None: every predicate the rules do not define counts as solver-side
        self.pi_preds = (None if pi_prime_predicates is None
                         else frozenset(pi_prime_predicates) - set(self.rules_for))
        consts = {c for rel in self.m_pi.values() for t in rel for c in t}
        consts |= lambda_r.universe
        if universe is not None:
            consts |= set(universe)
        self.universe = sorted(consts, key=lambda c: (isinstance(c, str), c))
        self.budget = budget
        self._fresh = itertools.count()
        self._fallbacks: dict[frozenset, GroundConstraint] = {}

    def _rename(self, rule: Rule) -> Rule:
        n = next(self._fresh)
        sub = {v: Variable(f"{v}_{n}") for v in rule.variables()}
        return Rule(tuple(apply(sub, a) for a in rule.head),
                    tuple(apply_literal(sub, l) for l in rule.body))

    def _solver_side(self, predicate: str) -> bool:
        if self.pi_preds is None:
            return predicate not in self.rules_for
        return predicate in self.pi_preds

    def build(self, c: Iterable[Literal]) -> GroundConstraint:
        queue = deque(c)
        seen: set[tuple] = set()
        result: set[Literal] = set()
        selections = 0
        while queue:
            lit = queue.popleft()
            key = _canonical(lit)
            if key in seen:
                continue
            seen.add(key)
            selections += 1
            if selections > self.budget:
                raise ExplanationOverflow(f"more than {self.budget} selections")
            pred = lit.predicate
            if self._solver_side(pred):
                self._collect(lit, result)
            elif pred in self.rules_for:
                if lit.positive:
                    for rule in self.rules_for[pred]:
                        rule = self._rename(rule)
                        sub = mgu(lit.atom, rule.head[0])
                        if sub is not None:
                            queue.extend(apply_literal(sub, b) for b in rule.body)
                else:
                    if not lit.is_ground():
                        raise ExplanationOverflow(f"non-ground negative literal {lit}")
                    for rule in self.rules_for[pred]:
                        rule = self._rename(rule)
                        sub = mgu(lit.atom, rule.head[0])
                        if sub is None:
                            continue
                        comps = [apply_literal(sub, b).complement() for b in rule.body]
                        if not all(x.is_ground() for x in comps):
                            raise ExplanationOverflow(f"rule '{rule}' has local variables under negation")
                        queue.extend(comps)
            # other predicates never hold any atom: positive literals are
            # false and negative ones true everywhere, nothing to record
        return GroundConstraint.of(result)

    def _collect(self, lit: Literal, result: set[Literal]) -> None:
        rel = self.m_pi.get(lit.predicate, ())
        atom = lit.atom
        if atom.is_ground():
            if (atom.args in rel) == lit.positive:
                result.add(lit)
        elif lit.positive:
            for t in rel:
                if match_atom(atom, atom.predicate, t, {}) is not None:
                    result.add(Literal(Atom(atom.predicate, t), True))
        else:
            names = sorted(atom.variables())
            if len(self.universe) ** len(names) > self.budget * 64:
                raise ExplanationOverflow(f"instantiating {lit} is too large")
            for values in itertools.product(self.universe, repeat=len(names)):
                ground = apply(dict(zip(names, values)), atom)
                if ground.args not in rel:
                    result.add(Literal(ground, False))

    def fallback(self, c: Iterable[Literal]) -> GroundConstraint:
        """Constraint fixing every solver-side atom the violation depends on."""
        c = list(c)
        arities = dict(self.arities)
        for l in c:
            arities.setdefault(l.predicate, l.atom.arity)
        relevant = set()
        todo = [l.predicate for l in c]
        while todo:
            p = todo.pop()
            if p in relevant:
                continue
            relevant.add(p)
            for rule in self.rules_for.get(p, ()):
                todo.extend(rule.body_predicates())
        key = frozenset(relevant)
        if key in self._fallbacks:
            return self._fallbacks[key]
        lits = []
        for p in sorted(q for q in relevant if self._solver_side(q)):
            rel = self.m_pi.get(p, set())
            for args in itertools.product(self.universe, repeat=arities[p]):
                lits.append(Literal(Atom(p, args), args in rel))
        self._fallbacks[key] = GroundConstraint.of(lits)
        return self._fallbacks[key]

    def explain(self, c: Iterable[Literal]) -> tuple[GroundConstraint, bool]:
        """Return ``(constraint, used_fallback)``."""
        c = list(c)
        try:
            return self.build(c), False
        except ExplanationOverflow:
            return self.fallback(c), True


def build_constraint(c: Iterable[Literal], m_pi: Iterable[Atom], m_ext: Iterable[Atom],
                     lambda_r: Program, pi_prime_predicates: Iterable[str] | None = None,
                     universe: Iterable | None = None,
                     budget: int = DEFAULT_EXPLAIN_BUDGET) -> GroundConstraint:
    """Back-trace the violated ground constraint body ``c``.

    Raises :class:`ExplanationOverflow` when no sound explanation is found
    within ``budget``; :meth:`Explainer.explain` applies the fallback.
    """
    c = list(c)
    m_ext = m_ext if isinstance(m_ext, (set, frozenset)) else set(m_ext)
    if not all((l.atom in m_ext) == l.positive for l in c):
        raise ValueError("constraint body is not true in the extended model")
    return Explainer(m_pi, lambda_r, pi_prime_predicates, universe, budget).build(c)


def explain_all(instances: Iterable[tuple[Literal, ...]], m_pi: Iterable[Atom],
                lambda_r: Program, pi_prime_predicates, universe, budget: int,
                counters: EvalCounters) -> frozenset:
    explainer = Explainer(m_pi, lambda_r, pi_prime_predicates, universe, budget)
    out = set()
    for c in sorted(instances, key=lambda b: [l.sort_key() for l in b]):
        constraint, fell_back = explainer.explain(c)
        counters.fallbacks += fell_back
        out.add(constraint)
    return frozenset(out)


# ------------------------------------------------------------- evaluation

def evaluate_bottom_up(lam: Program, m: Iterable[Atom],
                       pi_prime_predicates: Iterable[str] | None = None,
                       universe: Iterable | None = None,
                       budget: int = DEFAULT_EXPLAIN_BUDGET) -> EvalOutcome:
    """Semi-naive evaluation of ``lam`` over the candidate ``m``.

    Returns the violated-constraint explanations ``C`` and the extended
    model (final result sets).
    """
    m = frozenset(m)
    state = EvaluationState(m)
    counters = EvalCounters()
    lambda_r = Program(tuple(r for r in lam.rules if r.head))
    lambda_c = [r for r in lam.rules if not r.head]

    graph = dependency_graph(lambda_r)
    order = scc_order(graph)
    classes = classify_rules(lambda_r, order)
    comp_of = order.component_of()

    for k, scc in enumerate(order):
        counters.dispatch += 1
        members = sorted(scc, key=graph.position)
        exit_rules, recursive_rules = classes[k]
        for P in members:
            counters.dispatch += 1
            for r in lambda_r.rules:
                counters.dispatch += 1
                if r.head[0].predicate != P or r not in exit_rules:
                    continue
                si = starter_index(r, state)
                derived = set()
                if si is None:
                    counters.exit_evaluations += 1
                    derived |= {a.args for a in evaluate_rule(r, None, state)}
                else:
                    S = r.body[si].predicate
                    for s in list(state.relation(S)):
                        counters.exit_evaluations += 1
                        derived |= {a.args for a in evaluate_rule(r, Atom(S, s), state, si)}
                state.add(P, derived)
        for P in members:
            counters.dispatch += 1
            state.working[P] = set(state.relation(P))
            counters.working_inserts[P] += len(state.working[P])
        while any(state.working[P] for P in members):
            for P in members:
                counters.dispatch += 1
                W = state.working[P]
                while W:
                    s = W.pop()
                    counters.fixpoint_iterations += 1
                    for r in lambda_r.rules:
                        counters.dispatch += 1
                        if r not in recursive_rules:
                            continue
                        H = r.head[0].predicate
                        for i, lit in enumerate(r.body):
                            if not (lit.positive and lit.predicate == P and comp_of.get(P) == k):
                                continue
                            counters.recursive_evaluations += 1
                            E = {a.args for a in evaluate_rule(r, Atom(P, s), state, i)}
                            new = state.add(H, E)
                            state.working[H].update(new)
                            counters.working_inserts[H] += len(new)

    instances: set[tuple[Literal, ...]] = set()
    for r in lambda_c:
        counters.dispatch += 1
        si = starter_index(r, state)
        if si is None:
            instances |= ground_constraint_instances(r, None, state)
        else:
            S = r.body[si].predicate
            for s in list(state.relation(S)):
                instances |= ground_constraint_instances(r, Atom(S, s), state, si)
    counters.constraint_instances = len(instances)
    m_ext = state.atoms()
    C = explain_all(instances, m, lambda_r, pi_prime_predicates, universe, budget, counters)
    return EvalOutcome(C, m_ext, counters)
