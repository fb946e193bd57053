"""Answer-set search and the solve loop with a compiled sub-program.

The internal enumerator is a plain DPLL-style search over a relevant
grounding: atoms are decided in a fixed order, true first, so answer sets
come out in lexicographic order.  Propagation covers rule clauses and
supportedness; each total assignment is accepted only if it is a minimal
model of its reduct.  Learned constraints can be injected while a search is
suspended between two candidates.
"""
from __future__ import annotations

import itertools
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .analysis import NotCompilableError, dependency_graph, is_compilable, is_stratified
from .analysis import CompilabilityReport
from .interp import DEFAULT_EXPLAIN_BUDGET, EvaluationState, GroundConstraint, _extend, apply
from .language import (AspError, Atom, Literal, ParseError, Program, Rule, canonical_text,
                       parse_atom, term_key)
from .plancomp import cache_get_or_build

DEFAULT_GROUND_BUDGET = 10 ** 7
DEFAULT_CANDIDATE_BUDGET = 10 ** 5


class BudgetExceeded(AspError):
    pass


class GroundingBudgetExceeded(BudgetExceeded):
    pass


class CandidateBudgetExceeded(BudgetExceeded):
    pass


class SolverError(AspError):
    """The external solver could not be run or produced unusable output."""


class _Incoherent:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INCOHERENT"

    __str__ = __repr__

    def __bool__(self) -> bool:
        return False


INCOHERENT = _Incoherent()


def atom_order_key(atom: Atom) -> tuple:
    return (atom.predicate, tuple(term_key(t) for t in atom.args))


# ----------------------------------------------------------------- grounding

def count_ground_instances(p: Program, universe: Iterable | None = None) -> int:
    """Size of the definitional grounding: sum over rules of |U|^#vars."""
    n = len(frozenset(universe) if universe is not None else p.universe)
    return sum(n ** len(r.variables()) for r in p.rules)


def ground_program(p: Program, budget: int = DEFAULT_GROUND_BUDGET) -> Program:
    """All substitutions of each rule's variables by constants of the universe."""
    total = count_ground_instances(p)
    if total > budget:
        raise GroundingBudgetExceeded(
            f"grounding needs {total} rule instances, budget is {budget}")
    consts = sorted(p.universe, key=term_key)
    out = []
    for r in p.rules:
        names = sorted(r.variables())
        if not names:
            out.append(r)
            continue
        for values in itertools.product(consts, repeat=len(names)):
            sub = dict(zip(names, values))
            out.append(Rule(tuple(apply(sub, a) for a in r.head),
                            tuple(Literal(apply(sub, l.atom), l.positive) for l in r.body)))
    return Program(tuple(out))


@dataclass(frozen=True)
class GroundRule:
    head: tuple[int, ...]
    pos: tuple[int, ...]
    neg: tuple[int, ...]


class RelevantGrounding:
    """Rule instances whose positive body can become true.

    Atoms that cannot be derived are false in every answer set, so negative
    literals over them are dropped and rules with them in the positive body
    are omitted.  The answer sets are those of the full grounding.
    """

    def __init__(self, p: Program, budget: int = DEFAULT_GROUND_BUDGET):
        self.program = p
        state = EvaluationState()
        rules = [r for r in p.rules]
        positives = [[l for l in r.body if l.positive] for r in rules]
        changed = True
        while changed:
            changed = False
            for r, body in zip(rules, positives):
                if not r.head:
                    continue
                for a in r.head:
                    heads = {apply(sub, a).args for sub in _extend(list(body), {}, state)}
                    if state.add(a.predicate, heads):
                        changed = True
        self.atoms: list[Atom] = sorted(state.atoms(), key=atom_order_key)
        self.index = {a: i for i, a in enumerate(self.atoms)}
        instances: set[GroundRule] = set()
        count = 0
        for r, body in zip(rules, positives):
            for sub in _extend(list(body), {}, state):
                count += 1
                if count > budget:
                    raise GroundingBudgetExceeded(
                        f"grounding exceeds the budget of {budget} rule instances")
                head = tuple(sorted({self.index[apply(sub, a)] for a in r.head}))
                pos = tuple(sorted({self.index[apply(sub, l.atom)] for l in body}))
                neg = set()
                for l in r.body:
                    if not l.positive:
                        i = self.index.get(apply(sub, l.atom))
                        if i is not None:
                            neg.add(i)
                if set(head) & set(pos):
                    continue  # satisfied by every interpretation
                if set(pos) & neg:
                    continue  # body never true
                instances.add(GroundRule(head, pos, tuple(sorted(neg))))
        self.rules: list[GroundRule] = sorted(instances, key=lambda g: (g.head, g.pos, g.neg))

    def __len__(self) -> int:
        return len(self.rules)

    def clause(self, lits: Iterable[Literal]) -> list[int] | None:
        """Clause forbidding a conjunction of ground literals; ``None`` if the
        conjunction can never hold (so nothing needs blocking)."""
        out = set()
        for l in lits:
            i = self.index.get(l.atom)
            if l.positive:
                if i is None:
                    return None
                out.add(-(i + 1))
            elif i is not None:
                out.add(i + 1)
        return sorted(out)


# ---------------------------------------------------------------- enumerator

class Enumerator:
    """Lexicographic enumeration of answer sets of a relevant grounding."""

    def __init__(self, grounding: RelevantGrounding):
        self.g = grounding
        n = len(grounding.atoms)
        self.n = n
        self.val: list[bool | None] = [None] * n
        self.trail: list[int] = []
        self.clauses: list[list[int]] = []
        self.occ: list[list[int]] = [[] for _ in range(n)]
        self.pending: list[int] = []
        self.support: list[list[int]] = [[] for _ in range(n)]
        self.touch: list[list[int]] = [[] for _ in range(n)]  # rules mentioning the atom
        self.inconsistent = False
        for k, r in enumerate(grounding.rules):
            self._add_clause([h + 1 for h in r.head] + [-(b + 1) for b in r.pos]
                             + [b + 1 for b in r.neg])
            for h in r.head:
                self.support[h].append(k)
            for a in set(r.head) | set(r.pos) | set(r.neg):
                self.touch[a].append(k)
        self.pending.clear()

    # clauses are lists of signed 1-based atom indices
    def _add_clause(self, clause: list[int]) -> None:
        if not clause:
            self.inconsistent = True
            return
        k = len(self.clauses)
        self.clauses.append(clause)
        for lit in clause:
            self.occ[abs(lit) - 1].append(k)
        self.pending.append(k)

    def add_constraint(self, lits: Iterable[Literal]) -> None:
        clause = self.g.clause(lits)
        if clause is not None:
            self._add_clause(clause)

    def _value(self, lit: int) -> bool | None:
        v = self.val[abs(lit) - 1]
        if v is None:
            return None
        return v if lit > 0 else not v

    def _assign(self, lit: int, queue: list[int]) -> bool:
        i = abs(lit) - 1
        want = lit > 0
        if self.val[i] is not None:
            return self.val[i] == want
        self.val[i] = want
        self.trail.append(i)
        queue.append(i)
        return True

    def _clause_status(self, k: int) -> tuple[str, int]:
        unassigned = 0
        last = 0
        for lit in self.clauses[k]:
            v = self._value(lit)
            if v is True:
                return "sat", 0
            if v is None:
                unassigned += 1
                last = lit
        if unassigned == 0:
            return "conflict", 0
        if unassigned == 1:
            return "unit", last
        return "open", 0

    def _blocked(self, k: int, atom: int) -> bool:
        r = self.g.rules[k]
        val = self.val
        for b in r.pos:
            if val[b] is False:
                return True
        for b in r.neg:
            if val[b] is True:
                return True
        for h in r.head:
            if h != atom and val[h] is True:
                return True
        return False

    def _check_support(self, atom: int, queue: list[int]) -> bool:
        if self.val[atom] is False:
            return True
        if all(self._blocked(k, atom) for k in self.support[atom]):
            if self.val[atom] is True:
                return False
            return self._assign(-(atom + 1), queue)
        return True

    def propagate(self, queue: list[int]) -> bool:
        keep = []
        for k in self.pending:
            status, lit = self._clause_status(k)
            if status == "conflict":
                keep.append(k)
            elif status == "unit":
                self._assign(lit, queue)
        self.pending = keep
        if keep:
            return False
        head = 0
        while head < len(queue):
            i = queue[head]
            head += 1
            for k in self.occ[i]:
                status, lit = self._clause_status(k)
                if status == "conflict":
                    return False
                if status == "unit" and not self._assign(lit, queue):
                    return False
            atoms = {i}
            for k in self.touch[i]:
                atoms.update(self.g.rules[k].head)
            for a in sorted(atoms):
                if not self._check_support(a, queue):
                    return False
        return True

    def _initial(self) -> bool:
        queue: list[int] = []
        self.pending = list(range(len(self.clauses)))
        if not self.propagate(queue):
            return False
        queue = []
        for a in range(self.n):
            if not self._check_support(a, queue):
                return False
        return self.propagate(queue)

    def _undo(self, size: int) -> None:
        while len(self.trail) > size:
            self.val[self.trail.pop()] = None

    def model(self) -> frozenset:
        return frozenset(self.g.atoms[i] for i in range(self.n) if self.val[i])

    def models(self) -> Iterator[frozenset]:
        """Yield answer sets; constraints added between yields take effect
        for the rest of the search."""
        if self.inconsistent or not self._initial():
            return
        decisions: list[tuple[int, int, bool]] = []
        cursor = 0

        def backtrack() -> bool:
            while decisions:
                v, size, flipped = decisions.pop()
                self._undo(size)
                if flipped or self.inconsistent:
                    continue
                decisions.append((v, size, True))
                queue: list[int] = []
                self._assign(-(v + 1), queue)
                if self.propagate(queue):
                    return True
            return False

        while True:
            while cursor < self.n and self.val[cursor] is not None:
                cursor += 1
            if cursor == self.n:
                if self._stable():
                    yield self.model()
                    if self.inconsistent:
                        return
                if not backtrack():
                    return
                cursor = 0
                continue
            # true first: answer sets form an antichain, so this visits them in
            # lexicographic order of their sorted atom sequences
            decisions.append((cursor, len(self.trail), False))
            queue = []
            self._assign(cursor + 1, queue)
            if not self.propagate(queue):
                if not backtrack():
                    return
                cursor = 0

    def _stable(self) -> bool:
        true = {i for i in range(self.n) if self.val[i]}
        return is_minimal_reduct_model(self.g.rules, true)


def is_minimal_reduct_model(rules: Sequence[GroundRule], true: set[int]) -> bool:
    """Whether no proper subset of ``true`` is a model of the reduct."""
    reduct = []
    for r in rules:
        if any(b in true for b in r.neg):
            continue
        if not all(b in true for b in r.pos):
            continue
        reduct.append((tuple(h for h in r.head if h in true), r.pos))
    if all(len(h) <= 1 for h, _ in reduct):
        # normal reduct: compare with its least model inside ``true``
        least: set[int] = set()
        changed = True
        while changed:
            changed = False
            for h, pos in reduct:
                if h and h[0] not in least and all(b in least for b in pos):
                    least.add(h[0])
                    changed = True
        return least == true
    return not _sat_proper_subset(reduct, sorted(true))


def _sat_proper_subset(reduct, atoms: list[int]) -> bool:
    """DPLL: is there J strictly inside ``atoms`` satisfying every reduct clause?"""
    clauses = []
    for h, pos in reduct:
        clauses.append([a + 1 for a in h] + [-(b + 1) for b in pos])
    clauses.append([-(a + 1) for a in atoms])
    return _dpll(clauses, {})


def _dpll(clauses: list[list[int]], assignment: dict[int, bool]) -> bool:
    assignment = dict(assignment)
    while True:
        unit = None
        for c in clauses:
            undecided = []
            sat = False
            for lit in c:
                v = assignment.get(abs(lit))
                if v is None:
                    undecided.append(lit)
                elif v == (lit > 0):
                    sat = True
                    break
            if sat:
                continue
            if not undecided:
                return False
            if len(undecided) == 1:
                unit = undecided[0]
                break
        if unit is None:
            break
        assignment[abs(unit)] = unit > 0
    for c in clauses:
        for lit in c:
            if abs(lit) not in assignment:
                for value in (False, True):
                    if _dpll(clauses, {**assignment, abs(lit): value}):
                        return True
                return False
    return True


def enumerate_answer_sets(p: Program, budget: int = DEFAULT_GROUND_BUDGET) -> Iterator[frozenset]:
    """Every answer set of ``p`` in lexicographic order of the atom ordering."""
    return Enumerator(RelevantGrounding(p, budget)).models()


def is_stable(p: Program, interpretation: Iterable[Atom],
              budget: int = DEFAULT_GROUND_BUDGET) -> bool:
    g = RelevantGrounding(p, budget)
    I = frozenset(interpretation)
    if any(a not in g.index for a in I):
        return False
    true = {g.index[a] for a in I}
    for r in g.rules:
        body = all(b in true for b in r.pos) and not any(b in true for b in r.neg)
        if body and not any(h in true for h in r.head):
            return False
    return is_minimal_reduct_model(g.rules, true)


# ----------------------------------------------------------- candidate sources

class CandidateSource:
    """Produces candidate answer sets of pi' under the learned constraints."""

    ground_rules = 0

    def next_candidate(self) -> frozenset | None:
        raise NotImplementedError

    def learn(self, constraints: Iterable[GroundConstraint]) -> None:
        raise NotImplementedError


class InternalSource(CandidateSource):
    def __init__(self, pi_prime: Program, budget: int = DEFAULT_GROUND_BUDGET):
        self.grounding = RelevantGrounding(pi_prime, budget)
        self.ground_rules = len(self.grounding)
        self.enumerator = Enumerator(self.grounding)
        self._models = self.enumerator.models()

    def next_candidate(self) -> frozenset | None:
        return next(self._models, None)

    def learn(self, constraints: Iterable[GroundConstraint]) -> None:
        for c in constraints:
            self.enumerator.add_constraint(c.body)


def parse_answer_line(line: str, arities: dict[str, int] | None = None) -> frozenset | None:
    """One output line of an external solver: ``INCOHERENT`` or atoms."""
    line = line.strip()
    if line == "INCOHERENT":
        return None
    atoms = set()
    for tok in _split_atoms(line):
        try:
            atom = parse_atom(tok)
        except ParseError as exc:
            raise SolverError(f"unparsable atom {tok!r} in solver output: {exc}") from None
        if not atom.is_ground:
            raise SolverError(f"non-ground atom {tok!r} in solver output")
        if arities is not None:
            expected = arities.get(atom.predicate)
            if expected is not None and expected != atom.arity:
                raise SolverError(f"atom {tok} has arity {atom.arity}, "
                                  f"predicate {atom.predicate} has arity {expected}")
        atoms.add(atom)
    return frozenset(atoms)


def _split_atoms(line: str) -> list[str]:
    # spaces separate atoms, except inside parentheses
    out, depth, cur = [], 0, []
    for ch in line:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch.isspace() and depth == 0:
            if cur:
                out.append("".join(cur))
                cur = []
        elif not ch.isspace():
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return out


class ExternalSource(CandidateSource):
    """Re-sends pi' plus all learned constraints to a solver command."""

    def __init__(self, pi_prime: Program, command: str | Sequence[str], timeout: float | None = None):
        self.pi_prime = pi_prime
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.learned: list[GroundConstraint] = []
        self.timeout = timeout
        self.ground_rules = 0

    def program_text(self) -> str:
        text = canonical_text(self.pi_prime)
        return text + "".join(str(c) + "\n" for c in self.learned)

    def next_candidate(self) -> frozenset | None:
        return external_answer_set(self.command, self.program_text(),
                                   self.pi_prime.arities, self.timeout)

    def learn(self, constraints: Iterable[GroundConstraint]) -> None:
        self.learned.extend(constraints)


def external_answer_set(command: Sequence[str], program_text: str,
                        arities: dict[str, int] | None = None,
                        timeout: float | None = None) -> frozenset | None:
    try:
        proc = subprocess.run(list(command), input=program_text, capture_output=True,
                              text=True, timeout=timeout)
    except (OSError, subprocess.SubprocessError) as exc:
        raise SolverError(f"cannot run solver {command[0]!r}: {exc}") from None
    if proc.returncode != 0:
        raise SolverError(f"solver exited with status {proc.returncode}: {proc.stderr.strip()}")
    lines = proc.stdout.splitlines()
    if not lines:
        raise SolverError("solver produced no output")
    return parse_answer_line(lines[0], arities)


# ----------------------------------------------------------------- solving

@dataclass
class SolveOptions:
    backend: str = "interp"
    cache_dir: str | None = None
    solver_cmd: str | Sequence[str] | None = None
    budget_ground: int = DEFAULT_GROUND_BUDGET
    budget_candidates: int = DEFAULT_CANDIDATE_BUDGET
    explain_budget: int = DEFAULT_EXPLAIN_BUDGET


@dataclass
class SolveStats:
    candidates: int = 0
    constraints_learned: int = 0
    lambda_ground_instances: int = 0
    pi_prime_ground_rules: int = 0
    fallbacks: int = 0
    times: dict = field(default_factory=dict)

    def as_dict(self, timings: bool = True) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "times"}
        if timings:
            out["times"] = dict(sorted(self.times.items()))
        return out


@dataclass
class SolveResult:
    answer: object  # frozenset of Atom or INCOHERENT
    stats: SolveStats
    learned: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    # 1-based number of the candidate each learned constraint rejected
    origins: list = field(default_factory=list)

    @property
    def incoherent(self) -> bool:
        return self.answer is INCOHERENT

    @property
    def model(self) -> frozenset | None:
        return None if self.incoherent else self.answer


def _timed(stats: SolveStats, phase: str, start: float) -> None:
    stats.times[phase] = stats.times.get(phase, 0.0) + time.perf_counter() - start


def solve(pi_prime: Program, lam: Program, opts: SolveOptions | None = None,
          keep_candidates: bool = False) -> SolveResult:
    """Candidate loop: a model of pi' is extended by the compiled sub-program
    or rejected with the constraints it explains."""
    opts = opts or SolveOptions()
    whole = pi_prime.union(lam)
    report = is_compilable(lam, whole)
    if not report.compilable:
        raise NotCompilableError(report)
    stats = SolveStats()
    t = time.perf_counter()
    evaluator = cache_get_or_build(lam, opts.backend, opts.cache_dir)
    _timed(stats, "compile", t)
    t = time.perf_counter()
    if opts.solver_cmd:
        source: CandidateSource = ExternalSource(pi_prime, opts.solver_cmd)
    else:
        source = InternalSource(pi_prime, opts.budget_ground)
    stats.pi_prime_ground_rules = source.ground_rules
    _timed(stats, "ground", t)
    universe = whole.universe
    # predicates used by lambda but defined nowhere are empty, not solver-side
    pi_preds = pi_prime.predicates
    result = SolveResult(INCOHERENT, stats)
    while True:
        if stats.candidates >= opts.budget_candidates:
            raise CandidateBudgetExceeded(
                f"no verdict after {stats.candidates} candidates")
        t = time.perf_counter()
        m = source.next_candidate()
        _timed(stats, "search", t)
        if m is None:
            return result
        stats.candidates += 1
        if keep_candidates:
            result.candidates.append(m)
        t = time.perf_counter()
        outcome = evaluator(m, pi_preds, universe, opts.explain_budget)
        _timed(stats, "evaluate", t)
        stats.fallbacks += outcome.counters.fallbacks
        # the compiled path only ever materializes violated constraint instances
        stats.lambda_ground_instances += outcome.counters.constraint_instances
        if not outcome.constraints:
            result.answer = outcome.model
            return result
        learned = sorted(outcome.constraints)
        stats.constraints_learned += len(learned)
        result.learned.extend(learned)
        result.origins.extend([stats.candidates] * len(learned))
        if any(not c.body for c in learned):
            return result
        source.learn(learned)


def _perfect_split(p: Program) -> tuple[Program, Program]:
    if any(r.is_disjunctive for r in p.rules):
        raise NotCompilableError(CompilabilityReport(False, True, None, frozenset()))
    ok, witness = is_stratified(dependency_graph(p))
    if not ok:
        raise NotCompilableError(CompilabilityReport(False, False, tuple(witness)))
    defined = {h for r in p.rules if not r.is_fact for h in r.head_predicates()}
    facts = [r for r in p.rules if r.is_fact and r.head[0].predicate not in defined]
    rest = [r for r in p.rules if not (r.is_fact and r.head[0].predicate not in defined)]
    return Program(tuple(facts)), Program(tuple(rest))


def perfect_model(p: Program, backend: str = "interp", cache_dir: str | None = None):
    """Unique answer set of a stratified normal program via the compiled path.

    Facts play the candidate, every other rule is the compiled sub-program.
    Returns INCOHERENT when a constraint of ``p`` is violated.
    """
    facts, lam = _perfect_split(p)
    evaluator = cache_get_or_build(lam, backend, cache_dir)
    m = frozenset(r.head[0] for r in facts.rules)
    outcome = evaluator(m, None, p.universe)
    return INCOHERENT if outcome.constraints else outcome.model
