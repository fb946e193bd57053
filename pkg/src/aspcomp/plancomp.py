"""Specialization of a compilable sub-program into an evaluation plan.

Everything the generic evaluator derives from the syntax of the sub-program
(dependency graph, SCC order, exit/recursive classification, starter
variants, join order, index choice) is fixed once by :func:`specialize`.
Two backends execute the result:

* ``interp`` links the plan's join programs into chains of closures and runs
  them; no code generation involved.
* ``emit`` writes a standalone Python module with straight-line nested loops
  for every join and loads it as a module.

Both must agree exactly with :func:`aspcomp.interp.evaluate_bottom_up`.
"""
from __future__ import annotations

import hashlib
import importlib.util
import json
import logging
import marshal
import pickle
import types
from collections import defaultdict
from dataclasses import dataclass, field
from operator import itemgetter
from pathlib import Path
from typing import Callable, Iterable

from filelock import FileLock

from .analysis import (CompilabilityReport, NotCompilableError, classify_rules,
                       dependency_graph, is_stratified, scc_order)
from .interp import DEFAULT_EXPLAIN_BUDGET, EvalCounters, EvalOutcome, explain_all
from .language import AspError, Atom, Literal, Program, Rule, Variable, canonical_text

log = logging.getLogger(__name__)

PLAN_FORMAT = 1
_PLAN_MAGIC = b"ASPCPLAN"


class BuildError(AspError):
    def __init__(self, message: str, build_log: str = ""):
        super().__init__(message)
        self.build_log = build_log


# ----------------------------------------------------------------- plan types

@dataclass(frozen=True)
class JoinProgram:
    """Instruction sequence of one nested join loop.

    Instructions (tuples, first item is the opcode):

    ``("starter", pred, match)``   match the starter tuple
    ``("scan", pred, match)``      iterate a whole relation
    ``("lookup", pred, positions, key, match)``  iterate an index bucket
    ``("member", pred, key)``      positive literal, all arguments bound
    ``("absent", pred, key)``      negative literal
    ``("head", pred, key)``        project the head tuple
    ``("emit", ((positive, pred, key), ...))``  emit a ground constraint body

    ``match`` is a tuple of ``(position, kind, value)`` with kind ``bind``
    (write slot), ``eq`` (compare with slot) or ``const``.  ``key`` is a
    tuple of ``("slot", n)`` / ``("const", c)``.
    """

    rule: str
    starter: int | None
    instructions: tuple
    slots: tuple[str, ...]

    def index_signatures(self) -> set[tuple[str, tuple[int, ...]]]:
        return {(ins[1], ins[2]) for ins in self.instructions if ins[0] == "lookup"}


@dataclass(frozen=True)
class ExitGroup:
    head: str
    variants: tuple  # of (starter predicate or None, JoinProgram)


@dataclass(frozen=True)
class StratumBlock:
    members: tuple[str, ...]
    exit_groups: tuple[ExitGroup, ...]
    # starter predicate -> (head predicate, JoinProgram) variants
    triggers: tuple  # of (pred, tuple of (head, JoinProgram))


@dataclass(frozen=True)
class ConstraintGroup:
    origin: str
    variants: tuple  # of (starter predicate or None, JoinProgram)


@dataclass(frozen=True)
class EvaluationPlan:
    strata: tuple[StratumBlock, ...]
    constraints: tuple[ConstraintGroup, ...]
    index_requirements: dict  # pred -> tuple of position tuples
    lambda_r: Program  # back-trace metadata for explanations
    digest: str

    def relations(self) -> list[str]:
        """Every predicate the plan reads or writes, in first-use order."""
        seen: dict[str, None] = {}
        for jp in self.join_programs():
            for ins in jp.instructions:
                if ins[0] == "emit":
                    for _, p, _ in ins[1]:
                        seen.setdefault(p)
                else:
                    seen.setdefault(ins[1])
        for b in self.strata:
            for p in b.members:
                seen.setdefault(p)
        return list(seen)

    def join_programs(self) -> list[JoinProgram]:
        out = []
        for b in self.strata:
            for g in b.exit_groups:
                out.extend(jp for _, jp in g.variants)
            for _, variants in b.triggers:
                out.extend(jp for _, jp in variants)
        for g in self.constraints:
            out.extend(jp for _, jp in g.variants)
        return out


# -------------------------------------------------------------- specialize

def _split(lam: Program) -> tuple[Program, Program]:
    return (Program(tuple(r for r in lam.rules if r.head)),
            Program(tuple(r for r in lam.rules if not r.head)))


def program_hash(lam: Program) -> str:
    """SHA-256 of the canonical text, lowercase hex."""
    return hashlib.sha256(canonical_text(lam).encode("utf-8")).hexdigest()


def build_join(rule: Rule, starter: int | None) -> JoinProgram:
    slots: dict[str, int] = {}

    def match_ops(atom: Atom, skip: set[int] = frozenset()) -> tuple:
        ops = []
        for i, t in enumerate(atom.args):
            if i in skip:
                continue
            if isinstance(t, Variable):
                if t.name in slots:
                    ops.append((i, "eq", slots[t.name]))
                else:
                    slots[t.name] = len(slots)
                    ops.append((i, "bind", slots[t.name]))
            else:
                ops.append((i, "const", t))
        return tuple(ops)

    def key(atom: Atom) -> tuple:
        return tuple(("slot", slots[t.name]) if isinstance(t, Variable) else ("const", t)
                     for t in atom.args)

    instrs = []
    remaining = list(rule.body)
    if starter is not None:
        lit = remaining.pop(starter)
        instrs.append(("starter", lit.predicate, match_ops(lit.atom)))
    while True:
        rest = []
        for lit in remaining:
            if not lit.positive and all(v in slots for v in lit.variables()):
                instrs.append(("absent", lit.predicate, key(lit.atom)))
            else:
                rest.append(lit)
        remaining = rest
        if not remaining:
            break
        i = next(i for i, l in enumerate(remaining) if l.positive)
        lit = remaining.pop(i)
        atom = lit.atom
        bound = tuple(j for j, t in enumerate(atom.args)
                      if not isinstance(t, Variable) or t.name in slots)
        if len(bound) == len(atom.args):
            instrs.append(("member", lit.predicate, key(atom)))
        elif not bound:
            instrs.append(("scan", lit.predicate, match_ops(atom)))
        else:
            k = tuple(("slot", slots[atom.args[j].name]) if isinstance(atom.args[j], Variable)
                      else ("const", atom.args[j]) for j in bound)
            instrs.append(("lookup", lit.predicate, bound, k, match_ops(atom, set(bound))))
    if rule.head:
        instrs.append(("head", rule.head[0].predicate, key(rule.head[0])))
    else:
        instrs.append(("emit", tuple((l.positive, l.predicate, key(l.atom)) for l in rule.body)))
    names = tuple(sorted(slots, key=slots.get))
    return JoinProgram(str(rule), starter, tuple(instrs), names)


def _variants(rule: Rule) -> tuple:
    positives = [i for i, l in enumerate(rule.body) if l.positive]
    if not positives:
        return ((None, build_join(rule, None)),)
    return tuple((rule.body[i].predicate, build_join(rule, i)) for i in positives)


def check_compilable(lam: Program) -> CompilabilityReport:
    lambda_r, _ = _split(lam)
    ok, witness = is_stratified(dependency_graph(lambda_r))
    return CompilabilityReport(ok, ok, tuple(witness) if witness else None)


def specialize(lam: Program) -> EvaluationPlan:
    """Fix every syntax-dependent decision of the bottom-up evaluation."""
    report = check_compilable(lam)
    if not report.compilable:
        raise NotCompilableError(report)
    lambda_r, lambda_c = _split(lam)
    graph = dependency_graph(lambda_r)
    order = scc_order(graph)
    classes = classify_rules(lambda_r, order)
    comp_of = order.component_of()
    strata = []
    for k, scc in enumerate(order):
        members = tuple(sorted(scc, key=graph.position))
        exit_rules, recursive_rules = classes[k]
        exit_groups = []
        for P in members:
            for r in lambda_r.rules:
                if r.head[0].predicate == P and r in exit_rules:
                    exit_groups.append(ExitGroup(P, _variants(r)))
        triggers: dict[str, list] = {P: [] for P in members}
        for r in lambda_r.rules:
            if r not in recursive_rules:
                continue
            for i, lit in enumerate(r.body):
                if lit.positive and comp_of.get(lit.predicate) == k:
                    triggers[lit.predicate].append((r.head[0].predicate, build_join(r, i)))
        strata.append(StratumBlock(
            members, tuple(exit_groups),
            tuple((P, tuple(v)) for P, v in triggers.items())))
    constraints = tuple(ConstraintGroup(str(r), _variants(r)) for r in lambda_c.rules)
    plan = EvaluationPlan(tuple(strata), constraints, {}, lambda_r, program_hash(lam))
    needed: dict[str, set] = defaultdict(set)
    for jp in plan.join_programs():
        for pred, positions in jp.index_signatures():
            needed[pred].add(positions)
    plan.index_requirements.update({p: tuple(sorted(v)) for p, v in sorted(needed.items())})
    return plan


# ----------------------------------------------------------- plan execution

class _Relations:
    """Result sets plus the statically required indices."""

    def __init__(self, plan: EvaluationPlan, m: frozenset):
        self.sets: dict[str, set] = defaultdict(set)
        for a in m:
            self.sets[a.predicate].add(a.args)
        self.indices: dict[tuple, dict] = {}
        self.by_pred: dict[str, list] = defaultdict(list)
        for pred, sigs in plan.index_requirements.items():
            for positions in sigs:
                idx: dict = defaultdict(list)
                get = _tuple_getter(positions)
                for t in self.sets[pred]:
                    idx[get(t)].append(t)
                self.indices[(pred, positions)] = idx
                self.by_pred[pred].append((get, idx))

    def add(self, pred: str, tuples: Iterable[tuple]) -> list:
        rel = self.sets[pred]
        new = [t for t in set(tuples) if t not in rel]
        if new:
            rel.update(new)
            for get, idx in self.by_pred.get(pred, ()):
                for t in new:
                    idx[get(t)].append(t)
        return new


def _tuple_getter(positions: tuple[int, ...]) -> Callable:
    if len(positions) == 1:
        p = positions[0]
        return lambda t: (t[p],)
    return itemgetter(*positions)


def _key_getter(key: tuple) -> Callable:
    if not key:
        return lambda regs: ()
    if all(kind == "slot" for kind, _ in key):
        return _tuple_getter(tuple(v for _, v in key))
    parts = tuple(key)
    return lambda regs: tuple(regs[v] if kind == "slot" else v for kind, v in parts)


def _matcher(match: tuple) -> Callable:
    binds = tuple((i, s) for i, kind, s in match if kind == "bind")
    checks = tuple((i, kind, v) for i, kind, v in match if kind != "bind")
    if not checks:
        if len(binds) == 1:
            (i0, s0), = binds

            def bind1(t, regs):
                regs[s0] = t[i0]
                return True
            return bind1
        if len(binds) == 2:
            (i0, s0), (i1, s1) = binds

            def bind2(t, regs):
                regs[s0] = t[i0]
                regs[s1] = t[i1]
                return True
            return bind2

    def general(t, regs):
        for i, s in binds:
            regs[s] = t[i]
        for i, kind, v in checks:
            if t[i] != (regs[v] if kind == "eq" else v):
                return False
        return True
    return general


def _link(jp: JoinProgram, rels: _Relations) -> Callable:
    """Turn a join program into ``run(starter_tuple_or_None, out)``."""
    instrs = jp.instructions
    nslots = len(jp.slots)

    def build(k: int) -> Callable:
        ins = instrs[k]
        op = ins[0]
        if op == "head":
            get = _key_getter(ins[2])
            return lambda regs, out: out.append(get(regs))
        if op == "emit":
            parts = tuple((positive, pred, _key_getter(key)) for positive, pred, key in ins[1])
            return lambda regs, out: out.append(
                tuple(Literal(Atom(p, g(regs)), positive) for positive, p, g in parts))
        nxt = build(k + 1)
        if op in ("member", "absent"):
            rel = rels.sets[ins[1]]
            get = _key_getter(ins[2])
            if op == "member":
                def member(regs, out):
                    if get(regs) in rel:
                        nxt(regs, out)
                return member

            def absent(regs, out):
                if get(regs) not in rel:
                    nxt(regs, out)
            return absent
        if op == "scan":
            rel = rels.sets[ins[1]]
            match = _matcher(ins[2])

            def scan(regs, out):
                for t in rel:
                    if match(t, regs):
                        nxt(regs, out)
            return scan
        if op == "lookup":
            idx = rels.indices[(ins[1], ins[2])]
            get = _key_getter(ins[3])
            match = _matcher(ins[4])
            empty = ()

            def lookup(regs, out):
                for t in idx.get(get(regs), empty):
                    if match(t, regs):
                        nxt(regs, out)
            return lookup
        raise ValueError(f"unknown instruction {op!r}")

    if instrs[0][0] == "starter":
        match = _matcher(instrs[0][2])
        body = build(1)

        def run(t, out):
            regs = [None] * nslots
            if match(t, regs):
                body(regs, out)
        return run
    body = build(0)

    def run_unseeded(_t, out):
        body([None] * nslots, out)
    return run_unseeded


def _pick(variants: tuple, rels: _Relations):
    """Variant whose starter relation is currently smallest (first on ties)."""
    best = None
    for pred, jp in variants:
        if pred is None:
            return None, jp
        size = len(rels.sets[pred])
        if best is None or size < best[0]:
            best = (size, pred, jp)
    return best[1], best[2]


def execute_plan(plan: EvaluationPlan, m: Iterable[Atom],
                 pi_prime_predicates: Iterable[str] | None = None,
                 universe: Iterable | None = None,
                 budget: int = DEFAULT_EXPLAIN_BUDGET) -> EvalOutcome:
    m = frozenset(m)
    rels = _Relations(plan, m)
    counters = EvalCounters()
    linked = {id(jp): _link(jp, rels) for jp in plan.join_programs()}

    for block in plan.strata:
        for group in block.exit_groups:
            pred, jp = _pick(group.variants, rels)
            run = linked[id(jp)]
            out: list = []
            if pred is None:
                counters.exit_evaluations += 1
                run(None, out)
            else:
                for s in rels.sets[pred]:
                    counters.exit_evaluations += 1
                    run(s, out)
            rels.add(group.head, out)
        working = {P: set(rels.sets[P]) for P in block.members}
        for P in block.members:
            counters.working_inserts[P] += len(working[P])
        triggers = [(P, working[P], tuple((working[h], h, linked[id(jp)]) for h, jp in v))
                    for P, v in block.triggers]
        while any(working.values()):
            for P, W, targets in triggers:
                while W:
                    s = W.pop()
                    counters.fixpoint_iterations += 1
                    for W_head, head, run in targets:
                        out = []
                        counters.recursive_evaluations += 1
                        run(s, out)
                        new = rels.add(head, out)
                        if new:
                            W_head.update(new)
                            counters.working_inserts[head] += len(new)

    instances: set = set()
    for group in plan.constraints:
        pred, jp = _pick(group.variants, rels)
        run = linked[id(jp)]
        out = []
        if pred is None:
            run(None, out)
        else:
            for s in rels.sets[pred]:
                run(s, out)
        instances.update(out)
    counters.constraint_instances = len(instances)
    model = frozenset(Atom(p, t) for p, rel in rels.sets.items() for t in rel)
    C = explain_all(instances, m, plan.lambda_r, pi_prime_predicates, universe, budget, counters)
    return EvalOutcome(C, model, counters)


# ------------------------------------------------------------ source emitter

@dataclass(frozen=True)
class SourceArtifact:
    source: str
    digest: str
    recipe: dict = field(default_factory=dict)


class _Emitter:
    def __init__(self, plan: EvaluationPlan):
        self.plan = plan
        self.lines: list[str] = []
        self.rel_names = {p: f"rel_{i}" for i, p in enumerate(plan.relations())}
        self.idx_names = {}
        for pred, sigs in plan.index_requirements.items():
            for positions in sigs:
                self.idx_names[(pred, positions)] = (
                    f"idx_{self.rel_names[pred][4:]}_{'_'.join(map(str, positions))}")
        self.join_names: dict[int, str] = {}

    def w(self, depth: int, text: str) -> None:
        self.lines.append("    " * depth + text)

    @staticmethod
    def key_expr(key: tuple) -> str:
        parts = [f"v{v}" if kind == "slot" else repr(v) for kind, v in key]
        if len(parts) == 1:
            return f"({parts[0]},)"
        return "(" + ", ".join(parts) + ")"

    def match(self, depth: int, tvar: str, match: tuple, bail: str) -> None:
        for i, kind, v in match:
            if kind == "bind":
                self.w(depth, f"v{v} = {tvar}[{i}]")
        for i, kind, v in match:
            if kind == "eq":
                self.w(depth, f"if {tvar}[{i}] != v{v}: {bail}")
            elif kind == "const":
                self.w(depth, f"if {tvar}[{i}] != {v!r}: {bail}")

    def join(self, jp: JoinProgram, name: str) -> None:
        self.w(1, f"def {name}(t0, out):")
        self.w(2, f"# {jp.rule}")
        depth = 2
        bail = "return"
        for n, ins in enumerate(jp.instructions):
            op = ins[0]
            if op == "starter":
                self.match(depth, "t0", ins[2], bail)
            elif op in ("member", "absent"):
                test = "not in" if op == "member" else "in"
                self.w(depth, f"if {self.key_expr(ins[2])} {test} {self.rel_names[ins[1]]}: {bail}")
            elif op == "scan":
                self.w(depth, f"for t{n} in {self.rel_names[ins[1]]}:")
                depth += 1
                bail = "continue"
                self.match(depth, f"t{n}", ins[2], bail)
            elif op == "lookup":
                idx = self.idx_names[(ins[1], ins[2])]
                self.w(depth, f"for t{n} in {idx}.get({self.key_expr(ins[3])}, ()):")
                depth += 1
                bail = "continue"
                self.match(depth, f"t{n}", ins[4], bail)
            elif op == "head":
                self.w(depth, f"out.append({self.key_expr(ins[2])})")
            elif op == "emit":
                lits = ", ".join(
                    f"Literal(Atom({p!r}, {self.key_expr(k)}), {pos})" for pos, p, k in ins[1])
                self.w(depth, f"out.append(({lits},))")

    def emit(self) -> str:
        plan = self.plan
        w = self.w
        w(0, f"# Generated evaluator, sub-program digest {plan.digest}")
        w(0, "from collections import defaultdict")
        w(0, "")
        w(0, "from aspcomp.interp import DEFAULT_EXPLAIN_BUDGET, EvalCounters, EvalOutcome, explain_all")
        w(0, "from aspcomp.language import Atom, Literal, parse_program")
        w(0, "")
        w(0, f"DIGEST = {plan.digest!r}")
        w(0, f"LAMBDA_R = parse_program({canonical_text(plan.lambda_r)!r})")
        w(0, "")
        w(0, "")
        w(0, "def evaluate(m, pi_prime_predicates=None, universe=None, budget=DEFAULT_EXPLAIN_BUDGET):")
        w(1, "m = frozenset(m)")
        w(1, "counters = EvalCounters()")
        w(1, "rels = defaultdict(set)")
        w(1, "for a in m:")
        w(2, "rels[a.predicate].add(a.args)")
        for pred, name in self.rel_names.items():
            w(1, f"{name} = rels[{pred!r}]")
        for (pred, positions), name in self.idx_names.items():
            w(1, f"{name} = defaultdict(list)")
            key = "(" + ", ".join(f"t[{p}]" for p in positions) + ("," if len(positions) == 1 else "") + ")"
            w(1, f"for t in {self.rel_names[pred]}:")
            w(2, f"{name}[{key}].append(t)")
        w(1, "")
        for pred, name in self.rel_names.items():
            sigs = [(p, self.idx_names[(pred, p)]) for p in plan.index_requirements.get(pred, ())]
            w(1, f"def add_{name}(tuples):")
            w(2, f"new = [t for t in set(tuples) if t not in {name}]")
            w(2, f"{name}.update(new)")
            for positions, idx in sigs:
                key = "(" + ", ".join(f"t[{p}]" for p in positions) + ("," if len(positions) == 1 else "") + ")"
                w(2, "for t in new:")
                w(3, f"{idx}[{key}].append(t)")
            w(2, "return new")
            w(1, "")
        for n, jp in enumerate(plan.join_programs()):
            name = f"join_{n}"
            self.join_names[id(jp)] = name
            self.join(jp, name)
            w(1, "")

        for k, block in enumerate(plan.strata):
            w(1, f"# stratum {k}: {{{', '.join(block.members)}}}")
            for group in block.exit_groups:
                self.run_group(group.variants, f"add_{self.rel_names[group.head]}(out)",
                               "counters.exit_evaluations += 1")
            for P in block.members:
                w(1, f"work_{self.rel_names[P]} = set({self.rel_names[P]})")
                w(1, f"counters.working_inserts[{P!r}] += len(work_{self.rel_names[P]})")
            if block.members:
                cond = " or ".join(f"work_{self.rel_names[P]}" for P, _ in block.triggers)
                w(1, f"while {cond}:")
                for P, targets in block.triggers:
                    wname = f"work_{self.rel_names[P]}"
                    w(2, f"while {wname}:")
                    w(3, f"s = {wname}.pop()")
                    w(3, "counters.fixpoint_iterations += 1")
                    for head, jp in targets:
                        hname = self.rel_names[head]
                        w(3, "out = []")
                        w(3, "counters.recursive_evaluations += 1")
                        w(3, f"{self.join_names[id(jp)]}(s, out)")
                        w(3, f"new = add_{hname}(out)")
                        w(3, f"work_{hname}.update(new)")
                        w(3, f"counters.working_inserts[{head!r}] += len(new)")
        w(1, "instances = set()")
        for group in plan.constraints:
            w(1, f"# {group.origin}")
            self.run_group(group.variants, "instances.update(out)", None)
        w(1, "counters.constraint_instances = len(instances)")
        w(1, "model = frozenset(Atom(p, t) for p, rel in rels.items() for t in rel)")
        w(1, "C = explain_all(instances, m, LAMBDA_R, pi_prime_predicates, universe, budget, counters)")
        w(1, "return EvalOutcome(C, model, counters)")
        return "\n".join(self.lines) + "\n"

    def run_group(self, variants: tuple, finish: str, count: str | None) -> None:
        w = self.w
        w(1, "out = []")
        if variants[0][0] is None:
            if count:
                w(1, count)
            w(1, f"{self.join_names[id(variants[0][1])]}(None, out)")
        else:
            # starter with the smallest relation, first on ties
            first, *others = variants
            w(1, f"best, size = {self.join_names[id(first[1])]}, len({self.rel_names[first[0]]})")
            w(1, f"src = {self.rel_names[first[0]]}")
            for pred, jp in others:
                rel = self.rel_names[pred]
                w(1, f"if len({rel}) < size:")
                w(2, f"best, size, src = {self.join_names[id(jp)]}, len({rel}), {rel}")
            w(1, "for s in src:")
            if count:
                w(2, count)
            w(2, "best(s, out)")
        w(1, finish)


def emit_source(plan: EvaluationPlan) -> SourceArtifact:
    source = _Emitter(plan).emit()
    recipe = {"language": "python", "entry_point": "evaluate", "plan_format": PLAN_FORMAT}
    return SourceArtifact(source, plan.digest, recipe)


def load_source(artifact: SourceArtifact | str, filename: str = "<aspcomp-eval>") -> Callable:
    source = artifact.source if isinstance(artifact, SourceArtifact) else artifact
    code = compile(source, filename, "exec")
    return _module_from_code(code, filename).evaluate


def _module_from_code(code, filename: str) -> types.ModuleType:
    module = types.ModuleType("aspcomp_generated")
    module.__file__ = filename
    exec(code, module.__dict__)
    return module


# --------------------------------------------------------------------- cache

@dataclass
class CacheStats:
    builds: int = 0
    hits: int = 0
    rebuilds: int = 0


class CompiledEvaluator:
    """The compiled sub-program: ``evaluator(m) -> EvalOutcome``."""

    def __init__(self, plan: EvaluationPlan, backend: str, fn: Callable | None = None,
                 cache_hit: bool = False):
        self.plan = plan
        self.backend = backend
        self.digest = plan.digest
        self.cache_hit = cache_hit
        self._fn = fn

    def __call__(self, m: Iterable[Atom], pi_prime_predicates=None, universe=None,
                 budget: int = DEFAULT_EXPLAIN_BUDGET) -> EvalOutcome:
        if self._fn is not None:
            return self._fn(m, pi_prime_predicates, universe, budget)
        return execute_plan(self.plan, m, pi_prime_predicates, universe, budget)


BACKENDS = ("interp", "emit")


class CompilationCache:
    """Plans and generated evaluators keyed by sub-program digest."""

    def __init__(self, cache_dir: str | Path | None):
        self.dir = Path(cache_dir) if cache_dir is not None else None
        self.stats = CacheStats()

    def get_or_build(self, lam: Program, backend: str = "interp") -> CompiledEvaluator:
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        digest = program_hash(lam)
        if self.dir is None:
            self.stats.builds += 1
            plan = specialize(lam)
            fn = load_source(emit_source(plan)) if backend == "emit" else None
            return CompiledEvaluator(plan, backend, fn)
        entry = self.dir / digest
        entry.mkdir(parents=True, exist_ok=True)
        with FileLock(str(self.dir / f"{digest}.lock")):
            plan = self._load_plan(entry, digest)
            fn = None
            hit = plan is not None
            if backend == "emit" and plan is not None:
                fn = self._load_code(entry)
                hit = fn is not None
            if hit:
                self.stats.hits += 1
                return CompiledEvaluator(plan, backend, fn, cache_hit=True)
            self.stats.builds += 1
            if plan is None:
                plan = specialize(lam)
                self._write(entry / "plan.bin", _PLAN_MAGIC + bytes([PLAN_FORMAT])
                            + pickle.dumps(plan, protocol=4))
            if backend == "emit":
                fn = self._build_emit(entry, plan)
            meta = {"digest": digest, "canonical": canonical_text(lam),
                    "plan_format": PLAN_FORMAT,
                    "backends": sorted({backend} | self._backends(entry)),
                    "build_log": "build.log"}
            self._write(entry / "meta.json", json.dumps(meta, indent=2, sort_keys=True).encode())
            return CompiledEvaluator(plan, backend, fn)

    @staticmethod
    def _backends(entry: Path) -> set:
        try:
            return set(json.loads((entry / "meta.json").read_text())["backends"])
        except (OSError, ValueError, KeyError):
            return set()

    @staticmethod
    def _write(path: Path, data: bytes) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)

    def _load_plan(self, entry: Path, digest: str) -> EvaluationPlan | None:
        path = entry / "plan.bin"
        if not path.exists():
            return None
        try:
            data = path.read_bytes()
            if not data.startswith(_PLAN_MAGIC) or data[len(_PLAN_MAGIC)] != PLAN_FORMAT:
                raise ValueError("bad header")
            plan = pickle.loads(data[len(_PLAN_MAGIC) + 1:])
            if not isinstance(plan, EvaluationPlan) or plan.digest != digest:
                raise ValueError("digest mismatch")
            return plan
        except Exception as exc:  # any unreadable entry is rebuilt
            log.warning("corrupted cache entry %s (%s); rebuilding", path, exc)
            self.stats.rebuilds += 1
            path.unlink(missing_ok=True)
            return None

    def _load_code(self, entry: Path) -> Callable | None:
        path = entry / "eval.code"
        if not path.exists():
            return None
        try:
            data = path.read_bytes()
            magic = importlib.util.MAGIC_NUMBER
            if not data.startswith(magic):
                raise ValueError("bytecode from another interpreter version")
            code = marshal.loads(data[len(magic):])
            return _module_from_code(code, str(entry / "eval.src")).evaluate
        except Exception as exc:
            log.warning("corrupted cache entry %s (%s); rebuilding", path, exc)
            self.stats.rebuilds += 1
            path.unlink(missing_ok=True)
            return None

    def _build_emit(self, entry: Path, plan: EvaluationPlan) -> Callable:
        artifact = emit_source(plan)
        src_path = entry / "eval.src"
        self._write(src_path, artifact.source.encode())
        try:
            code = compile(artifact.source, str(src_path), "exec")
            fn = _module_from_code(code, str(src_path)).evaluate
        except Exception as exc:
            build_log = f"{type(exc).__name__}: {exc}\n"
            (entry / "build.log").write_text(build_log)
            raise BuildError(f"building {src_path} failed", build_log) from exc
        (entry / "build.log").write_text("ok\n")
        self._write(entry / "eval.code", importlib.util.MAGIC_NUMBER + marshal.dumps(code))
        return fn


_caches: dict = {}


def get_cache(cache_dir: str | Path | None) -> CompilationCache:
    key = None if cache_dir is None else str(Path(cache_dir).resolve())
    if key not in _caches:
        _caches[key] = CompilationCache(cache_dir)
    return _caches[key]


def cache_get_or_build(lam: Program, backend: str = "interp",
                       cache_dir: str | Path | None = None) -> CompiledEvaluator:
    """Compile ``lam`` once per digest; repeated calls hit the cache."""
    return get_cache(cache_dir).get_or_build(lam, backend)
