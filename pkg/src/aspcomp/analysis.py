"""Dependency graphs, stratification, compilability and program splitting."""
from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .language import AspError, Program, Rule

POSITIVE = "+"
NEGATIVE = "-"


class NotCompilableError(AspError):
    def __init__(self, report: "CompilabilityReport"):
        super().__init__(report.describe())
        self.report = report


class SelectionError(AspError):
    pass


@dataclass(frozen=True)
class DependencyGraph:
    vertices: frozenset[str]
    edges: frozenset[tuple[str, str, str]]
    # first textual occurrence of each vertex; used for deterministic ordering
    positions: dict = field(compare=False, hash=False, repr=False, default_factory=dict)

    def successors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {v: [] for v in self.vertices}
        for a, b, _ in sorted(self.edges, key=self._edge_key):
            if b not in out[a]:
                out[a].append(b)
        return out

    def position(self, vertex: str) -> int:
        return self.positions.get(vertex, len(self.positions))

    def _edge_key(self, edge):
        return (self.position(edge[0]), self.position(edge[1]), edge[2])


def dependency_graph(program: Program) -> DependencyGraph:
    """Labelled predicate graph; only predicates occurring in some head are vertices."""
    vertices = set(program.head_predicates)
    edges = set()
    for rule in program.rules:
        heads = rule.head_predicates()
        for h in heads:
            for a in rule.positive_body:
                if a.predicate in vertices:
                    edges.add((a.predicate, h, POSITIVE))
            for a in rule.negative_body:
                if a.predicate in vertices:
                    edges.add((a.predicate, h, NEGATIVE))
        # disjunctive heads: every ordered pair of distinct head positions
        for i, a in enumerate(rule.head):
            for j, b in enumerate(rule.head):
                if i != j:
                    edges.add((a.predicate, b.predicate, NEGATIVE))
    positions = {p: i for p, i in program.predicate_positions().items() if p in vertices}
    return DependencyGraph(frozenset(vertices), frozenset(edges), positions)


def _tarjan(graph: DependencyGraph) -> list[list[str]]:
    """Iterative Tarjan; returns SCCs in reverse topological order."""
    succ = graph.successors()
    order = sorted(graph.vertices, key=graph.position)
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    result: list[list[str]] = []
    counter = 0
    for root in order:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            nbrs = succ[v]
            while i < len(nbrs):
                w = nbrs[i]
                i += 1
                if w not in index:
                    work.append((v, i))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                result.append(sorted(comp, key=graph.position))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return result


@dataclass(frozen=True)
class SccOrder:
    components: tuple[frozenset[str], ...]

    def component_of(self) -> dict[str, int]:
        return {p: i for i, comp in enumerate(self.components) for p in comp}

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)


def scc_order(graph: DependencyGraph) -> SccOrder:
    """Condensation in topological order.

    Ties between components that are simultaneously ready are broken by the
    smallest first-occurrence position of any member predicate.
    """
    comps = _tarjan(graph)
    comp_of = {p: i for i, c in enumerate(comps) for p in c}
    preds: dict[int, set[int]] = defaultdict(set)
    succs: dict[int, set[int]] = defaultdict(set)
    for a, b, _ in graph.edges:
        ca, cb = comp_of[a], comp_of[b]
        if ca != cb:
            succs[ca].add(cb)
            preds[cb].add(ca)
    indegree = {i: len(preds[i]) for i in range(len(comps))}
    key = {i: min(graph.position(p) for p in c) for i, c in enumerate(comps)}
    ready = [(key[i], i) for i, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    ordered = []
    while ready:
        _, i = heapq.heappop(ready)
        ordered.append(frozenset(comps[i]))
        for j in succs[i]:
            indegree[j] -= 1
            if indegree[j] == 0:
                heapq.heappush(ready, (key[j], j))
    return SccOrder(tuple(ordered))


def is_stratified(graph: DependencyGraph) -> tuple[bool, list[str] | None]:
    """Return ``(True, None)`` or ``(False, cycle)`` where ``cycle`` lists the
    predicates of a loop through a negative edge, starting at the edge source."""
    comp_of = {p: i for i, c in enumerate(_tarjan(graph)) for p in c}
    negatives = sorted((e for e in graph.edges if e[2] == NEGATIVE), key=graph._edge_key)
    for a, b, _ in negatives:
        if comp_of[a] != comp_of[b]:
            continue
        if a == b:
            return False, [a]
        return False, [a] + _path(graph, b, a)[:-1]
    return True, None


def _path(graph: DependencyGraph, start: str, goal: str) -> list[str]:
    """Shortest path start -> goal (inclusive), BFS in deterministic order."""
    succ = graph.successors()
    parent = {start: None}
    queue = [start]
    for v in queue:
        if v == goal:
            break
        for w in succ[v]:
            if w not in parent:
                parent[w] = v
                queue.append(w)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


@dataclass(frozen=True)
class CompilabilityReport:
    compilable: bool
    stratified: bool
    negative_cycle_witness: tuple[str, ...] | None = None
    head_overlap: frozenset[str] = frozenset()

    def describe(self) -> str:
        if self.compilable:
            return "compilable"
        reasons = []
        if not self.stratified:
            reasons.append("not stratified, negative cycle through "
                           + " -> ".join(self.negative_cycle_witness))
        if self.head_overlap:
            reasons.append("head predicates used outside the sub-program: "
                           + ", ".join(sorted(self.head_overlap)))
        return "not compilable: " + "; ".join(reasons)


def _rule_difference(pi: Program, lam: Program) -> list[Rule]:
    remaining = Counter(lam.rules)
    rest = []
    for r in pi.rules:
        if remaining[r] > 0:
            remaining[r] -= 1
        else:
            rest.append(r)
    missing = [r for r, n in remaining.items() if n > 0]
    if missing:
        raise SelectionError(f"rule '{missing[0]}' is not part of the program")
    return rest


def _report(lam: Program, rest: Iterable[Rule]) -> CompilabilityReport:
    ok, witness = is_stratified(dependency_graph(lam))
    rest_preds = {p for r in rest for p in r.predicates()}
    overlap = frozenset(lam.head_predicates & rest_preds)
    return CompilabilityReport(
        compilable=ok and not overlap,
        stratified=ok,
        negative_cycle_witness=tuple(witness) if witness else None,
        head_overlap=overlap,
    )


def is_compilable(lam: Program, pi: Program) -> CompilabilityReport:
    return _report(lam, _rule_difference(pi, lam))


def classify_rules(lambda_r: Program, order: SccOrder) -> dict[int, tuple[list[Rule], list[Rule]]]:
    """Map SCC index -> (exit rules, recursive rules).

    A rule is an exit rule of its head's component when none of its body
    predicates lies in that component.  Constraints are never classified.
    """
    comp_of = order.component_of()
    out: dict[int, tuple[list[Rule], list[Rule]]] = {i: ([], []) for i in range(len(order))}
    for r in lambda_r.rules:
        if r.is_constraint:
            continue
        k = comp_of[r.head[0].predicate]
        recursive = any(comp_of.get(p) == k for p in r.body_predicates())
        out[k][1 if recursive else 0].append(r)
    return out


@dataclass(frozen=True)
class SplitProgram:
    pi_prime: Program
    lambda_r: Program
    lambda_c: Program

    @property
    def lam(self) -> Program:
        return self.lambda_r.union(self.lambda_c)


def _check_indices(pi: Program, selection: Iterable[int]) -> set[int]:
    chosen = set(selection)
    bad = [i for i in chosen if not 1 <= i <= len(pi)]
    if bad:
        raise SelectionError(f"rule index {min(bad)} out of range 1..{len(pi)}")
    return chosen


def split_program(pi: Program, selection: Iterable[int]) -> SplitProgram:
    """Partition ``pi`` by 1-based rule indices into pi', lambda_R, lambda_C."""
    chosen = _check_indices(pi, selection)
    lam = [r for i, r in enumerate(pi.rules, 1) if i in chosen]
    rest = [r for i, r in enumerate(pi.rules, 1) if i not in chosen]
    report = _report(Program(tuple(lam)), rest)
    if not report.compilable:
        raise NotCompilableError(report)
    return SplitProgram(
        pi_prime=Program(tuple(rest)),
        lambda_r=Program(tuple(r for r in lam if r.head)),
        lambda_c=Program(tuple(r for r in lam if not r.head)),
    )


def selection_report(pi: Program, selection: Iterable[int]) -> CompilabilityReport:
    chosen = _check_indices(pi, selection)
    lam = [r for i, r in enumerate(pi.rules, 1) if i in chosen]
    rest = [r for i, r in enumerate(pi.rules, 1) if i not in chosen]
    return _report(Program(tuple(lam)), rest)


def suggest_subprogram(pi: Program) -> frozenset[int]:
    """Greedy compilable selection.

    Starts from every constraint and tries each remaining non-fact rule in
    textual order.  A rule is added together with every rule mentioning one
    of the predicates it would define, since those must leave pi' as well;
    the group is kept when the enlarged selection stays compilable and
    contains no fact.
    """
    rules = pi.rules
    mentions: dict[str, set[int]] = defaultdict(set)
    for i, r in enumerate(rules):
        for p in r.predicates():
            mentions[p].add(i)
    chosen = {i for i, r in enumerate(rules) if r.is_constraint}
    for i, r in enumerate(rules):
        if i in chosen or r.is_fact or r.is_constraint:
            continue
        group = {i}
        frontier = [i]
        while frontier:
            j = frontier.pop()
            for p in rules[j].head_predicates():
                for k in mentions[p]:
                    if k not in group and k not in chosen:
                        group.add(k)
                        frontier.append(k)
        if any(rules[k].is_fact for k in group):
            continue
        candidate = chosen | group
        lam = Program(tuple(rules[k] for k in sorted(candidate)))
        rest = [rules[k] for k in range(len(rules)) if k not in candidate]
        if _report(lam, rest).compilable:
            chosen = candidate
    return frozenset(i + 1 for i in chosen)


def constraints_only(pi: Program) -> frozenset[int]:
    return frozenset(i for i, r in enumerate(pi.rules, 1) if r.is_constraint)


def read_selection_file(path: str | Path) -> frozenset[int]:
    """Sidecar selection file: whitespace/comma separated 1-based indices,
    ``#`` starts a comment."""
    out = set()
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        for tok in line.replace(",", " ").split():
            try:
                out.add(int(tok))
            except ValueError:
                raise SelectionError(f"bad rule index {tok!r} in {path}") from None
    return frozenset(out)
