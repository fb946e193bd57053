"""Core ASP syntax: terms, atoms, literals, rules and programs.

Constants are plain Python values (``int`` or ``str``); variables are
:class:`Variable` instances.  Ground atoms therefore carry their argument
tuple directly, which is what the evaluation engines store in relations.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Union


class AspError(Exception):
    """Base class for errors raised while handling programs."""


class ParseError(AspError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class ArityError(AspError):
    def __init__(self, predicate: str, first: int, second: int):
        super().__init__(
            f"predicate {predicate!r} used with arity {first} and {second}")
        self.predicate = predicate


class SafetyError(AspError):
    def __init__(self, rule: "Rule", variable: str, index: int | None = None):
        where = f"rule {index}" if index is not None else "rule"
        super().__init__(
            f"{where} '{rule}' is unsafe: variable {variable} does not occur "
            "in a positive body literal")
        self.rule = rule
        self.variable = variable


@dataclass(frozen=True, slots=True, order=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"Variable({self.name!r})"


Constant = Union[int, str]
Term = Union[int, str, Variable]


def is_variable(term: Term) -> bool:
    return isinstance(term, Variable)


def term_key(term: Term) -> tuple:
    """Total order on terms: integers, then symbols, then variables."""
    if isinstance(term, Variable):
        return (2, term.name)
    if isinstance(term, int):
        return (0, term)
    return (1, term)


def term_text(term: Term) -> str:
    return term.name if isinstance(term, Variable) else str(term)


class Atom(NamedTuple):
    predicate: str
    args: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_ground(self) -> bool:
        return not any(isinstance(t, Variable) for t in self.args)

    def variables(self) -> set[str]:
        return {t.name for t in self.args if isinstance(t, Variable)}

    def sort_key(self) -> tuple:
        return (self.predicate, tuple(term_key(t) for t in self.args))

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({','.join(term_text(t) for t in self.args)})"


class Literal(NamedTuple):
    atom: Atom
    positive: bool = True

    @property
    def predicate(self) -> str:
        return self.atom.predicate

    def complement(self) -> "Literal":
        return Literal(self.atom, not self.positive)

    def is_ground(self) -> bool:
        return self.atom.is_ground()

    def variables(self) -> set[str]:
        return self.atom.variables()

    def sort_key(self) -> tuple:
        return (not self.positive,) + self.atom.sort_key()

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"not {self.atom}"


def pos(atom: Atom) -> Literal:
    return Literal(atom, True)


def neg(atom: Atom) -> Literal:
    return Literal(atom, False)


@dataclass(frozen=True)
class Rule:
    """``h1 | ... | hn :- b1, ..., bm.`` with n + m > 0."""

    head: tuple[Atom, ...] = ()
    body: tuple[Literal, ...] = ()

    def __post_init__(self):
        if not self.head and not self.body:
            raise AspError("a rule needs a head or a body")

    @property
    def is_constraint(self) -> bool:
        return not self.head

    @property
    def is_fact(self) -> bool:
        return len(self.head) == 1 and not self.body

    @property
    def is_disjunctive(self) -> bool:
        return len(self.head) > 1

    @property
    def positive_body(self) -> tuple[Atom, ...]:
        return tuple(l.atom for l in self.body if l.positive)

    @property
    def negative_body(self) -> tuple[Atom, ...]:
        return tuple(l.atom for l in self.body if not l.positive)

    def atoms(self) -> Iterator[Atom]:
        yield from self.head
        for lit in self.body:
            yield lit.atom

    def predicates(self) -> set[str]:
        return {a.predicate for a in self.atoms()}

    def head_predicates(self) -> set[str]:
        return {a.predicate for a in self.head}

    def body_predicates(self) -> set[str]:
        return {l.atom.predicate for l in self.body}

    def variables(self) -> set[str]:
        out: set[str] = set()
        for a in self.atoms():
            out |= a.variables()
        return out

    def is_ground(self) -> bool:
        return all(a.is_ground() for a in self.atoms())

    def unsafe_variables(self) -> list[str]:
        bound: set[str] = set()
        for a in self.positive_body:
            bound |= a.variables()
        seen: list[str] = []
        for a in self.atoms():
            for t in a.args:
                if isinstance(t, Variable) and t.name not in bound and t.name not in seen:
                    seen.append(t.name)
        return seen

    def __str__(self) -> str:
        head = " | ".join(str(a) for a in self.head)
        if not self.body:
            return f"{head}."
        body = ", ".join(str(l) for l in self.body)
        return f"{head} :- {body}." if head else f":- {body}."


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...] = ()
    arities: dict = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.arities is None:
            object.__setattr__(self, "arities", _arity_table(self.rules))

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __str__(self) -> str:
        return canonical_text(self)

    @cached_property
    def predicates(self) -> frozenset[str]:
        return frozenset(p for r in self.rules for p in r.predicates())

    @cached_property
    def head_predicates(self) -> frozenset[str]:
        return frozenset(p for r in self.rules for p in r.head_predicates())

    def heads(self) -> set[Atom]:
        return {a for r in self.rules for a in r.head}

    @cached_property
    def universe(self) -> frozenset:
        """Herbrand universe: every constant occurring in the program."""
        return frozenset(t for r in self.rules for a in r.atoms()
                         for t in a.args if not isinstance(t, Variable))

    @property
    def facts(self) -> tuple[Rule, ...]:
        return tuple(r for r in self.rules if r.is_fact)

    @property
    def constraints(self) -> tuple[Rule, ...]:
        return tuple(r for r in self.rules if r.is_constraint)

    @property
    def proper_rules(self) -> tuple[Rule, ...]:
        """Rules with a non-empty head."""
        return tuple(r for r in self.rules if r.head)

    def predicate_positions(self) -> dict[str, int]:
        """First textual occurrence index of every predicate."""
        out: dict[str, int] = {}
        for r in self.rules:
            for a in r.atoms():
                out.setdefault(a.predicate, len(out))
        return out

    def union(self, *others: "Program | Iterable[Rule]") -> "Program":
        rules = list(self.rules)
        for o in others:
            rules.extend(o.rules if isinstance(o, Program) else o)
        return Program(tuple(rules))


def _arity_table(rules: Iterable[Rule]) -> dict[str, int]:
    table: dict[str, int] = {}
    for r in rules:
        for a in r.atoms():
            known = table.setdefault(a.predicate, a.arity)
            if known != a.arity:
                raise ArityError(a.predicate, known, a.arity)
    return table


def canonical_text(program: Program) -> str:
    """One rule per line, input order, no comments."""
    return "".join(f"{r}\n" for r in program.rules)


# --------------------------------------------------------------------- parser

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<if>:-)
  | (?P<num>-?\d+)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z][A-Za-z0-9_]*)
  | (?P<punct>[(),.|])
""", re.VERBOSE)

MARKER = "%@compile"


class _Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> Iterator[_Token]:
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        col = pos - line_start + 1
        if kind == "comment":
            if tok.rstrip() == MARKER:
                yield _Token("marker", tok, line, col)
        elif kind != "ws":
            if kind == "punct":
                kind = tok
            elif kind == "ident" and tok == "not":
                kind = "not"
            yield _Token(kind, tok, line, col)
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    yield _Token("eof", "", line, pos - line_start + 1)


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0
        self.markers: set[int] = set()

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self, kind: str | None = None) -> _Token:
        tok = self.tokens[self.i]
        if kind is not None and tok.kind != kind:
            found = tok.text or "end of input"
            raise ParseError(f"expected {kind!r}, found {found!r}", tok.line, tok.col)
        self.i += 1
        return tok

    def program(self) -> list[tuple[Rule, _Token]]:
        rules = []
        pending_marker = False
        while self.peek().kind != "eof":
            if self.peek().kind == "marker":
                self.take()
                pending_marker = True
                continue
            start = self.peek()
            rule = self.rule()
            rules.append((rule, start))
            if pending_marker:
                self.markers.add(len(rules))
                pending_marker = False
        return rules

    def rule(self) -> Rule:
        head: list[Atom] = []
        body: list[Literal] = []
        start = self.peek()
        if self.peek().kind != "if":
            head.append(self.atom())
            while self.peek().kind == "|":
                self.take()
                head.append(self.atom())
        if self.peek().kind == "if":
            self.take()
            body.append(self.literal())
            while self.peek().kind == ",":
                self.take()
                body.append(self.literal())
        self.take(".")
        if not head and not body:
            raise ParseError("empty rule", start.line, start.col)
        return Rule(tuple(head), tuple(body))

    def literal(self) -> Literal:
        if self.peek().kind == "not":
            self.take()
            return Literal(self.atom(), False)
        return Literal(self.atom(), True)

    def atom(self) -> Atom:
        name = self.take("ident").text
        args: list[Term] = []
        if self.peek().kind == "(":
            self.take()
            args.append(self.term())
            while self.peek().kind == ",":
                self.take()
                args.append(self.term())
            self.take(")")
        return Atom(name, tuple(args))

    def term(self) -> Term:
        tok = self.peek()
        if tok.kind == "num":
            self.take()
            return int(tok.text)
        if tok.kind == "ident":
            self.take()
            return tok.text
        if tok.kind == "var":
            self.take()
            return Variable(tok.text)
        raise ParseError(f"expected a term, found {tok.text or 'end of input'!r}",
                         tok.line, tok.col)


def parse_with_markers(text: str) -> tuple[Program, frozenset[int]]:
    """Parse ``text`` and also return the 1-based indices of rules preceded
    by a ``%@compile`` marker line."""
    parser = _Parser(text)
    located = parser.program()
    table: dict[str, tuple[int, _Token]] = {}
    for rule, tok in located:
        for a in rule.atoms():
            known = table.get(a.predicate)
            if known is None:
                table[a.predicate] = (a.arity, tok)
            elif known[0] != a.arity:
                raise ArityError(a.predicate, known[0], a.arity)
    for index, (rule, tok) in enumerate(located, start=1):
        unsafe = rule.unsafe_variables()
        if unsafe:
            raise SafetyError(rule, unsafe[0], index)
    program = Program(tuple(r for r, _ in located))
    return program, frozenset(parser.markers)


def parse_program(text: str) -> Program:
    return parse_with_markers(text)[0]


def parse_atom(text: str) -> Atom:
    parser = _Parser(text)
    atom = parser.atom()
    parser.take("eof")
    return atom


def parse_rule(text: str) -> Rule:
    program = parse_program(text)
    if len(program) != 1:
        raise AspError(f"expected exactly one rule, got {len(program)}")
    return program.rules[0]


def check_safety(program: Program) -> None:
    for index, rule in enumerate(program.rules, start=1):
        unsafe = rule.unsafe_variables()
        if unsafe:
            raise SafetyError(rule, unsafe[0], index)


def format_atoms(atoms: Iterable[Atom]) -> str:
    """Space separated atoms in canonical order."""
    return " ".join(str(a) for a in sorted(atoms, key=Atom.sort_key))
