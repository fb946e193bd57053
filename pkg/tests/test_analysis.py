import random

import pytest
from hypothesis import given, strategies as st

from aspcomp.analysis import (NEGATIVE, POSITIVE, NotCompilableError, SelectionError,
                              classify_rules, constraints_only, dependency_graph,
                              is_compilable, is_stratified, read_selection_file, scc_order,
                              selection_report, split_program, suggest_subprogram)
from aspcomp.generators import random_split_program, random_stratified_program
from aspcomp.language import Program, parse_program

from conftest import PI1_RULES

PI1_WITH_FACTS = PI1_RULES + "v(1). v(2). e(1,2). e(2,1).\n"


def test_graph_of_running_example(pi1):
    g = dependency_graph(pi1)
    assert g.vertices == {"in", "out", "r"}
    assert g.edges == {("in", "out", NEGATIVE), ("out", "in", NEGATIVE), ("r", "r", POSITIVE)}


def test_graph_of_empty_program():
    g = dependency_graph(Program())
    assert g.vertices == set() and g.edges == set()


def test_negative_edge():
    g = dependency_graph(parse_program("p :- not q. q."))
    assert g.vertices == {"p", "q"}
    assert g.edges == {("q", "p", NEGATIVE)}


def test_disjunction_over_one_predicate_is_negative_self_loop():
    g = dependency_graph(parse_program("p(X) | p(Y) :- e(X,Y)."))
    assert g.edges == {("p", "p", NEGATIVE)}
    assert is_stratified(g) == (False, ["p"])


def test_positive_self_loop_is_stratified():
    g = dependency_graph(parse_program("r(X) :- r(X), e(X)."))
    assert g.edges == {("r", "r", POSITIVE)}
    assert is_stratified(g) == (True, None)


def test_running_example_is_not_stratified(pi1):
    ok, witness = is_stratified(dependency_graph(pi1))
    assert not ok
    assert witness == ["in", "out"]


def test_scc_orders():
    lam = Program(parse_program(PI1_RULES).rules[1:])
    assert list(scc_order(dependency_graph(lam))) == [{"r"}]
    chain = parse_program("p(X) :- q(X). q(X) :- e(X).")
    assert list(scc_order(dependency_graph(chain))) == [{"q"}, {"p"}]
    mutual = parse_program("p(X) :- q(X). q(X) :- p(X). q(X) :- e(X).")
    assert list(scc_order(dependency_graph(mutual))) == [{"p", "q"}]


def test_compilability_of_running_example_parts(pi1):
    rules = pi1.rules
    assert is_compilable(Program(rules[1:]), pi1).compilable
    assert is_compilable(Program(rules[3:]), pi1).compilable
    report = is_compilable(Program(rules[:1]), pi1)
    assert not report.compilable
    assert report.head_overlap == {"in"}
    assert "in" in report.describe()


def test_is_compilable_rejects_foreign_rules(pi1):
    with pytest.raises(SelectionError):
        is_compilable(parse_program("x :- y."), pi1)


def test_classify_running_example(pi1):
    lam_r = Program(pi1.rules[1:3])
    order = scc_order(dependency_graph(lam_r))
    exits, recursive = classify_rules(lam_r, order)[0]
    assert exits == [pi1.rules[1]]
    assert recursive == [pi1.rules[2]]


def test_classify_non_recursive_program():
    p = parse_program("p(X) :- e(X). q(X) :- p(X), not e(X).")
    classes = classify_rules(p, scc_order(dependency_graph(p)))
    assert all(not rec for _, rec in classes.values())
    assert sum(len(ex) for ex, _ in classes.values()) == 2


def test_split_running_example():
    pi = parse_program(PI1_WITH_FACTS)
    sp = split_program(pi, {2, 3, 4})
    assert sp.pi_prime.rules == (pi.rules[0],) + pi.rules[4:]
    assert sp.lambda_r.rules == pi.rules[1:3]
    assert sp.lambda_c.rules == (pi.rules[3],)


def test_empty_selection():
    pi = parse_program(PI1_WITH_FACTS)
    sp = split_program(pi, set())
    assert sp.pi_prime == pi and len(sp.lam) == 0


def test_bad_selection_is_rejected_with_report():
    pi = parse_program(PI1_WITH_FACTS)
    with pytest.raises(NotCompilableError) as info:
        split_program(pi, {1})
    assert info.value.report.head_overlap == {"in"}
    with pytest.raises(SelectionError):
        split_program(pi, {99})


def test_suggest():
    assert suggest_subprogram(parse_program(PI1_WITH_FACTS)) == {2, 3, 4}
    assert suggest_subprogram(parse_program("a. b(1). c(2).")) == set()
    p = parse_program("e(1,2). r(X,Y) :- e(X,Y). r(X,Y) :- r(X,Z), e(Z,Y). s(X) :- r(X,X).")
    assert suggest_subprogram(p) == {2, 3, 4}


def test_selection_file(tmp_path):
    f = tmp_path / "sel.txt"
    f.write_text("# compiled part\n2, 3\n4  # constraint\n")
    assert read_selection_file(f) == {2, 3, 4}
    f.write_text("two\n")
    with pytest.raises(SelectionError):
        read_selection_file(f)


# ---------------------------------------------------------------- properties

seeds = st.integers(0, 10 ** 6)


@given(seeds)
def test_compilable_heads_never_occur_elsewhere(seed):
    rng = random.Random(seed)
    inst = random_split_program(seed)
    pi = inst.whole
    chosen = {i for i in range(1, len(pi) + 1) if rng.random() < 0.4}
    report = selection_report(pi, chosen)
    rest = [r for i, r in enumerate(pi.rules, 1) if i not in chosen]
    heads = {a.predicate for i, r in enumerate(pi.rules, 1) if i in chosen for a in r.head}
    mentioned = {a.predicate for r in rest for a in r.atoms()}
    if report.compilable:
        assert not heads & mentioned
    elif report.stratified:
        assert heads & mentioned


@given(seeds)
def test_scc_order_respects_edges(seed):
    p = random_split_program(seed).whole
    g = dependency_graph(p)
    comp = scc_order(g).component_of()
    assert set(comp) == set(g.vertices)
    for a, b, _ in g.edges:
        assert comp[a] <= comp[b]


@given(seeds)
def test_split_preserves_rules_and_single_heads(seed):
    inst = random_split_program(seed)
    pi = inst.whole
    n = len(inst.pi_prime)
    sp = split_program(pi, range(n + 1, len(pi) + 1))
    assert sorted(map(str, sp.pi_prime.union(sp.lambda_r, sp.lambda_c).rules)) == \
        sorted(map(str, pi.rules))
    assert all(len(r.head) == 1 for r in sp.lambda_r.rules)


@given(seeds)
def test_constraints_are_always_compilable(seed):
    pi = random_split_program(seed).whole
    split_program(pi, constraints_only(pi))


@given(seeds)
def test_suggestion_is_compilable_and_keeps_facts(seed):
    pi = random_stratified_program(seed)
    chosen = suggest_subprogram(pi)
    assert selection_report(pi, chosen).compilable
    assert all(not pi.rules[i - 1].is_fact for i in chosen)
    # stratified, non-disjunctive: every non-fact rule is taken
    assert chosen == {i for i, r in enumerate(pi.rules, 1) if not r.is_fact}
