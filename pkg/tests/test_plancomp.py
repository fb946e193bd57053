import logging
import pickle
import random
import re
import threading

import pytest
from hypothesis import given, settings, strategies as st

from aspcomp import plancomp
from aspcomp.analysis import NotCompilableError
from aspcomp.generators import random_interpretation, random_split_program
from aspcomp.interp import evaluate_bottom_up
from aspcomp.language import Program, parse_atom, parse_program
from aspcomp.plancomp import (BuildError, CompilationCache, emit_source, execute_plan,
                              load_source, program_hash, specialize)


def atoms(text):
    return frozenset(parse_atom(t) for t in text.split())


def test_plan_of_running_example(pi1_lambda):
    plan = specialize(pi1_lambda)
    assert len(plan.strata) == 1
    block = plan.strata[0]
    assert block.members == ("r",)
    (exit_group,) = block.exit_groups
    assert [pred for pred, _ in exit_group.variants] == ["e"]
    assert exit_group.variants[0][1].rule == "r(X,Y) :- e(X,Y)."
    ((starter, variants),) = block.triggers
    assert starter == "r"
    assert [jp.rule for _, jp in variants] == ["r(X,Y) :- e(X,Z), r(Z,Y)."]
    (cgroup,) = plan.constraints
    assert cgroup.variants[0][0] == "in"
    assert plan.index_requirements == {"e": ((1,),)}


def test_plan_of_single_constraint():
    plan = specialize(parse_program(":- a(X), not b(X)."))
    assert plan.strata == ()
    assert len(plan.constraints) == 1


def test_plan_strata_follow_dependencies():
    plan = specialize(parse_program("p(X) :- q(X). q(X) :- e(X)."))
    assert [b.members for b in plan.strata] == [("q",), ("p",)]


def test_plan_rejects_unstratified():
    with pytest.raises(NotCompilableError):
        specialize(parse_program("p(X) :- v(X), not p(X)."))


def test_plan_holds_no_analysis_objects(pi1_lambda):
    text = repr(specialize(pi1_lambda))
    assert "DependencyGraph" not in text and "SccOrder" not in text


def test_execute_plan_on_cycle(pi1_lambda):
    m = atoms("v(1) v(2) e(1,2) e(2,1) in(1) in(2)")
    out = execute_plan(specialize(pi1_lambda), m)
    assert out == evaluate_bottom_up(pi1_lambda, m)
    assert out.constraints == set()
    assert out.model == m | atoms("r(1,2) r(2,1) r(1,1) r(2,2)")


def test_execute_plan_on_empty_candidate(pi1_lambda):
    out = execute_plan(specialize(pi1_lambda), frozenset())
    assert out.constraints == set() and out.model == set()


def test_plan_execution_has_no_dispatch(pi1_lambda):
    m = atoms("v(1) v(2) v(3) e(1,2) e(2,3) e(3,1) in(1) in(3)")
    generic = evaluate_bottom_up(pi1_lambda, m)
    planned = execute_plan(specialize(pi1_lambda), m)
    assert planned.counters.dispatch == 0
    assert generic.counters.dispatch >= generic.counters.fixpoint_iterations > 0
    g, p = generic.counters.as_dict(), planned.counters.as_dict()
    g.pop("dispatch"), p.pop("dispatch")
    assert g == p


def test_emitted_source_is_deterministic(pi1_lambda):
    a = emit_source(specialize(pi1_lambda)).source
    b = emit_source(specialize(parse_program("% again\n" + str(pi1_lambda)))).source
    assert a == b


def test_emitted_source_is_straight_line(pi1_lambda):
    src = emit_source(specialize(pi1_lambda)).source
    assert "def evaluate(m" in src
    # rule bodies are unrolled joins, nothing iterates over rules or components
    assert not re.search(r"for \w+ in .*(rules|strata|components|scc)", src)
    assert "dependency_graph" not in src and "scc_order" not in src
    assert src.count("def join_") == 4


def test_emitted_evaluator_matches(pi1_lambda):
    fn = load_source(emit_source(specialize(pi1_lambda)))
    m = atoms("v(1) v(2) e(1,2) in(1) in(2)")
    assert fn(m) == evaluate_bottom_up(pi1_lambda, m)


def test_program_hash():
    a = parse_program("% first\nr(X,Y) :- e(X,Y).\n")
    b = parse_program("r(X,Y) :-\n   e(X,Y). % trailing\n")
    c = parse_program("r(X,Y) :- not e(X,Y), v(X), v(Y).")
    d = parse_program("r(X,Y) :- e(X,Y), v(X), v(Y).")
    assert program_hash(a) == program_hash(b)
    assert program_hash(c) != program_hash(d)
    assert re.fullmatch(r"[0-9a-f]{64}", program_hash(a))


def test_plan_pickles(pi1_lambda):
    plan = specialize(pi1_lambda)
    again = pickle.loads(pickle.dumps(plan))
    m = atoms("v(1) v(2) e(1,2) in(1) in(2)")
    assert execute_plan(again, m) == execute_plan(plan, m)


# -------------------------------------------------------------------- cache

M = atoms("v(1) v(2) e(1,2) in(1) in(2)")


def test_cache_builds_once(tmp_path, pi1_lambda):
    cache = CompilationCache(tmp_path)
    first = cache.get_or_build(pi1_lambda)
    second = cache.get_or_build(pi1_lambda)
    assert (cache.stats.builds, cache.stats.hits) == (1, 1)
    assert not first.cache_hit and second.cache_hit
    assert first.digest == second.digest
    assert first(M) == second(M)
    entry = tmp_path / first.digest
    assert (entry / "plan.bin").exists() and (entry / "meta.json").exists()
    assert not (entry / "eval.src").exists()


def test_cache_survives_new_process_view(tmp_path, pi1_lambda):
    CompilationCache(tmp_path).get_or_build(pi1_lambda)
    fresh = CompilationCache(tmp_path)
    fresh.get_or_build(pi1_lambda)
    assert (fresh.stats.builds, fresh.stats.hits) == (0, 1)


def test_corrupt_entry_is_rebuilt(tmp_path, pi1_lambda, caplog):
    cache = CompilationCache(tmp_path)
    handle = cache.get_or_build(pi1_lambda)
    (tmp_path / handle.digest / "plan.bin").write_bytes(b"garbage")
    with caplog.at_level(logging.WARNING):
        again = cache.get_or_build(pi1_lambda)
    assert "corrupted cache entry" in caplog.text
    assert cache.stats.rebuilds == 1 and cache.stats.builds == 2
    assert again(M) == handle(M)


def test_emit_backend_cache(tmp_path, pi1_lambda):
    cache = CompilationCache(tmp_path)
    built = cache.get_or_build(pi1_lambda, "emit")
    hit = cache.get_or_build(pi1_lambda, "emit")
    assert hit.cache_hit and cache.stats.builds == 1
    entry = tmp_path / built.digest
    assert (entry / "eval.src").read_text() == emit_source(specialize(pi1_lambda)).source
    assert hit(M) == evaluate_bottom_up(pi1_lambda, M)
    (entry / "eval.code").write_bytes(b"not bytecode")
    repaired = cache.get_or_build(pi1_lambda, "emit")
    assert cache.stats.rebuilds == 1
    assert repaired(M) == hit(M)


def test_build_failure_carries_log(tmp_path, pi1_lambda, monkeypatch):
    bad = plancomp.SourceArtifact("def evaluate(:\n", "x")
    monkeypatch.setattr(plancomp, "emit_source", lambda plan: bad)
    with pytest.raises(BuildError) as info:
        CompilationCache(tmp_path).get_or_build(pi1_lambda, "emit")
    assert "SyntaxError" in info.value.build_log
    digest = program_hash(pi1_lambda)
    assert "SyntaxError" in (tmp_path / digest / "build.log").read_text()


def test_concurrent_builds_converge(tmp_path, pi1_lambda):
    handles = []

    def work():
        handles.append(CompilationCache(tmp_path).get_or_build(pi1_lambda, "emit"))

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({h.digest for h in handles}) == 1
    assert len({h(M) for h in handles}) == 1


# ---------------------------------------------------------------- properties

def _case(seed):
    inst = random_split_program(seed)
    rng = random.Random(seed)
    preds = inst.pi_prime.predicates | (inst.lam.predicates - inst.lam.head_predicates)
    return inst, random_interpretation(inst.whole, rng, rng.uniform(0.1, 0.6), preds)


@given(st.integers(0, 10 ** 6))
def test_plan_equals_generic(seed):
    inst, m = _case(seed)
    universe = inst.whole.universe
    generic = evaluate_bottom_up(inst.lam, m, universe=universe)
    planned = execute_plan(specialize(inst.lam), m, universe=universe)
    assert planned == generic
    assert planned.counters.dispatch == 0


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6))
def test_emitted_equals_generic(seed):
    inst, m = _case(seed)
    universe = inst.whole.universe
    fn = load_source(emit_source(specialize(inst.lam)))
    assert fn(m, None, universe) == evaluate_bottom_up(inst.lam, m, universe=universe)


@given(st.integers(0, 10 ** 6))
def test_hash_depends_only_on_canonical_text(seed):
    lam = random_split_program(seed).lam
    assert program_hash(parse_program("% x\n" + str(lam))) == program_hash(lam)
    assert program_hash(Program(lam.rules + lam.rules[:1])) != program_hash(lam)
