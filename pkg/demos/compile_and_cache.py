"""
Specialized evaluators and the compilation cache
================================================

A compiled sub-program becomes a plan of join programs.  The emit backend
turns the plan into straight-line Python; both are cached by the digest of
the canonical program text.
"""

import tempfile

from aspcomp import parse_program
from aspcomp.interp import evaluate_bottom_up
from aspcomp.language import parse_atom
from aspcomp.plancomp import CompilationCache, emit_source, execute_plan, program_hash, specialize

lam = parse_program("""
r(X,Y) :- e(X,Y).
r(X,Y) :- e(X,Z), r(Z,Y).
:- in(X), in(Y), not r(X,Y).
""")

plan = specialize(lam)
for block in plan.strata:
    print("stratum", block.members)
    for group in block.exit_groups:
        for starter, jp in group.variants:
            print("  exit, starting from", starter, ":", jp.rule)
    for starter, variants in block.triggers:
        for _, jp in variants:
            print("  recursive, triggered by", starter, ":", jp.rule)
print("indexes:", plan.index_requirements)

# the plan executes without looking up rules per tuple
m = frozenset(parse_atom(t) for t in "v(1) v(2) v(3) e(1,2) e(2,3) in(1) in(3)".split())
generic = evaluate_bottom_up(lam, m)
planned = execute_plan(plan, m)
print("same result:", generic == planned)
print("dispatch events, generic vs plan:", generic.counters.dispatch, planned.counters.dispatch)
for c in sorted(planned.constraints):
    print("explanation:", c)

# a look at the generated evaluator
source = emit_source(plan).source
print("\n".join(source.splitlines()[:25]))
print("...")

# comments and layout do not change the digest, so the second build is a hit
with tempfile.TemporaryDirectory() as d:
    cache = CompilationCache(d)
    cache.get_or_build(lam, "emit")
    again = parse_program("% same rules\n" + str(lam))
    handle = cache.get_or_build(again, "emit")
    print("digest", program_hash(again)[:16], "cache hit:", handle.cache_hit, cache.stats)
