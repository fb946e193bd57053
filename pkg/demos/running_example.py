"""
Guess a node set, check it with a compiled sub-program
=======================================================

The guess ``in(X) | out(X)`` stays with the candidate search.  The
transitive closure and the check that every chosen pair is connected are
compiled, so their ground instances are never written down.
"""

from aspcomp import parse_with_markers, solve
from aspcomp.analysis import selection_report, split_program
from aspcomp.solve import enumerate_answer_sets, is_stable

# %@compile marks the rules that go into the compiled part
text = """
in(X) | out(X) :- v(X).
%@compile
r(X,Y) :- e(X,Y).
%@compile
r(X,Y) :- e(X,Z), r(Z,Y).
%@compile
:- in(X), in(Y), not r(X,Y).

v(1). v(2). v(3).
e(1,2). e(2,1). e(2,3).
"""
program, marked = parse_with_markers(text)
print(selection_report(program, marked).describe())

sp = split_program(program, marked)
print("candidate side:", len(sp.pi_prime), "rules")
print("compiled rules:", len(sp.lambda_r), " compiled constraints:", len(sp.lambda_c))

# every rejected candidate comes back as a ground constraint over the guess
result = solve(sp.pi_prime, sp.lam, keep_candidates=True)
for number, m in enumerate(result.candidates, 1):
    chosen = sorted(a.args[0] for a in m if a.predicate == "in")
    print(f"candidate {number}: in = {chosen}")
for c, origin in zip(result.learned, result.origins):
    print(f"  learned from candidate {origin}: {c}")

answer = sorted(str(a) for a in result.answer if a.predicate in ("in", "r"))
print("answer:", " ".join(answer))

# the answer is a stable model of the whole program
print("stable:", is_stable(program, result.answer))
print("first answer set by full enumeration agrees:",
      next(enumerate_answer_sets(program)) == result.answer)
