"""
Plugging in an external solver
==============================

Any command that reads a program on stdin and prints one answer set (or
``INCOHERENT``) can produce candidates.  Here the "external" solver is a
small script around the internal enumerator, run as a separate process.
"""

import sys
import tempfile
from pathlib import Path

from aspcomp import parse_program, solve
from aspcomp.solve import SolveOptions

stub = """
import sys
from aspcomp.language import format_atoms, parse_program
from aspcomp.solve import enumerate_answer_sets
program = sys.stdin.read()
first = next(enumerate_answer_sets(parse_program(program)), None)
print("INCOHERENT" if first is None else format_atoms(first))
"""

pi_prime = parse_program("in(X) | out(X) :- v(X). v(1). v(2). e(1,2).")
lam = parse_program("""
r(X,Y) :- e(X,Y).
r(X,Y) :- e(X,Z), r(Z,Y).
:- in(X), in(Y), not r(X,Y).
""")

with tempfile.TemporaryDirectory() as d:
    script = Path(d) / "solver.py"
    script.write_text(stub)
    # learned constraints are appended to the program text on every call
    result = solve(pi_prime, lam, SolveOptions(solver_cmd=[sys.executable, str(script)]))

print("answer:", " ".join(sorted(str(a) for a in result.answer)))
print("candidates:", result.stats.candidates, "learned:", [str(c) for c in result.learned])
