"""Partial compilation of answer set programs.

A program is split into a part handed to a solver and a stratified part
that is compiled into a bottom-up evaluator.  Candidate answer sets of the
solver part are extended by the compiled evaluator or rejected with ground
constraints explaining the failure.
"""
from .analysis import (CompilabilityReport, DependencyGraph, NotCompilableError, SelectionError,
                       SplitProgram, dependency_graph, is_compilable, is_stratified, scc_order,
                       split_program, suggest_subprogram)
from .interp import (EvalOutcome, ExplanationOverflow, GroundConstraint, build_constraint,
                     evaluate_bottom_up, unify)
from .language import (ArityError, AspError, Atom, Literal, ParseError, Program, Rule,
                       SafetyError, Variable, canonical_text, format_atoms, parse_atom,
                       parse_program, parse_rule, parse_with_markers)
from .plancomp import (BuildError, EvaluationPlan, cache_get_or_build, emit_source,
                       execute_plan, program_hash, specialize)
from .solve import (INCOHERENT, BudgetExceeded, CandidateBudgetExceeded,
                    GroundingBudgetExceeded, SolveOptions, SolveStats, enumerate_answer_sets,
                    ground_program, is_stable, perfect_model, solve)

__version__ = "0.1.0"
