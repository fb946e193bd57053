import pytest
from hypothesis import HealthCheck, settings

from aspcomp import Program, parse_program

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PI1_RULES = """\
in(X) | out(X) :- v(X).
r(X,Y) :- e(X,Y).
r(X,Y) :- e(X,Z), r(Z,Y).
:- in(X), in(Y), not r(X,Y).
"""


@pytest.fixture
def pi1():
    return parse_program(PI1_RULES)


@pytest.fixture
def pi1_facts():
    return parse_program(PI1_RULES + "v(1). v(2). e(1,2). e(2,1).\n")


@pytest.fixture
def pi1_lambda():
    return Program(parse_program(PI1_RULES).rules[1:])
