import pytest

from aspcomp.bench import bench
from aspcomp.solve import SolveOptions


def test_same_seed_same_report():
    a = bench("e1", n=30, density=0.1, seed=7).to_json()
    b = bench("e1", n=30, density=0.1, seed=7).to_json()
    assert a == b
    assert bench("e1", n=30, density=0.1, seed=8).to_json() != a


def test_e1_counters():
    (row,) = bench("e1", n=40, density=0.05, seed=7).rows
    if row["outcome"].startswith("model"):
        assert row["stats"]["lambda_ground_instances"] == 0
    assert row["constraint_ground_instances"] >= row["nodes"] ** 2
    assert row["baseline_ground_instances"] >= row["r_tuples"]


@pytest.mark.parametrize("scenario", ["e3-kcut", "e4-mincut-tc"])
def test_guess_scenarios_agree_with_oracle(scenario):
    report = bench(scenario, n=6, density=0.3, seed=1, instances=3)
    for row in report.rows:
        assert row["agrees_with_oracle"] is True


def test_budget_is_recorded_per_row():
    report = bench("e3-kcut", n=6, density=0.3, seed=1,
                   opts=SolveOptions(budget_candidates=1, budget_ground=10))
    (row,) = report.rows
    assert row["baseline_outcome"] == "budget-exceeded"
    assert row["outcome"] == "budget-exceeded" and "budget" in row["error"]
    assert "agrees_with_oracle" not in row


def test_timings_only_on_request():
    assert "times" not in bench("e1", n=10, seed=1).rows[0]
    assert "times" in bench("e1", n=10, seed=1, timings=True).rows[0]


def test_unknown_scenario():
    with pytest.raises(ValueError):
        bench("e2")
