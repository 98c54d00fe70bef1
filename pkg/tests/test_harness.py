import json

import numpy as np
import pytest

from erwlab.backward import failures_before_kth_success
from erwlab.coupling import build_coupling_table, swap_example_table
from erwlab.fields import CoupledTrialField
from erwlab.harness import (ExperimentReport, escape_probability_gap, load_manifest, reports_json, run_suite,
                            speed_gap, strict_failure_gap, verify_coupled_domination, verify_pathwise_UV)

SMALL = [
    {"experiment": "pathwise_uv", "env": [0.9, 0.9], "episodes": 300, "horizon": 500},
    {"experiment": "coupled_domination", "p": [0.5, 0.9], "q": [0.9, 0.5], "episodes": 300, "generations": 100},
]


def test_empty_suite():
    assert run_suite("empty", 0) == []
    assert json.loads(reports_json([])) == {"passed": True, "reports": []}


def test_manifest_lists_every_experiment_kind():
    kinds = {e["experiment"] for e in load_manifest()["paper-all"]}
    assert kinds == {"pathwise_uv", "coupled_domination", "escape_gap", "speed_gap"}


def test_reports_reproducible_bytes():
    a = reports_json(run_suite(SMALL, "0x2a"))
    b = reports_json(run_suite(SMALL, 42))
    assert a == b
    assert json.loads(a)["reports"][0]["seed"] != json.loads(reports_json(run_suite(SMALL, 43)))["reports"][0]["seed"]


def test_runtime_only_on_request():
    rep = run_suite(SMALL[:1], 1, with_runtime=True)
    assert "runtime" in json.loads(reports_json(rep, with_runtime=True))["reports"][0]
    assert "runtime" not in json.loads(reports_json(rep))["reports"][0]


def test_episode_override():
    assert [r.episodes for r in run_suite(SMALL, 0, episodes=50)] == [50, 50]


def test_unknown_names():
    with pytest.raises(KeyError):
        run_suite("nope", 0)
    with pytest.raises(KeyError):
        run_suite([{"experiment": "nope"}], 0)


@pytest.mark.parametrize("env", [(0.5,), (0.9, 0.9), (0.3, 0.8, 0.2)])
def test_pathwise_small(env):
    rep = verify_pathwise_UV(env, 2000, 2000, seed=5)
    assert rep.passed, rep.to_dict()
    assert rep.claim("U_eq_V_on_return").details["returned"] > 0


def test_coupled_domination_small():
    rep = verify_coupled_domination((0.7, 0.9, 0.9), (0.9, 0.7, 0.9), 2000, 200, seed=1)
    assert rep.passed, rep.to_dict()
    eq = verify_coupled_domination((0.6, 0.7), (0.6, 0.7), 200, 50, seed=1)
    assert eq.claim("identical_when_equal").passed


def test_coupled_domination_rejects_unordered():
    with pytest.raises(ValueError):
        verify_coupled_domination((0.9, 0.5), (0.5, 0.9), 10)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_strict_failure_gap_against_sampling(k):
    p, q = (0.5, 0.9), (0.9, 0.5)
    table = build_coupling_table(p, q)
    exact = strict_failure_gap(table, k)
    cf = CoupledTrialField(p, q, seed=k, table=table)
    n = 20_000
    hits = sum(failures_before_kth_success(cf.first, s, k) > failures_before_kth_success(cf.second, s, k)
               for s in range(n))
    assert abs(hits / n - exact) <= 4 * np.sqrt(exact * (1 - exact) / n) + 1e-12


def test_strict_failure_gap_positive_for_both_tables():
    assert strict_failure_gap(swap_example_table(0.5, 0.9), 1) > 0
    assert strict_failure_gap(build_coupling_table((0.5, 0.9), (0.9, 0.5)), 1) > 0


def test_speed_gap_zero_branch():
    rep = speed_gap((0.9, 0.9), (0.95, 0.9))
    d = rep.claim("dichotomy")
    assert d.passed and d.details["branch"] == "both_zero"
    assert rep.passed
    with pytest.raises(KeyError):
        rep.claim("strict_gap")


def test_speed_gap_positive_branch_short_run():
    rep = speed_gap((0.8, 0.95, 0.95), (0.95, 0.8, 0.95), seed=3, burn_in=1000, generations=50_000, batches=50)
    assert rep.passed, rep.to_dict()
    assert rep.claim("witness_bound").details["k"] == 1


def test_escape_gap_small():
    rep = escape_probability_gap((0.9, 0.8), (0.95, 0.8), 2000, seed=1, threshold=1000, horizon=5000, early=500)
    assert rep.claim("coupled_event_positive").details["order_violations"] == 0
    assert rep.claim("branching_gap_exact").passed
    assert isinstance(rep, ExperimentReport)


def test_escape_gap_needs_transience():
    with pytest.raises(ValueError):
        escape_probability_gap((0.5,), (0.6,), 10)
