import math

import numpy as np
import pytest

from erwlab.env import CookieEnvironment
from erwlab.fields import TrialField
from erwlab.forward import (NonConvergenceError, clopper_pearson, escape_probability, exact_step_distribution,
                            excursion_identity_oracle, extinction_lower_bounds, run_forward,
                            successes_before_kth_failure, survival_probability, total_progeny_probability)
from oracles import excursion_probability, literal_law, stop_count_law

ENVS = [(0.5,), (0.9, 0.8), (0.7, 0.8, 0.9), (0.2, 0.95)]


@pytest.mark.parametrize("env", ENVS)
def test_step_law_matches_enumeration(env):
    e = CookieEnvironment(env)
    for k in (1, 2, 3, 7):
        law = exact_step_distribution(e, k, 30 - k)
        ref = stop_count_law(e, k, 0, 30)
        for m, w in ref.items():
            assert law.masses[m] == pytest.approx(float(w), abs=1e-13)
        assert law.total == pytest.approx(1.0, abs=1e-12)


def test_grouped_oracle_matches_literal_strings():
    e = CookieEnvironment((0.7, 0.8, 0.9))
    for k in (1, 2, 4):
        assert stop_count_law(e, k, 0, 12) == literal_law(e, k, 0, 12)
        assert stop_count_law(e, k, 1, 12) == literal_law(e, k, 1, 12)


def test_step_law_examples():
    law = exact_step_distribution((0.5,), 1, 5)
    assert law.masses.tolist() == pytest.approx([0.5 ** (m + 1) for m in range(6)], abs=1e-15)
    law = exact_step_distribution((0.9, 0.8), 1, 2)
    # S = 0 iff first trial fails
    assert law.masses[0] == pytest.approx(0.1, abs=1e-15)
    assert law.masses[1] == pytest.approx(0.9 * 0.2, abs=1e-15)


def test_step_law_rejects_bad_arguments():
    with pytest.raises(ValueError):
        exact_step_distribution((0.5,), 0, 5)
    with pytest.raises(ValueError):
        exact_step_distribution((0.5,), 1, -1)


def test_successes_before_kth_failure_reads_trials():
    f = TrialField((0.7, 0.3, 0.6), 5)
    for site in range(20):
        for k in range(0, 6):
            fails, s, j = 0, 0, 1
            while fails < k:
                if f.trial(site, j):
                    s += 1
                else:
                    fails += 1
                j += 1
            assert successes_before_kth_failure(f, site, k) == s


def test_forward_chain_definition():
    f = TrialField((0.9, 0.8), 3)
    tr = run_forward(f, 50)
    assert tr.values[0] == 1
    for i in range(1, len(tr.values)):
        assert tr.values[i] == successes_before_kth_failure(f, i, tr.values[i - 1])
    if tr.lifetime is not None:
        assert tr.values[-1] == 0 and all(v > 0 for v in tr.values[:-1])


def test_fair_chain_dies():
    died = sum(run_forward(TrialField((0.5,), s), 10_000).lifetime is not None for s in range(500))
    assert died > 450


@pytest.mark.parametrize("env, k", [((0.7, 0.6), 1), ((0.7, 0.6), 2), ((0.7, 0.6), 3), ((0.5,), 4),
                                    ((0.9, 0.2, 0.6), 3)])
def test_excursion_identity(env, k):
    chk = excursion_identity_oracle(env, k)
    assert chk.abs_diff <= 1e-12
    assert chk.lhs == pytest.approx(float(excursion_probability(CookieEnvironment(env), k)), abs=1e-14)


def test_excursion_identity_fair_catalan():
    # a fair first excursion of length 2k has probability C_{k-1} / 2^(2k)
    for k in range(1, 6):
        cat = math.comb(2 * (k - 1), k - 1) // k
        assert excursion_identity_oracle((0.5,), k).lhs == pytest.approx(cat / 4 ** k, abs=1e-15)


def test_excursion_oracle_budget():
    with pytest.raises(ValueError):
        excursion_identity_oracle((0.5,), 0)
    with pytest.raises(ValueError):
        excursion_identity_oracle((0.5,), 7)


def test_total_progeny_small():
    # the chain dies at generation 1 iff site 1 starts with a failure
    assert total_progeny_probability((0.9, 0.8), 1) == pytest.approx(0.1, abs=1e-15)


@pytest.mark.parametrize("env", [(0.5,), (0.6, 0.6), (0.3,)])
def test_survival_zero_when_recurrent(env):
    est = survival_probability(env)
    assert est.value == 0.0 and est.upper == 0.0


def test_survival_bracket_and_monte_carlo_agree():
    est = survival_probability((0.9, 0.8))
    assert est.lower <= est.value <= est.upper
    assert est.radius <= 1e-4
    assert est.value == pytest.approx(0.74075, abs=2e-4)
    mc = survival_probability((0.9, 0.8), "monte_carlo", episodes=4000, seed=1)
    assert abs(mc.value - est.value) <= 3 * mc.details["se"] + est.radius


def test_extinction_bounds_monotone_in_truncation():
    a, b = extinction_lower_bounds((0.9, 0.8), 64), extinction_lower_bounds((0.9, 0.8), 128)
    assert a[0] == 1.0 and np.all(a[1:] <= b[1:65] + 1e-12)


def test_escape_probability_carries_first_cookie():
    s, e = survival_probability((0.9, 0.8)), escape_probability((0.9, 0.8))
    assert e.value == pytest.approx(0.9 * s.value)


def test_survival_nonconvergence_raises():
    with pytest.raises(NonConvergenceError) as info:
        survival_probability((0.9, 0.8), tol=1e-12, n_cap=128)
    assert info.value.bracket is not None


def test_unknown_method():
    with pytest.raises(ValueError):
        survival_probability((0.9,), "magic")


def test_clopper_pearson():
    lo, hi = clopper_pearson(0, 100)
    assert lo == 0.0 and hi == pytest.approx(0.0362, abs=1e-4)
    lo, hi = clopper_pearson(50, 100)
    assert lo < 0.5 < hi
