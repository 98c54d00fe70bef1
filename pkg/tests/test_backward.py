import numpy as np
import pytest

from erwlab._laws import stopping_law, transition_matrix
from erwlab.backward import (NonConvergenceError, StationaryDistribution, boundary_mean, dz_distribution_check,
                             exact_kernel_row, failures_before_kth_success, run_backward, speed, speed_report,
                             stationary_distribution, stationary_tv_check, truncated_stationary)
from erwlab.env import CookieEnvironment, mirror
from erwlab.fields import TrialField
from erwlab.walk import speed_monte_carlo
from oracles import stop_count_law

ENVS = [(0.5,), (0.9, 0.8), (0.7, 0.8, 0.9), (0.2, 0.95)]


@pytest.mark.parametrize("env", ENVS)
def test_kernel_rows_match_enumeration(env):
    e = CookieEnvironment(env)
    for k in (0, 1, 4):
        row = exact_kernel_row(e, k, 30)
        ref = stop_count_law(e, k + 1, 1, 31)
        for m, w in ref.items():
            assert row.masses[m] == pytest.approx(float(w), abs=1e-13)
        assert row.total == pytest.approx(1.0, abs=1e-12)


def test_fair_kernel_is_negative_binomial():
    from scipy.stats import nbinom

    row = exact_kernel_row((0.5,), 3, 20)
    assert np.allclose(row.masses, nbinom.pmf(np.arange(21), 4, 0.5), atol=1e-15)


def test_transition_matrix_rows_match_laws():
    for env in ENVS:
        probs = np.array(env)
        P, cut = transition_matrix(probs, 1, 40, renormalize=False)
        for k in (0, 3, 17, 40):
            m, _ = stopping_law(probs, k + 1, 40)
            assert np.allclose(P[k], m, atol=1e-14)
        R, _ = transition_matrix(probs, 1, 40, renormalize=True)
        assert np.allclose(R.sum(axis=1), 1.0, atol=1e-12)


def test_failures_before_kth_success_reads_trials():
    f = TrialField((0.7, 0.3, 0.6), 8)
    for site in range(20):
        for k in range(1, 6):
            fails, succ, j = 0, 0, 1
            while succ < k:
                if f.trial(site, j):
                    succ += 1
                else:
                    fails += 1
                j += 1
            assert failures_before_kth_success(f, site, k) == fails


def test_backward_chain_definition():
    f = TrialField((0.9, 0.8), 2)
    tr = run_backward(f, 30)
    z = tr.values.tolist()
    assert z[0] == 0 and tr.generations == 30
    for i in range(30):
        assert z[i + 1] == failures_before_kth_success(f, i + 1, z[i] + 1)


@pytest.mark.parametrize("env, v, tol", [((0.9, 0.9, 0.9), 0.7286988080, 1e-9), ((0.8, 0.95, 0.95), 0.63517, 1e-5),
                                         ((0.95, 0.8, 0.95), 0.81909, 1e-5)])
def test_speed_values(env, v, tol):
    rep = speed_report(env)
    assert rep.v == pytest.approx(v, abs=tol)
    assert rep.method == "boundary_orbit"
    assert rep.error_estimate < 1e-8


@pytest.mark.parametrize("env", [(0.5,), (0.9, 0.9), (0.7, 0.9, 0.9), (0.1, 0.1), (0.3, 0.1, 0.1)])
def test_speed_zero_in_middle_band(env):
    rep = speed_report(env)
    assert rep.v == 0.0 and rep.method == "zero_speed_drift"


def test_speed_mirror_symmetry():
    assert speed(mirror((0.9, 0.9, 0.9))) == -speed((0.9, 0.9, 0.9))


def test_speed_against_monte_carlo_at_high_drift():
    # at drift 4.5 the finite-n bias decays like n^-1.25
    env = (0.95, 0.95, 0.95, 0.95, 0.95)
    rep = speed_report(env, rel_tol=1e-4)
    mc = speed_monte_carlo(env, 100_000, 100, seed=0)
    assert abs(rep.v - mc.v) <= 3 * mc.se + 2 * rep.error_estimate + 2e-3


def test_boundary_mean_raises_when_tolerance_unreachable():
    with pytest.raises(NonConvergenceError):
        boundary_mean((0.9, 0.9, 0.9), rel_tol=1e-16)


def test_truncated_stationary_is_invariant():
    pi, resid = truncated_stationary((0.9, 0.8), 128)
    assert pi.sum() == pytest.approx(1.0) and resid < 1e-12 and np.all(pi >= 0)


def test_stationary_distribution_above_two():
    dist = stationary_distribution((0.95, 0.8, 0.95), n_cap=1024, mass_tol=1e-4)
    assert isinstance(dist, StationaryDistribution)
    assert dist.mass_gap < 1e-4
    assert dist.masses.sum() == pytest.approx(1.0)
    assert dist.to_csv().startswith("state,mass\n0,")
    assert speed((0.95, 0.8, 0.95)) == pytest.approx(1 / (1 + 2 * dist.mean), rel=1e-12)


def test_stationary_distribution_between_one_and_two():
    dist = stationary_distribution((0.9, 0.8), n_cap=1024, mass_tol=1e-3)
    assert dist.mean == float("inf") and dist.mass_gap is None


def test_stationary_requires_transience():
    with pytest.raises(ValueError):
        stationary_distribution((0.5,))


def test_backward_chain_converges_to_stationary_law():
    dist = stationary_distribution((0.95, 0.8, 0.95), n_cap=1024, mass_tol=1e-4)
    tv, ends = stationary_tv_check((0.95, 0.8, 0.95), 500, 4000, seed=1, dist=dist)
    # TV of an empirical law from n draws is of order sqrt(support / n)
    assert tv < 0.05
    assert ends.shape == (4000,)


def test_dz_check_small():
    rep = dz_distribution_check((0.9, 0.8), 2, 20_000, seed=3)
    assert rep.passed, rep.to_dict()


def test_dz_check_rejects_left_transient():
    with pytest.raises(ValueError):
        dz_distribution_check((0.1, 0.1), 2, 100)
