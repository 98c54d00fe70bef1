import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erwlab.coupling import (CouplingTable, Order, build_coupling_table, decide_order, dominance_matrix, dominated,
                             minimal_strict_index, outcomes, product_law, strict_gap_value, swap_example_table)
from oracles import strassen_comparable

strength = st.integers(1, 19).map(lambda n: n / 20)


def test_outcomes_and_law():
    assert outcomes(2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    law = product_law((0.9, 0.2))
    assert law.sum() == pytest.approx(1.0)
    assert law[outcomes(2).index((1, 0))] == pytest.approx(0.9 * 0.8)


def test_dominance():
    assert dominated((0, 1), (1, 0))
    assert not dominated((1, 0), (0, 1))
    assert dominated((1, 0, 0), (1, 0, 0))
    D = dominance_matrix(3)
    assert D.diagonal().all()


def test_swap_pair_is_strict_with_witness_one():
    v = decide_order((0.5, 0.9), (0.9, 0.5))
    assert v.order is Order.STRICT and v.witness == 1
    v.table.validate((0.5, 0.9), (0.9, 0.5), tol=1e-10)
    assert decide_order((0.9, 0.5), (0.5, 0.9)).order is Order.INCOMPARABLE


def test_swap_example_table_validates():
    swap_example_table(0.5, 0.9).validate((0.5, 0.9), (0.9, 0.5), tol=1e-12)
    swap_example_table(0.3, 0.6).validate((0.3, 0.6), (0.6, 0.3), tol=1e-12)


def test_equal_and_weak():
    assert decide_order((0.6, 0.7), (0.6, 0.7)).order is Order.EQUAL
    assert decide_order((0.6,), (0.6, 0.5)).order is Order.EQUAL
    assert decide_order((0.6, 0.7), (0.6, 0.8)).order is Order.STRICT
    assert minimal_strict_index((0.6, 0.7), (0.6, 0.8)) == 2


def test_prefix_failure_reported():
    v = decide_order((0.9, 0.1), (0.5, 0.9))
    assert v.order is Order.INCOMPARABLE and v.failed_prefix == 1 and v.table is None


def test_flow_can_fail_with_prefix_sums_ordered():
    # prefix sums are ordered (0.5 <= 0.5, 1.0 <= 1.0) but the law of the
    # first two trials cannot be transported: P(y = (1,1)) > P(z = (1,1))
    # while both are the only way to reach two successes
    v = decide_order((0.5, 0.5), (0.9, 0.1))
    assert v.order is Order.INCOMPARABLE
    assert v.flow_deficit is not None and v.flow_deficit > 1e-10
    assert not strassen_comparable((0.5, 0.5), (0.9, 0.1))


def test_table_rejects_bad_rows():
    t = CouplingTable(1, [((1,), (0,), 0.5), ((0,), (1,), 0.5)])
    with pytest.raises(ValueError):
        t.validate((0.5,), (0.5,))
    with pytest.raises(ValueError):
        t.sampler_arrays()
    with pytest.raises(ValueError):
        CouplingTable(1, [((0,), (0,), 0.6)]).validate((0.5,), (0.5,))


def test_csv_round_trip():
    t = build_coupling_table((0.5, 0.9), (0.9, 0.5))
    back = CouplingTable.from_csv(t.to_csv())
    assert back.M == t.M
    assert back.rows == [(y, z, pytest.approx(w, abs=0)) for y, z, w in t.rows]


def test_sampling_marginals():
    t = build_coupling_table((0.3, 0.6), (0.6, 0.3))
    ys, zs = t.sample(100_000, np.random.default_rng(0))
    assert abs(ys[:, 0].mean() - 0.3) < 0.01 and abs(zs[:, 0].mean() - 0.6) < 0.01
    assert np.all(np.cumsum(ys, axis=1) <= np.cumsum(zs, axis=1))


def test_strict_gap_value():
    assert strict_gap_value((0.5, 0.9), (0.9, 0.5), 1) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        strict_gap_value((0.5, 0.9), (0.9, 0.5), 3)


def test_too_many_cookies():
    with pytest.raises(ValueError):
        decide_order([0.5] * 13, [0.6] * 13)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda M: st.tuples(st.lists(strength, min_size=M, max_size=M),
                                                      st.lists(strength, min_size=M, max_size=M))))
def test_max_flow_agrees_with_upset_criterion(pq):
    p, q = pq
    v = decide_order(p, q)
    assert v.comparable == strassen_comparable(p, q)
    if v.table is not None:
        v.table.validate(v.p, v.q, tol=1e-9)


@pytest.mark.slow
@settings(max_examples=15, deadline=None)
@given(st.tuples(st.lists(strength, min_size=4, max_size=4), st.lists(strength, min_size=4, max_size=4)))
def test_max_flow_agrees_with_upset_criterion_four_cookies(pq):
    p, q = pq
    assert decide_order(p, q).comparable == strassen_comparable(p, q)
