"""Brute-force references used by the tests. Deliberately slow and simple."""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb

HALF = Fraction(1, 2)


def _probs(env):
    return list(env.exact)


def stop_count_law(env, k: int, stop_bit: int, max_len: int) -> dict[int, Fraction]:
    """``P(#others before the k-th stop = m)`` for every ``m`` with ``m + k <= max_len``.

    The cookie prefix is enumerated string by string; after the cookies every
    string with the same counts has the same probability, so those are counted
    with a binomial coefficient (the last trial must be the k-th stop).
    """
    p = _probs(env)
    M = len(p)
    law: dict[int, Fraction] = {}
    for L in range(k, max_len + 1):
        m = L - k
        total = Fraction(0)
        h = min(M, L)
        for head in itertools.product((0, 1), repeat=h):
            w = Fraction(1)
            for j, b in enumerate(head):
                w *= p[j] if b == 1 else 1 - p[j]
            stops = sum(1 for b in head if b == stop_bit)
            if L <= M:
                if stops == k and head[-1] == stop_bit:
                    total += w
                continue
            if stops >= k:
                continue
            tail = L - M
            need_stops = k - stops
            need_other = m - (h - stops)
            if need_other < 0 or need_stops < 1:
                continue
            # last tail trial is the k-th stop
            total += w * comb(tail - 1, need_other) * HALF ** tail
        law[m] = total
    return law


def literal_law(env, k: int, stop_bit: int, length: int) -> dict[int, Fraction]:
    """Same law from all ``2^length`` strings (strings not reaching the k-th stop are dropped)."""
    p = _probs(env)
    law: dict[int, Fraction] = {}
    for s in itertools.product((0, 1), repeat=length):
        w = Fraction(1)
        for j, b in enumerate(s):
            q = p[j] if j < len(p) else HALF
            w *= q if b == 1 else 1 - q
        stops = other = 0
        for b in s:
            if b == stop_bit:
                stops += 1
                if stops == k:
                    break
            else:
                other += 1
        if stops == k:
            law[other] = law.get(other, Fraction(0)) + w
    # a string of full length determines every count with m + k <= length
    return {m: v for m, v in law.items() if m + k <= length}


def excursion_probability(env, k: int) -> Fraction:
    """``P(X_1 = 1, T_0^+ = 2k)`` by summing over all step sequences of length ``2k``."""
    p = _probs(env)
    total = Fraction(0)
    for steps in itertools.product((1, -1), repeat=2 * k):
        x = 0
        visits: dict[int, int] = {}
        w = Fraction(1)
        ok = steps[0] == 1
        for n, s in enumerate(steps):
            if not ok:
                break
            visits[x] = visits.get(x, 0) + 1
            j = visits[x]
            q = p[j - 1] if j <= len(p) else HALF
            w *= q if s == 1 else 1 - q
            x += s
            if x == 0 and n < 2 * k - 1:
                ok = False
            if x < 0:
                ok = False
        if ok and x == 0:
            total += w
    return total


def python_walk(field, steps: int) -> list[int]:
    x, visits, path = 0, {}, [0]
    for _ in range(steps):
        visits[x] = visits.get(x, 0) + 1
        x += 2 * field.trial(x, visits[x]) - 1
        path.append(x)
    return path


def upsets(M: int):
    """All up-sets of ``{0,1}^M`` under prefix-sum dominance."""
    from erwlab.coupling import dominated, outcomes

    vecs = outcomes(M)
    above = {v: [w for w in vecs if dominated(v, w)] for v in vecs}
    seen = set()
    # an up-set is the up-closure of an antichain; closures of all subsets
    # are enumerated through a queue of growing sets
    stack = [frozenset()]
    while stack:
        U = stack.pop()
        if U in seen:
            continue
        seen.add(U)
        for v in vecs:
            if v not in U:
                stack.append(U | frozenset(above[v]))
    return seen, vecs


def strassen_comparable(p, q) -> bool:
    """Dominating coupling exists iff every up-set is at least as likely under ``q``."""
    from erwlab.coupling import product_law
    from erwlab.env import pad_pair

    p, q = pad_pair(p, q)
    sets, vecs = upsets(p.M)
    lp = dict(zip(vecs, product_law(p.probs, vecs)))
    lq = dict(zip(vecs, product_law(q.probs, vecs)))
    return all(sum(lp[v] for v in U) <= sum(lq[v] for v in U) + 1e-10 for U in sets)
