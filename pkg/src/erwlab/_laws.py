"""Exact laws of stopping counts in a cookie trial sequence.

A count of "other" outcomes before the ``k``-th "stop" outcome is computed by
a dynamic programme over the cookie trials followed by a negative binomial
completion over the fair trials: ``r`` stops still needed give
``C(g + r - 1, g) 2^-(g + r)`` for ``g`` further others.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import nbinom


def head_split(stop_probs, k: int):
    """Run the cookie trials for a target of ``k`` stops.

    Returns ``absorbed`` (dict others -> mass, stopped inside the cookies) and
    ``open`` (dict (stops, others) -> mass after all cookies, stops < k).
    ``stop_probs[j]`` is the chance that cookie ``j`` is a stop.
    """
    state = {(0, 0): 1.0}
    absorbed: dict[int, float] = {}
    for q in stop_probs:
        nxt: dict[tuple[int, int], float] = {}
        for (a, b), w in state.items():
            if a + 1 == k:
                absorbed[b] = absorbed.get(b, 0.0) + w * q
            else:
                nxt[(a + 1, b)] = nxt.get((a + 1, b), 0.0) + w * q
            nxt[(a, b + 1)] = nxt.get((a, b + 1), 0.0) + w * (1.0 - q)
        state = nxt
    return absorbed, state


def stopping_law(stop_probs, k: int, m_max: int) -> tuple[np.ndarray, float]:
    """``P(count = m)`` for ``m = 0..m_max`` and ``P(count > m_max)``."""
    masses = np.zeros(m_max + 1)
    if k <= 0:
        masses[0] = 1.0
        return masses, 0.0
    absorbed, opened = head_split(stop_probs, k)
    tail = 0.0
    for b, w in absorbed.items():
        if b <= m_max:
            masses[b] += w
        else:
            tail += w
    g = np.arange(m_max + 1)
    for (a, b), w in opened.items():
        r = k - a
        if b <= m_max:
            masses[b:] += w * nbinom.pmf(g[: m_max + 1 - b], r, 0.5)
            tail += w * float(nbinom.sf(m_max - b, r, 0.5))
        else:
            tail += w
    return masses, tail


def stopping_mean(stop_probs, k: int) -> float:
    """Mean of the count; each fair stop still needed adds one expected other."""
    if k <= 0:
        return 0.0
    absorbed, opened = head_split(stop_probs, k)
    return sum(b * w for b, w in absorbed.items()) + sum(w * (b + (k - a)) for (a, b), w in opened.items())


def transition_matrix(stop_probs, shift: int, N: int, renormalize: bool) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``k = 0..N`` of the law of the count before the ``(k + shift)``-th stop,
    restricted to ``0..N``; returns the matrix and the mass cut off per row."""
    stop_probs = np.asarray(stop_probs, dtype=float)
    M = stop_probs.shape[0]
    P = np.zeros((N + 1, N + 1))
    cut = np.empty(N + 1)
    # rows with target above M never stop inside the cookies
    first = min(max(M + 1 - shift, 0), N + 1)
    for k in range(first):
        P[k], cut[k] = stopping_law(stop_probs, k + shift, N)
    if first <= N:
        _, opened = head_split(stop_probs, M + 1)
        g = np.arange(N + 1)
        r_lo = first + shift - max(a for a, _ in opened)
        r_hi = N + shift
        table = nbinom.pmf(g[None, :], np.arange(max(r_lo, 1), r_hi + 1)[:, None], 0.5)
        base = max(r_lo, 1)
        for (a, b), w in opened.items():
            if b > N:
                continue
            rows = np.arange(first, N + 1) + shift - a - base
            P[first:, b:] += w * table[rows, : N + 1 - b]
        cut[first:] = np.clip(1.0 - P[first:].sum(axis=1), 0.0, None)
    if renormalize:
        P /= P.sum(axis=1, keepdims=True)
    return P, cut
