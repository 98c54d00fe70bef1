"""Excited random walk driven by a trial field, and the path statistics
(first return, right crossings before return, left crossings before a
hitting time) that link it to the branching processes."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rng import U64, derive_seed, head_mask, tail_word


# The step rule below is written out in every kernel on purpose: calling a
# jitted helper with array arguments once per step costs more than the step.


@njit(cache=True)
def walk_path(seed, kind, probs, cum, ym, zm, horizon):
    pos = np.empty(horizon + 1, dtype=np.int64)
    pos[0] = 0
    visits = np.zeros(2 * horizon + 1, dtype=np.int64)
    heads = np.zeros(2 * horizon + 1, dtype=np.uint64)
    M = probs.shape[0]
    x = 0
    for n in range(horizon):
        idx = x + horizon
        visits[idx] += 1
        j = visits[idx]
        if j <= M:
            if j == 1:
                heads[idx] = head_mask(seed, kind, probs, cum, ym, zm, x)
            b = np.int64((heads[idx] >> U64(j - 1)) & U64(1))
        else:
            t = j - M - 1
            b = np.int64((tail_word(seed, x, t >> 6) >> U64(t & 63)) & U64(1))
        x += 2 * b - 1
        pos[n + 1] = x
    return pos


@njit(cache=True)
def walk_endpoint(seed, kind, probs, cum, ym, zm, n_steps, visits, heads):
    """Position after ``n_steps`` steps; ``visits``/``heads`` are scratch arrays
    of length ``2 * n_steps + 1`` that are returned zeroed."""
    M = probs.shape[0]
    x = 0
    lo = 0
    hi = 0
    for n in range(n_steps):
        idx = x + n_steps
        visits[idx] += 1
        j = visits[idx]
        if j <= M:
            if j == 1:
                heads[idx] = head_mask(seed, kind, probs, cum, ym, zm, x)
            b = np.int64((heads[idx] >> U64(j - 1)) & U64(1))
        else:
            t = j - M - 1
            b = np.int64((tail_word(seed, x, t >> 6) >> U64(t & 63)) & U64(1))
        x += 2 * b - 1
        if x < lo:
            lo = x
        if x > hi:
            hi = x
    for s in range(lo, hi + 1):
        visits[s + n_steps] = 0
        heads[s + n_steps] = U64(0)
    return x


@njit(cache=True)
def endpoint_batch(seed, kind, probs, cum, ym, zm, n_steps, reps):
    visits = np.zeros(2 * n_steps + 1, dtype=np.int64)
    heads = np.zeros(2 * n_steps + 1, dtype=np.uint64)
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        out[r] = walk_endpoint(derive_seed(seed, r), kind, probs, cum, ym, zm, n_steps, visits, heads)
    return out


@njit(cache=True)
def walk_to_level(seed, kind, probs, cum, ym, zm, n, cap, d_out, span):
    """Run until the first visit to ``n`` (at most ``cap`` steps).

    ``d_out[x + span]`` receives the number of left steps from ``x`` for
    ``-span <= x <= n``.  Returns ``(T_n, T~_n)``, with ``T_n = -1`` if the
    level was not reached.
    """
    M = probs.shape[0]
    visits = np.zeros(span + n + 1, dtype=np.int64)
    heads = np.zeros(span + n + 1, dtype=np.uint64)
    x = 0
    nonneg = 0
    for k in range(cap):
        if x == n:
            return k, nonneg
        if x >= 0:
            nonneg += 1
        idx = x + span
        if idx < 0:
            return -1, nonneg
        visits[idx] += 1
        j = visits[idx]
        if j <= M:
            if j == 1:
                heads[idx] = head_mask(seed, kind, probs, cum, ym, zm, x)
            b = np.int64((heads[idx] >> U64(j - 1)) & U64(1))
        else:
            t = j - M - 1
            b = np.int64((tail_word(seed, x, t >> 6) >> U64(t & 63)) & U64(1))
        if b == 0:
            d_out[idx] += 1
        x += 2 * b - 1
    if x == n:
        return cap, nonneg
    return -1, nonneg


@dataclass
class WalkTrace:
    """Positions ``X_0..X_H`` of one walk."""

    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.positions.size == 0 or self.positions[0] != 0:
            raise ValueError("a trace starts at the origin")
        if np.any(np.abs(np.diff(self.positions)) != 1):
            raise ValueError("a trace moves by nearest-neighbour steps")

    @property
    def horizon(self) -> int:
        return self.positions.size - 1

    @property
    def visit_counts(self) -> dict[int, int]:
        sites, counts = np.unique(self.positions, return_counts=True)
        return dict(zip(sites.tolist(), counts.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,position\n")
        for k, x in enumerate(self.positions.tolist()):
            buf.write(f"{k},{x}\n")
        return buf.getvalue()


def run_walk(field, horizon: int) -> WalkTrace:
    """Walk ``horizon`` steps: on the j-th visit to ``i`` step right iff ``xi[i, j] = 1``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    return WalkTrace(walk_path(*field.spec, int(horizon)))


@dataclass
class ExcursionStats:
    """First return time ``T_0^+`` (``None`` if censored) and right crossings ``U``."""

    first_return: int | None
    U: dict[int, int]
    first_step: int
    horizon: int

    @property
    def total_up(self) -> int:
        return sum(self.U.values())

    def to_dict(self) -> dict:
        return {"first_return": self.first_return, "first_step": self.first_step,
                "U": {str(k): v for k, v in sorted(self.U.items())}, "horizon": self.horizon}


def excursion_stats(trace: WalkTrace) -> ExcursionStats:
    x = trace.positions
    if x.size < 2:
        raise ValueError("trace needs at least one step")
    zeros = np.flatnonzero(x[1:] == 0)
    T = int(zeros[0]) + 1 if zeros.size else None
    stop = T if T is not None else trace.horizon
    seg_from, seg_to = x[:stop], x[1 : stop + 1]
    up = (seg_to == seg_from + 1) & (seg_from >= 0)
    sites, counts = np.unique(seg_from[up], return_counts=True)
    U = dict(zip(sites.tolist(), counts.tolist()))
    stats = ExcursionStats(T, U, int(x[1]), trace.horizon)
    if T is not None and x[1] == 1 and 2 * stats.total_up != T:
        raise AssertionError("return time differs from twice the right crossings")
    if x[1] == -1 and stats.total_up != 0:
        raise AssertionError("left first step cannot cross right before returning")
    return stats


@dataclass
class HittingStats:
    """``T_n`` (``None`` if censored), ``T~_n`` and left crossings ``D[x]`` before ``T_n``."""

    n: int
    T: int | None
    T_tilde: int
    D: dict[int, int] = field(default_factory=dict)

    def D_vector(self) -> list[int]:
        """``(D_n, D_{n-1}, ..., D_0)``."""
        return [self.D.get(x, 0) for x in range(self.n, -1, -1)]

    def to_dict(self) -> dict:
        return {"n": self.n, "T": self.T, "T_tilde": self.T_tilde,
                "D": {str(k): v for k, v in sorted(self.D.items())}}


def hitting_stats(trace: WalkTrace, n: int) -> HittingStats:
    if n < 1:
        raise ValueError("level must be positive")
    x = trace.positions
    hits = np.flatnonzero(x == n)
    T = int(hits[0]) if hits.size else None
    stop = T if T is not None else trace.horizon
    seg_from, seg_to = x[:stop], x[1 : stop + 1]
    down = seg_to == seg_from - 1
    sites, counts = np.unique(seg_from[down], return_counts=True)
    D = dict(zip(sites.tolist(), counts.tolist()))
    T_tilde = int(np.count_nonzero(x[:stop] >= 0))
    out = HittingStats(n, T, T_tilde, D)
    if T is not None:
        if T != n + 2 * sum(D.values()):
            raise AssertionError("hitting time differs from n + 2 * left crossings")
        if T_tilde != n + 2 * sum(D.get(s, 0) for s in range(1, n + 1)) + D.get(0, 0):
            raise AssertionError("time at nonnegative sites disagrees with left crossings")
    return out


def stats_json(stats) -> str:
    return json.dumps(stats.to_dict())


@dataclass
class SpeedSample:
    """``X_n / n`` over independent walks: mean and standard error."""

    v: float
    se: float
    steps: int
    reps: int

    def to_dict(self) -> dict:
        return {"v": self.v, "se": self.se, "steps": self.steps, "reps": self.reps}


def speed_monte_carlo(env, steps: int, reps: int, seed: int = 0) -> SpeedSample:
    from .fields import TrialField

    if steps < 1 or reps < 2:
        raise ValueError("need steps >= 1 and reps >= 2")
    f = TrialField(env, seed)
    x = endpoint_batch(*f.spec, int(steps), int(reps)) / steps
    return SpeedSample(float(x.mean()), float(x.std(ddof=1) / np.sqrt(reps)), steps, reps)
