"""Forward branching process: ``V_0 = 1`` and ``V_{i+1}`` is the number of
successes at site ``i + 1`` before the ``V_i``-th failure.

Right excursions of the walk from the origin are encoded by this chain, so its
total progeny and its survival give the return-time law and the escape
probability of the walk.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.stats import beta as beta_dist

from ._laws import stopping_law, transition_matrix
from ._rng import count_before
from .env import as_env, exact_drift


class NonConvergenceError(RuntimeError):
    """A numerical scheme stopped at its cap; ``bracket`` holds the last estimate."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


def successes_before_kth_failure(field, site: int, k: int) -> int:
    if k < 0:
        raise ValueError("k must be nonnegative")
    return int(count_before(*field.spec, int(site), int(k), 0))


@njit(cache=True)
def forward_path(seed, kind, probs, cum, ym, zm, max_generations, start):
    out = np.zeros(max_generations + 1, dtype=np.int64)
    out[0] = start
    v = start
    for i in range(1, max_generations + 1):
        v = count_before(seed, kind, probs, cum, ym, zm, i, v, 0)
        out[i] = v
        if v == 0:
            return out[: i + 1]
    return out


@njit(cache=True)
def forward_fate(seed, kind, probs, cum, ym, zm, threshold, max_generations):
    """0 = died, 1 = reached ``threshold``, 2 = neither within the cap."""
    v = 1
    for i in range(1, max_generations + 1):
        v = count_before(seed, kind, probs, cum, ym, zm, i, v, 0)
        if v == 0:
            return 0, i
        if v >= threshold:
            return 1, i
    return 2, max_generations


@dataclass
class ForwardTrajectory:
    values: list[int]
    lifetime: int | None  # first i >= 1 with V_i = 0, None when censored

    @property
    def total_progeny(self) -> int:
        return sum(self.values)


def run_forward(field, max_generations: int) -> ForwardTrajectory:
    if max_generations < 1:
        raise ValueError("max_generations must be at least 1")
    path = forward_path(*field.spec, int(max_generations), 1).tolist()
    life = len(path) - 1 if path[-1] == 0 else None
    return ForwardTrajectory(path, life)


@dataclass
class StepLaw:
    """``P(S_k = m)`` for ``m = 0..m_max`` and the mass beyond."""

    k: int
    masses: np.ndarray
    tail: float

    @property
    def total(self) -> float:
        return float(self.masses.sum() + self.tail)


def exact_step_distribution(env, k: int, m_max: int) -> StepLaw:
    """Exact law of the successes before the ``k``-th failure."""
    env = as_env(env)
    if k < 1:
        raise ValueError("k must be at least 1")
    if m_max < 0:
        raise ValueError("m_max must be nonnegative")
    masses, tail = stopping_law(1.0 - env.probs, k, m_max)
    return StepLaw(k, masses, tail)


@dataclass
class SurvivalEstimate:
    value: float
    lower: float
    upper: float
    method: str
    details: dict = field(default_factory=dict)

    @property
    def radius(self) -> float:
        return max(self.value - self.lower, self.upper - self.value)

    def to_dict(self) -> dict:
        return {"value": self.value, "lower": self.lower, "upper": self.upper,
                "method": self.method, **self.details}


def extinction_lower_bounds(env, N: int) -> np.ndarray:
    """``P_m(V hits 0 before exceeding N)`` for ``m = 0..N``: a lower bound on extinction."""
    env = as_env(env)
    P, _ = transition_matrix(1.0 - env.probs, 0, N, renormalize=False)
    Q = P[1:, 1:]
    r = P[1:, 0]
    e = np.linalg.solve(np.eye(N) - Q, r)
    return np.concatenate([[1.0], e])


def _survival_truncated(env, tol, n_start, n_cap):
    d = float(exact_drift(env))
    expo = abs(d - 1.0)
    upper_seq, ext_seq, levels = [], [], []
    N = n_start
    while True:
        e = extinction_lower_bounds(env, N)
        upper_seq.append(1.0 - e[1])
        levels.append(N)
        if len(upper_seq) >= 2 and expo > 0:
            ratio = 2.0 ** (-expo)
            ext_seq.append((upper_seq[-1] - ratio * upper_seq[-2]) / (1.0 - ratio))
        if len(ext_seq) >= 2:
            est = min(max(ext_seq[-1], 0.0), upper_seq[-1])
            err = abs(ext_seq[-1] - ext_seq[-2])
            lower, upper = max(0.0, est - err), min(upper_seq[-1], est + err)
            if upper - lower < tol:
                return SurvivalEstimate(est, lower, upper, "truncated_solve",
                                        {"N": N, "rigorous_upper": upper_seq[-1]})
        if 2 * N > n_cap:
            if ext_seq:
                est = min(max(ext_seq[-1], 0.0), upper_seq[-1])
                err = abs(ext_seq[-1] - ext_seq[-2]) if len(ext_seq) >= 2 else upper_seq[-1]
            else:
                est, err = upper_seq[-1], upper_seq[-1]
            bracket = (max(0.0, est - err), min(upper_seq[-1], est + err))
            raise NonConvergenceError(
                f"survival bracket {bracket} wider than {tol} at truncation level {N}", bracket)
        N *= 2


def clopper_pearson(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if successes == 0 else float(beta_dist.ppf(a / 2, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(beta_dist.ppf(1 - a / 2, successes + 1, n - successes))
    return lo, hi


def _survival_mc(env, seed, episodes, threshold, max_generations):
    from .fields import TrialField, episode_seed

    fates = np.zeros(3, dtype=np.int64)
    for ep in range(episodes):
        f = TrialField(env, seed=episode_seed(seed, ep))
        fate, _ = forward_fate(*f.spec, threshold, max_generations)
        fates[fate] += 1
    n = episodes
    p_hat = fates[1] / n
    se = math.sqrt(max(p_hat * (1 - p_hat), 1.0 / n) / n)
    return SurvivalEstimate(float(p_hat), max(0.0, p_hat - 3 * se), min(1.0, p_hat + 3 * se), "monte_carlo",
                            {"episodes": n, "died": int(fates[0]), "reached_threshold": int(fates[1]),
                             "censored": int(fates[2]), "threshold": threshold, "se": se})


def survival_probability(env, method: str = "truncated_solve", *, tol: float = 1e-4, n_start: int = 64,
                         n_cap: int = 4096, seed: int = 0, episodes: int = 10_000, threshold: int = 10_000,
                         max_generations: int = 1_000_000) -> SurvivalEstimate:
    """``P(sigma_V = infinity)`` for the forward chain started at one individual.

    ``truncated_solve`` solves for the chance of dying before exceeding ``N``
    (a rigorous upper bound on survival), doubles ``N`` and extrapolates in
    ``N^-|delta - 1|``.  ``monte_carlo`` counts runs reaching ``threshold``
    before dying; runs still undecided after ``max_generations`` count as not
    surviving and are reported as ``censored``.
    """
    env = as_env(env)
    if method == "truncated_solve":
        if exact_drift(env) <= 1:
            # the chain dies almost surely unless the walk is transient to the right
            return SurvivalEstimate(0.0, 0.0, 0.0, "drift_threshold", {"delta": float(exact_drift(env))})
        return _survival_truncated(env, tol, n_start, n_cap)
    if method == "monte_carlo":
        return _survival_mc(env, seed, episodes, threshold, max_generations)
    raise ValueError(f"unknown method {method!r}")


def escape_probability(env, **kwargs) -> SurvivalEstimate:
    """``P(X_n > 0 for all n > 0) = p_1 * P(sigma_V = infinity)``."""
    env = as_env(env)
    s = survival_probability(env, **kwargs)
    p1 = float(env.probs[0]) if env.M else 0.5
    return SurvivalEstimate(p1 * s.value, p1 * s.lower, p1 * s.upper, s.method + "+first_cookie", s.details)


def _excursion_paths(k: int):
    """All paths of length ``2k`` starting 0 -> 1 that return to 0 only at the end."""
    def extend(path):
        if len(path) == 2 * k + 1:
            if path[-1] == 0:
                yield path
            return
        x = path[-1]
        remaining = 2 * k + 1 - len(path)
        for nx_ in (x + 1, x - 1):
            if nx_ >= 1 or (nx_ == 0 and remaining == 1):
                if nx_ - 1 <= remaining - 1:
                    yield from extend(path + [nx_])
    yield from extend([0, 1])


def path_probability(env, path) -> float:
    env = as_env(env)
    visits: dict[int, int] = {}
    prob = 1.0
    for a, b in zip(path[:-1], path[1:]):
        visits[a] = visits.get(a, 0) + 1
        j = visits[a]
        p = float(env.probs[j - 1]) if j <= env.M else 0.5
        prob *= p if b == a + 1 else 1.0 - p
    return prob


def total_progeny_probability(env, k: int) -> float:
    """``P(V_0 + V_1 + ... = k)`` summed over all dying trajectories."""
    env = as_env(env)
    cache: dict[tuple[int, int], np.ndarray] = {}

    def law(v, r):
        if (v, r) not in cache:
            cache[(v, r)] = exact_step_distribution(env, v, r).masses
        return cache[(v, r)]

    def rec(v, remaining):
        # v individuals alive, ``remaining`` more may still be born
        masses = law(v, remaining)
        acc = float(masses[0]) if remaining == 0 else 0.0
        for nxt in range(1, remaining + 1):
            if masses[nxt] > 0:
                acc += float(masses[nxt]) * rec(nxt, remaining - nxt)
        return acc

    return rec(1, k - 1)


@dataclass
class IdentityCheck:
    k: int
    lhs: float
    rhs: float

    @property
    def abs_diff(self) -> float:
        return float(abs(self.lhs - self.rhs))

    def to_dict(self) -> dict:
        return {"k": self.k, "lhs": self.lhs, "rhs": self.rhs, "abs_diff": self.abs_diff}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


EXCURSION_BUDGET = 6


def excursion_identity_oracle(env, k: int) -> IdentityCheck:
    """Return-time law from walk paths vs. ``p_1`` times the total progeny law."""
    env = as_env(env)
    if not 1 <= k <= EXCURSION_BUDGET:
        raise ValueError(f"k must be in 1..{EXCURSION_BUDGET} for exhaustive enumeration")
    lhs = sum(path_probability(env, p) for p in _excursion_paths(k))
    p1 = float(env.probs[0]) if env.M else 0.5
    rhs = p1 * total_progeny_probability(env, k)
    return IdentityCheck(k, float(lhs), float(rhs))
