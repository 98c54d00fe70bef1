"""Backward branching process with one immigrant per generation:
``Z_0 = 0`` and ``Z_{i+1}`` is the number of failures at site ``i + 1`` before
the ``(Z_i + 1)``-th success.

Its invariant law gives the speed of a right-transient walk through
``v = 1 / (1 + 2 E[Z_0])`` and, read backwards, it has the law of the left
crossings of the walk before it first reaches a level.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.stats import chi2_contingency

from ._boundary import solve_boundary
from ._laws import stopping_law, transition_matrix
from ._rng import U64, count_before, derive_seed, head_mask, tail_word
from .env import Transience, as_env, classify, exact_drift, mirror
from .fields import TrialField, episode_seed
from .forward import NonConvergenceError


def failures_before_kth_success(field, site: int, k: int) -> int:
    if k < 0:
        raise ValueError("k must be nonnegative")
    return int(count_before(*field.spec, int(site), int(k), 1))


@njit(cache=True)
def backward_path(seed, kind, probs, cum, ym, zm, generations, first_site):
    out = np.zeros(generations + 1, dtype=np.int64)
    z = 0
    for i in range(1, generations + 1):
        z = count_before(seed, kind, probs, cum, ym, zm, first_site + i - 1, z + 1, 1)
        out[i] = z
    return out


@njit(cache=True)
def backward_endpoints(seed, kind, probs, cum, ym, zm, generations, runs):
    """``Z_generations`` of ``runs`` chains; run ``r`` uses ``derive_seed(seed, r)``."""
    out = np.empty(runs, dtype=np.int64)
    for r in range(runs):
        s = derive_seed(seed, r)
        z = 0
        for i in range(1, generations + 1):
            z = count_before(s, kind, probs, cum, ym, zm, i, z + 1, 1)
        out[r] = z
    return out


@njit(cache=True)
def backward_paths(seed, kind, probs, cum, ym, zm, generations, runs):
    out = np.zeros((runs, generations + 1), dtype=np.int64)
    for r in range(runs):
        out[r] = backward_path(derive_seed(seed, r), kind, probs, cum, ym, zm, generations, 1)
    return out


@dataclass
class BackwardTrajectory:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.size == 0 or self.values[0] != 0:
            raise ValueError("the backward chain starts at 0")
        if np.any(self.values < 0):
            raise ValueError("generation sizes are nonnegative")

    @property
    def generations(self) -> int:
        return self.values.size - 1


def run_backward(field, generations: int) -> BackwardTrajectory:
    """``Z_0..Z_generations``; generation ``i`` reads the trials at site ``i``."""
    if generations < 1:
        raise ValueError("generations must be at least 1")
    return BackwardTrajectory(backward_path(*field.spec, int(generations), 1))


@dataclass
class KernelRow:
    """``P(Z' = m | Z = k)`` for ``m = 0..m_max`` and the mass beyond ``m_max``."""

    from_state: int
    masses: np.ndarray
    tail: float

    @property
    def total(self) -> float:
        return float(self.masses.sum() + self.tail)


def exact_kernel_row(env, k: int, m_max: int) -> KernelRow:
    env = as_env(env)
    if k < 0 or m_max < 0:
        raise ValueError("k and m_max must be nonnegative")
    masses, tail = stopping_law(env.probs, k + 1, m_max)
    return KernelRow(k, masses, tail)


@dataclass
class StationaryDistribution:
    """Invariant law of the backward chain.

    ``masses`` solve ``pi K = pi`` for the kernel restricted to ``0..N`` with
    rows renormalised; ``tail_mass`` estimates the mass beyond ``N`` from the
    polynomial decay ``pi(m) ~ m^-delta``.  The mean (finite only for drift
    above 2) comes from the boundary solve, which also gives the first masses
    free of truncation; ``mass_gap`` is the largest disagreement between the
    two on those states.
    """

    N: int
    masses: np.ndarray
    tail_mass: float
    mean: float
    mean_error: float
    residual: float
    delta: float
    mass_gap: float | None = None
    details: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("state,mass\n")
        for k, w in enumerate(self.masses.tolist()):
            buf.write(f"{k},{w!r}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"N": self.N, "tail_mass": self.tail_mass, "mean": self.mean, "mean_error": self.mean_error,
                "residual": self.residual, "delta": self.delta, "mass_gap": self.mass_gap, **self.details}


def truncated_stationary(env, N: int) -> tuple[np.ndarray, float]:
    """Direct solve of ``pi K_N = pi``; returns ``pi`` and ``max |pi K_N - pi|``."""
    env = as_env(env)
    P, _ = transition_matrix(env.probs, 1, N, renormalize=True)
    A = P.T - np.eye(N + 1)
    A[0] = 1.0
    b = np.zeros(N + 1)
    b[0] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return pi, float(np.abs(pi @ P - pi).max())


def boundary_mean(env, rel_tol: float = 1e-8):
    """``E[Z_0]`` and its error estimate from the boundary solve (drift above 2)."""
    env = as_env(env)
    d = float(exact_drift(env))
    sol = solve_boundary(env.probs, d)
    if not sol.mean_error <= rel_tol * abs(sol.mean):
        raise NonConvergenceError(
            f"stationary mean {sol.mean} has error {sol.mean_error:.3g} above rel_tol {rel_tol}",
            (sol.mean - sol.mean_error, sol.mean + sol.mean_error))
    return sol


def stationary_distribution(env, rel_tol: float = 1e-8, *, n_start: int = 64, n_cap: int = 4096,
                            mass_tol: float = 1e-6) -> StationaryDistribution:
    """Invariant law of ``Z`` for drift above 1.

    ``N`` is doubled from ``n_start`` until the truncated masses of the first
    states agree with the boundary solve within ``mass_tol`` (drift above 2)
    or the estimated tail drops below ``mass_tol``, stopping at ``n_cap``.
    Raises ``NonConvergenceError`` when the mean misses ``rel_tol``.
    """
    env = as_env(env)
    d = float(exact_drift(env))
    if d <= 1:
        raise ValueError(f"stationary law needs drift above 1, got {d}")
    if n_start < 1 or n_cap < n_start:
        raise ValueError("need 1 <= n_start <= n_cap")
    sol = boundary_mean(env, rel_tol) if d > 2 else None
    N = n_start
    while True:
        pi, resid = truncated_stationary(env, N)
        tail = float(pi[-1] * N / (d - 1.0))
        gap = None
        if sol is not None:
            L = sol.masses.shape[0]
            gap = float(np.abs(pi[:L] - sol.masses).max())
            done = gap < mass_tol
        else:
            done = tail < mass_tol
        if done or 2 * N > n_cap:
            break
        N *= 2
    if sol is None:
        return StationaryDistribution(N, pi, tail, math.inf, 0.0, resid, d, None, {"method": "truncated_solve"})
    return StationaryDistribution(N, pi, tail, sol.mean, sol.mean_error, resid, d, gap,
                                  {"method": "truncated_solve+boundary_orbit",
                                   "boundary_masses": sol.masses.tolist(),
                                   "boundary_residual": sol.residual})


@dataclass
class SpeedReport:
    delta: float
    regime: str
    v: float
    method: str
    error_estimate: float

    def to_dict(self) -> dict:
        return {"delta": self.delta, "regime": self.regime, "v": self.v, "method": self.method,
                "error_estimate": self.error_estimate}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def speed_report(env, rel_tol: float = 1e-8) -> SpeedReport:
    env = as_env(env)
    d = exact_drift(env)
    regime = classify(env)
    if -2 <= d <= 2:
        return SpeedReport(float(d), regime.transience.value, 0.0, "zero_speed_drift", 0.0)
    if d < -2:
        r = speed_report(mirror(env), rel_tol)
        return SpeedReport(float(d), regime.transience.value, -r.v, r.method + "+mirror", r.error_estimate)
    sol = boundary_mean(env, rel_tol)
    v = 1.0 / (1.0 + 2.0 * sol.mean)
    err = 2.0 * sol.mean_error * v * v
    return SpeedReport(float(d), regime.transience.value, v, "boundary_orbit", err)


def speed(env, rel_tol: float = 1e-8) -> float:
    return speed_report(env, rel_tol).v


@njit(cache=True)
def dz_batch(seed, kind, probs, cum, ym, zm, n, samples, cap, span):
    """Walk to level ``n`` ``samples`` times (episode seeds from ``derive_seed``).

    Returns left crossings ``D[s, x]`` for ``x = 0..n``, ``T~_n`` and a flag
    that is 0 for censored runs (cap reached or left beyond ``-span``).
    """
    M = probs.shape[0]
    visits = np.zeros(span + n + 1, dtype=np.int64)
    heads = np.zeros(span + n + 1, dtype=np.uint64)
    D = np.zeros((samples, n + 1), dtype=np.int64)
    tt = np.zeros(samples, dtype=np.int64)
    ok = np.zeros(samples, dtype=np.int64)
    for s in range(samples):
        sd = derive_seed(seed, s)
        x = 0
        lo = 0
        nonneg = 0
        for _ in range(cap):
            if x == n:
                break
            if x >= 0:
                nonneg += 1
            idx = x + span
            if idx < 0:
                break
            visits[idx] += 1
            j = visits[idx]
            if j <= M:
                if j == 1:
                    heads[idx] = head_mask(sd, kind, probs, cum, ym, zm, x)
                b = np.int64((heads[idx] >> U64(j - 1)) & U64(1))
            else:
                t = j - M - 1
                b = np.int64((tail_word(sd, x, t >> 6) >> U64(t & 63)) & U64(1))
            if b == 0 and x >= 0:
                D[s, x] += 1
            x += 2 * b - 1
            if x < lo:
                lo = x
        if x == n:
            ok[s] = 1
        tt[s] = nonneg
        for y in range(max(lo, -span), n + 1):
            visits[y + span] = 0
            heads[y + span] = U64(0)
    return D, tt, ok


def _two_sample_chi2(a_keys, b_keys, min_expected: float = 5.0):
    """Chi-square homogeneity test; categories too rare on both sides are pooled."""
    cats = sorted(set(a_keys) | set(b_keys))
    ca = {c: 0 for c in cats}
    cb = {c: 0 for c in cats}
    for k in a_keys:
        ca[k] += 1
    for k in b_keys:
        cb[k] += 1
    total = len(a_keys) + len(b_keys)
    share_a = len(a_keys) / total
    rows_a, rows_b, pool_a, pool_b = [], [], 0, 0
    for c in cats:
        t = ca[c] + cb[c]
        if min(share_a, 1 - share_a) * t >= min_expected:
            rows_a.append(ca[c])
            rows_b.append(cb[c])
        else:
            pool_a += ca[c]
            pool_b += cb[c]
    if pool_a + pool_b > 0:
        rows_a.append(pool_a)
        rows_b.append(pool_b)
    if len(rows_a) < 2:
        return 0.0, 0, 1.0
    stat, p, dof, _ = chi2_contingency(np.array([rows_a, rows_b]), correction=False)
    return float(stat), int(dof), float(p)


@dataclass
class DZReport:
    n: int
    samples: int
    censored: int
    chi2: float
    dof: int
    p_value: float
    t_tilde_chi2: float
    t_tilde_p_value: float
    mean_D0: float
    mean_Zn: float
    mean_se: float
    top_always_zero: bool
    alpha: float = 0.001

    @property
    def passed(self) -> bool:
        return (self.p_value > self.alpha and self.t_tilde_p_value > self.alpha and self.censored == 0
                and self.top_always_zero and abs(self.mean_D0 - self.mean_Zn) <= 3 * self.mean_se)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def dz_distribution_check(env, n: int, samples: int, seed: int = 0, *, cap: int = 10_000_000,
                          span: int = 100_000, alpha: float = 0.001) -> DZReport:
    """Compare ``(D_n, ..., D_0)`` before ``T_n`` with ``(Z_0, ..., Z_n)``, and
    ``T~_n`` with ``n + 2 (Z_0 + ... + Z_{n-1}) + Z_n``.

    Walks use the episode seeds of ``seed`` and chains those of episode ``samples``.
    """
    env = as_env(env)
    if classify(env).transience == Transience.TRANSIENT_LEFT:
        raise ValueError("the walk must be recurrent or transient to the right")
    if not 1 <= n <= 5:
        raise ValueError("n must be in 1..5")
    if samples < 2:
        raise ValueError("need at least two samples")
    f = TrialField(env, seed)
    D, tt, ok = dz_batch(*f.spec, int(n), int(samples), int(cap), int(span))
    censored = int(samples - ok.sum())
    D, tt = D[ok == 1], tt[ok == 1]
    Drev = D[:, ::-1]
    g = TrialField(env, episode_seed(seed, samples))
    Z = backward_paths(*g.spec, int(n), int(samples))
    clip = 4
    keys_d = [tuple(np.minimum(r, clip).tolist()) for r in Drev]
    keys_z = [tuple(np.minimum(r, clip).tolist()) for r in Z]
    stat, dof, p = _two_sample_chi2(keys_d, keys_z)
    tz = n + 2 * Z[:, :n].sum(axis=1) + Z[:, n]
    tclip = int(np.quantile(np.concatenate([tt, tz]), 0.99))
    tstat, _, tp = _two_sample_chi2(np.minimum(tt, tclip).tolist(), np.minimum(tz, tclip).tolist())
    d0, zn = D[:, 0].astype(float), Z[:, n].astype(float)
    se = math.sqrt(d0.var(ddof=1) / d0.size + zn.var(ddof=1) / zn.size) if d0.size > 1 else math.inf
    return DZReport(n, samples, censored, stat, dof, p, tstat, tp, float(d0.mean()), float(zn.mean()), se,
                    bool(np.all(D[:, n] == 0)), alpha)


def stationary_tv_check(env, generations: int, runs: int, seed: int = 0, dist: StationaryDistribution | None = None):
    """Total variation between the empirical law of ``Z_generations`` and ``pi``."""
    env = as_env(env)
    dist = stationary_distribution(env) if dist is None else dist
    f = TrialField(env, seed)
    ends = backward_endpoints(*f.spec, int(generations), int(runs))
    emp = np.bincount(ends, minlength=dist.N + 1).astype(float) / runs
    pi = dist.masses
    over = float(emp[dist.N + 1 :].sum())
    tv = 0.5 * (float(np.abs(emp[: dist.N + 1] - pi).sum()) + over)
    return tv, ends
