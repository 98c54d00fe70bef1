"""Seeded experiments checking the pathwise and monotonicity statements about
excited random walks, and named suites that bundle them into reports."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np
from numba import njit
from scipy.stats import nbinom

from ._rng import U64, count_before, derive_seed, head_mask, tail_word
from .backward import speed_report, stationary_distribution
from .coupling import Order, decide_order
from .env import as_env, exact_drift
from .fields import CoupledTrialField, TrialField, episode_seed, parse_seed
from .forward import clopper_pearson, forward_fate, survival_probability

SIGMA = 3.0
LEVEL = 0.95


@dataclass
class Claim:
    name: str
    passed: bool
    estimate: float | None = None
    radius: float | None = None
    method: str = ""
    details: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    name: str
    p: list[float]
    q: list[float] | None
    seed: int
    episodes: int
    claims: list[Claim] = field(default_factory=list)
    runtime: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def claim(self, name: str) -> Claim:
        for c in self.claims:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self, with_runtime: bool = False) -> dict:
        d = asdict(self)
        d["seed"] = f"{self.seed:#x}"
        d["passed"] = self.passed
        if not with_runtime:
            d.pop("runtime")
        return d


def _clean(obj):
    """Plain Python scalars so reports serialise identically every time."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def reports_json(reports, with_runtime: bool = False) -> str:
    body = {"passed": all(r.passed for r in reports),
            "reports": [r.to_dict(with_runtime) for r in reports]}
    return json.dumps(_clean(body), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def uv_batch(seed, kind, probs, cum, ym, zm, episodes, horizon):
    """Walk excursions against forward chains on the same trials.

    Returns counts: violations of ``U <= V``, episodes with ``X_1 = 1`` and a
    return before ``horizon``, equality failures among those, episodes with
    ``X_1 = -1``.
    """
    M = probs.shape[0]
    visits = np.zeros(horizon + 2, dtype=np.int64)
    heads = np.zeros(horizon + 2, dtype=np.uint64)
    up = np.zeros(horizon + 2, dtype=np.int64)
    viol = 0
    returned = 0
    eq_fail = 0
    left = 0
    for e in range(episodes):
        sd = derive_seed(seed, e)
        x = 0
        top = 0
        back = False
        for n in range(horizon):
            visits[x] += 1
            j = visits[x]
            if j <= M:
                if j == 1:
                    heads[x] = head_mask(sd, kind, probs, cum, ym, zm, x)
                b = np.int64((heads[x] >> U64(j - 1)) & U64(1))
            else:
                t = j - M - 1
                b = np.int64((tail_word(sd, x, t >> 6) >> U64(t & 63)) & U64(1))
            if b == 1:
                up[x] += 1
            x += 2 * b - 1
            if x <= 0:
                back = x == 0
                break
            if x > top:
                top = x
        if x < 0:
            left += 1
        v = 1
        bad = False
        unequal = False
        for i in range(top + 2):
            if i > 0:
                v = count_before(sd, kind, probs, cum, ym, zm, i, v, 0) if v > 0 else 0
            u = up[i] if i <= top else 0
            if u > v:
                bad = True
            if u != v:
                unequal = True
        if bad:
            viol += 1
        if back:
            returned += 1
            if unequal:
                eq_fail += 1
        for i in range(top + 2):
            visits[i] = 0
            heads[i] = U64(0)
            up[i] = 0
    return viol, returned, eq_fail, left


@njit(cache=True)
def coupled_chains(seed, probs, cum, ym, zm, episodes, generations, spot_k):
    """Coupled forward (``V`` vs ``V'``) and backward (``Z`` vs ``Z'``) runs.

    Returns forward violations, backward violations, spot-check violations of
    ``S_k <= S'_k`` / ``F_k >= F'_k`` at site 1 for ``k <= spot_k``, and the
    number of episodes whose paths were identical on both sides.
    """
    fv = 0
    bv = 0
    sv = 0
    same = 0
    for e in range(episodes):
        sd = derive_seed(seed, e)
        v = 1
        w = 1
        z = 0
        y = 0
        f_bad = False
        b_bad = False
        ident = True
        for i in range(1, generations + 1):
            if v > 0 or w > 0:
                v = count_before(sd, 1, probs, cum, ym, zm, i, v, 0)
                w = count_before(sd, 2, probs, cum, ym, zm, i, w, 0)
                if v > w:
                    f_bad = True
                if v != w:
                    ident = False
            z = count_before(sd, 1, probs, cum, ym, zm, i, z + 1, 1)
            y = count_before(sd, 2, probs, cum, ym, zm, i, y + 1, 1)
            if z < y:
                b_bad = True
            if z != y:
                ident = False
        for k in range(1, spot_k + 1):
            if count_before(sd, 1, probs, cum, ym, zm, 1, k, 0) > count_before(sd, 2, probs, cum, ym, zm, 1, k, 0):
                sv += 1
            if count_before(sd, 1, probs, cum, ym, zm, 1, k, 1) < count_before(sd, 2, probs, cum, ym, zm, 1, k, 1):
                sv += 1
        fv += f_bad
        bv += b_bad
        same += ident
    return fv, bv, sv, same


@njit(cache=True)
def fate_batch(seed, kind, probs, cum, ym, zm, episodes, threshold, max_generations):
    out = np.empty(episodes, dtype=np.int64)
    for e in range(episodes):
        out[e] = forward_fate(derive_seed(seed, e), kind, probs, cum, ym, zm, threshold, max_generations)[0]
    return out


@njit(cache=True)
def stays_positive(seed, kind, probs, cum, ym, zm, episodes, horizon, early):
    """Per episode: 0 if the walk is back at or below 0 within ``early`` steps,
    1 if that happens within ``horizon`` steps, 2 if it stays positive."""
    M = probs.shape[0]
    visits = np.zeros(horizon + 2, dtype=np.int64)
    heads = np.zeros(horizon + 2, dtype=np.uint64)
    out = np.empty(episodes, dtype=np.int64)
    for e in range(episodes):
        sd = derive_seed(seed, e)
        x = 0
        top = 0
        res = 2
        for n in range(horizon):
            visits[x] += 1
            j = visits[x]
            if j <= M:
                if j == 1:
                    heads[x] = head_mask(sd, kind, probs, cum, ym, zm, x)
                b = np.int64((heads[x] >> U64(j - 1)) & U64(1))
            else:
                t = j - M - 1
                b = np.int64((tail_word(sd, x, t >> 6) >> U64(t & 63)) & U64(1))
            x += 2 * b - 1
            if x <= 0:
                res = 0 if n < early else 1
                break
            if x > top:
                top = x
        out[e] = res
        for i in range(top + 1):
            visits[i] = 0
            heads[i] = U64(0)
    return out


@njit(cache=True)
def coupled_ergodic(seed, probs, cum, ym, zm, burn_in, generations, batches):
    """One coupled backward run; batch sums of ``Z - Z'`` and of ``1{Z > Z'}``."""
    z = 0
    y = 0
    for i in range(1, burn_in + 1):
        z = count_before(seed, 1, probs, cum, ym, zm, i, z + 1, 1)
        y = count_before(seed, 2, probs, cum, ym, zm, i, y + 1, 1)
    size = generations // batches
    diff = np.zeros(batches)
    above = np.zeros(batches)
    viol = 0
    for b in range(batches):
        for t in range(size):
            i = burn_in + 1 + b * size + t
            z = count_before(seed, 1, probs, cum, ym, zm, i, z + 1, 1)
            y = count_before(seed, 2, probs, cum, ym, zm, i, y + 1, 1)
            diff[b] += z - y
            if z > y:
                above[b] += 1
            if z < y:
                viol += 1
    return diff / size, above / size, viol


# ------------------------------------------------------------ experiments


def verify_pathwise_UV(env, episodes: int, horizon: int, seed: int = 0) -> ExperimentReport:
    """Right crossings ``U_i`` of the first excursion against the forward chain ``V_i``."""
    env = as_env(env)
    seed = parse_seed(seed)
    f = TrialField(env, seed)
    viol, returned, eq_fail, left = uv_batch(*f.spec, int(episodes), int(horizon))
    rep = ExperimentReport("pathwise_uv", env.as_list(), None, seed, episodes)
    rep.claims.append(Claim("U_le_V", viol == 0, float(viol), 0.0, "count",
                            {"violations": int(viol), "horizon": horizon}))
    rep.claims.append(Claim("U_eq_V_on_return", eq_fail == 0, float(returned - eq_fail), 0.0, "count",
                            {"returned": int(returned), "equality_failures": int(eq_fail),
                             "first_step_left": int(left)}))
    return rep


def _ordered_pair(p, q, allow_equal: bool = True):
    verdict = decide_order(p, q)
    ok = (Order.STRICT, Order.EQUAL) if allow_equal else (Order.STRICT,)
    if verdict.order not in ok:
        raise ValueError(f"{verdict.p.format()} and {verdict.q.format()} are {verdict.order.value}; "
                         "a dominating coupling is required")
    return verdict


def verify_coupled_domination(p, q, episodes: int, generations: int = 1000, seed: int = 0,
                              spot_k: int = 10) -> ExperimentReport:
    """``V <= V'`` and ``Z >= Z'`` along coupled fields, primes on ``q``."""
    verdict = _ordered_pair(p, q)
    seed = parse_seed(seed)
    cf = CoupledTrialField(verdict.p, verdict.q, seed, verdict.table)
    s, _, probs, cum, ym, zm = cf.first.spec
    fv, bv, sv, same = coupled_chains(s, probs, cum, ym, zm, int(episodes), int(generations), int(spot_k))
    rep = ExperimentReport("coupled_domination", verdict.p.as_list(), verdict.q.as_list(), seed, episodes)
    rep.claims.append(Claim("V_le_Vprime", fv == 0, float(fv), 0.0, "count", {"generations": generations}))
    rep.claims.append(Claim("Z_ge_Zprime", bv == 0, float(bv), 0.0, "count", {"generations": generations}))
    rep.claims.append(Claim("spot_S_F", sv == 0, float(sv), 0.0, "count", {"k_max": spot_k}))
    if verdict.order is Order.EQUAL:
        rep.claims.append(Claim("identical_when_equal", same == episodes, float(same), 0.0, "count"))
    return rep


def _branching_mc(env, seed, episodes, threshold, max_generations):
    f = TrialField(env, seed)
    fates = fate_batch(*f.spec, int(episodes), int(threshold), int(max_generations))
    p1 = float(env.probs[0]) if env.M else 0.5
    s = float(np.mean(fates == 1))
    return p1 * s, p1 * math.sqrt(max(s * (1 - s), 1.0 / episodes) / episodes), fates


def escape_probability_gap(p, q, episodes: int, seed: int = 0, *, threshold: int = 1_000,
                           max_generations: int = 1_000_000, direct_episodes: int | None = None,
                           horizon: int = 100_000, early: int = 10_000) -> ExperimentReport:
    """Escape probabilities ``P(X_n > 0 for all n > 0)`` of ``p`` and ``q``.

    The branching route multiplies ``p_1`` by the survival of the forward
    chain; it is estimated by a truncated solve and by Monte Carlo (reaching
    ``threshold`` counts as survival, which overstates survival slightly).  The direct route counts walks still
    positive after ``horizon`` steps; its censoring bias is extrapolated from
    the returns seen between ``early`` and ``horizon`` steps, assuming the
    tail ``P(n < T < infinity) ~ n^(-(delta - 1) / 2)``.
    """
    verdict = _ordered_pair(p, q, allow_equal=False)
    P, Q = verdict.p, verdict.q
    dp = float(exact_drift(P))
    if dp <= 1:
        raise ValueError(f"escape gap needs drift of p above 1, got {dp}")
    seed = parse_seed(seed)
    direct_episodes = min(episodes, 10_000) if direct_episodes is None else direct_episodes
    rep = ExperimentReport("escape_gap", P.as_list(), Q.as_list(), seed, episodes)
    est = {}
    for tag, env, s in (("p", P, episode_seed(seed, 0)), ("q", Q, episode_seed(seed, 1))):
        val, se, _ = _branching_mc(env, s, episodes, threshold, max_generations)
        p1 = float(env.probs[0])
        exact = survival_probability(env)
        f = TrialField(env, episode_seed(s, 1 << 40))
        res = stays_positive(*f.spec, int(direct_episodes), int(horizon), int(early))
        n = direct_episodes
        raw = float(np.mean(res == 2))
        late = float(np.mean(res == 1))
        a = max(float(exact_drift(env)) - 1.0, 0.0) / 2.0
        ratio = (early / horizon) ** a
        bias = late * ratio / (1.0 - ratio) if 0 < ratio < 1 else late
        se_d = math.sqrt(max(raw * (1 - raw), 1.0 / n) / n)
        est[tag] = {"mc": val, "mc_se": se, "exact": p1 * exact.value, "exact_radius": p1 * exact.radius,
                    "survival_lower": exact.lower,
                    "direct": raw, "direct_se": se_d, "direct_bias": bias}
        agree = abs(raw - p1 * exact.value) <= SIGMA * se_d + bias + p1 * exact.radius
        rep.claims.append(Claim(f"estimators_agree_{tag}", bool(agree), raw, SIGMA * se_d + bias,
                                "direct_walk_vs_branching", {"branching": p1 * exact.value, "late_returns": late,
                                                             "horizon": horizon, "early": early,
                                                             "episodes": n}))
    gap = est["q"]["mc"] - est["p"]["mc"]
    se = math.hypot(est["p"]["mc_se"], est["q"]["mc_se"])
    rep.claims.append(Claim("branching_gap_mc", gap > SIGMA * se, gap, SIGMA * se, "branching_monte_carlo",
                            {"p": est["p"]["mc"], "q": est["q"]["mc"], "threshold": threshold}))
    gap_x = est["q"]["exact"] - est["p"]["exact"]
    rad_x = est["p"]["exact_radius"] + est["q"]["exact_radius"]
    rep.claims.append(Claim("branching_gap_exact", gap_x > rad_x, gap_x, rad_x, "branching_truncated_solve",
                            {"p": est["p"]["exact"], "q": est["q"]["exact"]}))
    # coupled event: V dies while V' survives
    cf = CoupledTrialField(P, Q, episode_seed(seed, 2), verdict.table)
    fp = fate_batch(*cf.first.spec, int(episodes), int(threshold), int(max_generations))
    fq = fate_batch(*cf.second.spec, int(episodes), int(threshold), int(max_generations))
    hits = int(np.sum((fp == 0) & (fq == 1)))
    lo, hi = clopper_pearson(hits, episodes, LEVEL)
    # runs of V' that reach the threshold and die later are counted as hits;
    # their chance is at most P(V' reaches threshold) - P(V' survives)
    _, reach_hi = clopper_pearson(int(np.sum(fq == 1)), episodes, LEVEL)
    excess = max(reach_hi - est["q"]["survival_lower"], 0.0)
    rep.claims.append(Claim("coupled_event_positive", lo - excess > 0, hits / episodes, hi - lo, "clopper_pearson",
                            {"lower": lo, "upper": hi, "hits": hits, "threshold_excess": excess,
                             "lower_after_excess": lo - excess,
                             "order_violations": int(np.sum((fp == 1) & (fq == 0)))}))
    return rep


def strict_failure_gap(table, k: int) -> float:
    """``P(F_k > F'_k)`` at one site under the coupling ``table``: heads are a
    joint draw from the table and later trials are shared fair bits."""
    total = 0.0
    for y, z, w in table.rows:
        fy, ry = _head_progress(y, k)
        fz, rz = _head_progress(z, k)
        if ry == 0 and rz == 0:
            p = 1.0 if fy > fz else 0.0
        elif rz == 0:
            # F = fy + NB(ry) against a fixed F'
            p = float(nbinom.sf(fz - fy, ry, 0.5))
        elif ry == 0:
            p = float(nbinom.cdf(fy - fz - 1, rz, 0.5))
        elif ry >= rz:
            # the shared tail makes F - F' = fy - fz + NB(ry - rz)
            p = (1.0 if fy > fz else 0.0) if ry == rz else float(nbinom.sf(fz - fy, ry - rz, 0.5))
        else:
            p = float(nbinom.cdf(fy - fz - 1, rz - ry, 0.5))
        total += w * p
    return total


def _head_progress(head, k):
    """Failures before the ``k``-th success within the head (``r = 0``), or
    head failures and successes still needed (``r > 0``)."""
    s = f = 0
    for b in head:
        if b:
            s += 1
            if s == k:
                return f, 0
        else:
            f += 1
    return f, k - s


def speed_gap(p, q, seed: int = 0, *, burn_in: int = 10_000, generations: int = 1_000_000,
              batches: int = 100, rel_tol: float = 1e-8) -> ExperimentReport:
    """Either both speeds vanish or ``v(p) < v(q)`` beyond the solver errors."""
    verdict = _ordered_pair(p, q, allow_equal=False)
    P, Q = verdict.p, verdict.q
    seed = parse_seed(seed)
    rp, rq = speed_report(P, rel_tol), speed_report(Q, rel_tol)
    rep = ExperimentReport("speed_gap", P.as_list(), Q.as_list(), seed, generations)
    both_zero = rp.v == 0 and rq.v == 0
    gap = rq.v - rp.v
    err = rp.error_estimate + rq.error_estimate
    strict = gap > err
    rep.claims.append(Claim("dichotomy", both_zero or strict, gap, err, f"{rp.method}/{rq.method}",
                            {"v_p": rp.v, "v_q": rq.v, "delta_p": rp.delta, "delta_q": rq.delta,
                             "branch": "both_zero" if both_zero else "strict"}))
    if not both_zero:
        rep.claims.append(Claim("strict_gap", strict, gap, err, f"{rp.method}/{rq.method}",
                                {"v_p": rp.v, "v_q": rq.v}))
    if rp.v > 0 and rq.v > 0:
        cf = CoupledTrialField(P, Q, seed, verdict.table)
        s, _, probs, cum, ym, zm = cf.first.spec
        diff, above, viol = coupled_ergodic(s, probs, cum, ym, zm, int(burn_in), int(generations), int(batches))
        avg, freq = float(diff.mean()), float(above.mean())
        se = float(np.std(diff - above, ddof=1) / math.sqrt(batches))
        rep.claims.append(Claim("ergodic_avg_ge_freq", avg >= freq - SIGMA * se and viol == 0, avg - freq,
                                SIGMA * se, "coupled_ergodic",
                                {"avg_diff": avg, "freq_above": freq, "burn_in": burn_in, "violations": int(viol)}))
        ep = (1.0 / rp.v - 1.0) / 2.0
        eq = (1.0 / rq.v - 1.0) / 2.0
        mean_gap = ep - eq
        freq_se = float(np.std(above, ddof=1) / math.sqrt(batches))
        rep.claims.append(Claim("mean_gap_ge_freq", mean_gap >= freq - SIGMA * freq_se, mean_gap, SIGMA * freq_se,
                                "stationary_solve_vs_coupled_ergodic", {"freq_above": freq}))
        k = verdict.witness
        pi = stationary_distribution(P, rel_tol).masses
        witness = float(pi[k - 1]) * strict_failure_gap(verdict.table, k)
        rep.claims.append(Claim("witness_bound", freq + SIGMA * freq_se >= witness and witness > 0, witness,
                                SIGMA * freq_se, "stationary_mass_times_exact_gap",
                                {"k": k, "freq_above": freq}))
    return rep


# ----------------------------------------------------------------- suites


def load_manifest() -> dict:
    return json.loads(resources.files("erwlab").joinpath("suites.json").read_text())


EXPERIMENTS = {
    "pathwise_uv": lambda c, seed, n: verify_pathwise_UV(c["env"], n, c.get("horizon", 10_000), seed),
    "coupled_domination": lambda c, seed, n: verify_coupled_domination(
        c["p"], c["q"], n, c.get("generations", 1000), seed),
    "escape_gap": lambda c, seed, n: escape_probability_gap(c["p"], c["q"], n, seed),
    "speed_gap": lambda c, seed, n: speed_gap(c["p"], c["q"], seed, generations=c.get("generations", 1_000_000)),
}


def run_suite(config, seed: int = 0, episodes: int | None = None, with_runtime: bool = False):
    """Run a suite given by manifest name or as a list of experiment dicts.

    Experiment ``i`` gets the ``i``-th episode seed of ``seed``; ``episodes``
    overrides every experiment's own count.
    """
    if isinstance(config, str):
        manifest = load_manifest()
        if config not in manifest:
            raise KeyError(f"unknown suite {config!r}; known: {sorted(manifest)}")
        config = manifest[config]
    seed = parse_seed(seed)
    reports = []
    for i, exp in enumerate(config):
        kind = exp["experiment"]
        if kind not in EXPERIMENTS:
            raise KeyError(f"unknown experiment {kind!r}")
        t = time.perf_counter()
        rep = EXPERIMENTS[kind](exp, episode_seed(seed, i), episodes or exp.get("episodes", 1000))
        rep.runtime = time.perf_counter() - t if with_runtime else None
        reports.append(rep)
    return reports
