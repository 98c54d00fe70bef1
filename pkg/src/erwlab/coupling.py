"""The coupling order between cookie environments.

``p ⪯ q`` when the product Bernoulli laws of ``p`` and ``q`` can be coupled so
that every running success count of the ``q`` vector is at least the one of
the ``p`` vector.  Comparability is decided as a transportation problem
(supplies = outcome masses under ``p``, demands = masses under ``q``, arcs only
between prefix-dominated pairs) solved by max-flow.

Strictness: if a dominating coupling exists and the cumulative strengths
differ at some prefix ``m`` then the difference of the running counts has
positive mean under every dominating coupling, hence is positive with
positive probability.  If they never differ the environments are equal.  So
for comparable pairs, strict is the same as unequal.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx
import numpy as np

from .env import CookieEnvironment, as_env, pad_pair

MAX_COOKIES = 12
FLOW_TOL = 1e-10


class Order(str, enum.Enum):
    INCOMPARABLE = "Incomparable"
    EQUAL = "Equal"
    # kept so that a comparable, unequal pair without a strict prefix would
    # show up instead of being folded into another verdict
    WEAK_ONLY = "WeakOnly"
    STRICT = "Strict"


def outcomes(M: int) -> list[tuple[int, ...]]:
    """All length-``M`` binary vectors in lexicographic order."""
    return list(itertools.product((0, 1), repeat=M))


def product_law(probs, vectors=None) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    vectors = np.array(outcomes(len(probs)) if vectors is None else vectors, dtype=float).reshape(-1, len(probs))
    return np.prod(np.where(vectors == 1, probs, 1.0 - probs), axis=1)


def dominated(y, z) -> bool:
    """True when every prefix sum of ``y`` is at most the one of ``z``."""
    return bool(np.all(np.cumsum(y) <= np.cumsum(z)))


def dominance_matrix(M: int) -> np.ndarray:
    vecs = np.array(outcomes(M), dtype=np.int64).reshape(-1, M)
    cs = np.cumsum(vecs, axis=1)
    return np.all(cs[:, None, :] <= cs[None, :, :], axis=2)


def _mask(vec) -> int:
    return sum(int(b) << j for j, b in enumerate(vec))


@dataclass
class CouplingTable:
    """Joint law of two Bernoulli vectors: rows ``(y, z, mass)`` with positive mass."""

    M: int
    rows: list[tuple[tuple[int, ...], tuple[int, ...], float]]

    def masses(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows], dtype=float)

    def marginals(self) -> tuple[dict, dict]:
        fy: dict = {}
        fz: dict = {}
        for y, z, w in self.rows:
            fy[y] = fy.get(y, 0.0) + w
            fz[z] = fz.get(z, 0.0) + w
        return fy, fz

    def validate(self, p, q, tol: float = FLOW_TOL) -> None:
        """Raise ``ValueError`` unless masses, marginals and dominance support all hold."""
        p, q = as_env(p), as_env(q)
        if p.M != self.M or q.M != self.M:
            raise ValueError("table length does not match the environments")
        w = self.masses()
        if np.any(w < 0):
            raise ValueError("negative mass in coupling table")
        if abs(w.sum() - 1.0) > max(tol, 1e-12):
            raise ValueError(f"coupling masses sum to {w.sum()!r}")
        for y, z, _ in self.rows:
            if not dominated(y, z):
                raise ValueError(f"support pair {y} -> {z} violates prefix dominance")
        fy, fz = self.marginals()
        vecs = outcomes(self.M)
        for law, marg, side in ((product_law(p.probs), fy, "first"), (product_law(q.probs), fz, "second")):
            for v, target in zip(vecs, law):
                if abs(marg.get(v, 0.0) - target) > tol:
                    raise ValueError(f"{side} marginal off at {v}: {marg.get(v, 0.0)} vs {target}")

    def sampler_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cumulative masses and head bit masks, the form the simulation kernels use."""
        for y, z, _ in self.rows:
            if not dominated(y, z):
                raise ValueError(f"corrupted coupling table: {y} -> {z} is not prefix dominated")
        w = self.masses()
        cum = np.cumsum(w) / w.sum()
        cum[-1] = 1.0
        ym = np.array([_mask(y) for y, _, _ in self.rows], dtype=np.uint64)
        zm = np.array([_mask(z) for _, z, _ in self.rows], dtype=np.uint64)
        return cum, ym, zm

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        cum, _, _ = self.sampler_arrays()
        idx = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(self.rows) - 1)
        ys = np.array([r[0] for r in self.rows], dtype=np.int8).reshape(-1, self.M)
        zs = np.array([r[1] for r in self.rows], dtype=np.int8).reshape(-1, self.M)
        return ys[idx], zs[idx]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["y", "z", "mass"])
        for y, z, w in self.rows:
            wr.writerow(["(" + ",".join(map(str, y)) + ")", "(" + ",".join(map(str, z)) + ")", repr(float(w))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CouplingTable":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            y = tuple(int(t) for t in rec["y"].strip("()").split(",") if t != "")
            z = tuple(int(t) for t in rec["z"].strip("()").split(",") if t != "")
            rows.append((y, z, float(rec["mass"])))
        return cls(len(rows[0][0]) if rows else 0, rows)


@dataclass
class OrderVerdict:
    order: Order
    p: CookieEnvironment
    q: CookieEnvironment
    witness: int | None = None
    table: CouplingTable | None = None
    flow_deficit: float | None = None
    failed_prefix: int | None = None

    @property
    def comparable(self) -> bool:
        return self.order is not Order.INCOMPARABLE

    def to_dict(self) -> dict:
        return {
            "order": self.order.value,
            "p": self.p.as_list(),
            "q": self.q.as_list(),
            "witness": self.witness,
            "flow_deficit": self.flow_deficit,
            "failed_prefix": self.failed_prefix,
            "table": None if self.table is None else [[list(y), list(z), w] for y, z, w in self.table.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _cumulative_failure(p: CookieEnvironment, q: CookieEnvironment) -> int | None:
    cp = cq = Fraction(0)
    for m, (a, b) in enumerate(zip(p.exact, q.exact), start=1):
        cp += a
        cq += b
        if cp > cq:
            return m
    return None


def _max_flow(p: CookieEnvironment, q: CookieEnvironment):
    M = p.M
    vecs = outcomes(M)
    sup = product_law(p.probs)
    dem = product_law(q.probs)
    dom = dominance_matrix(M)
    g = nx.DiGraph()
    g.add_node("s")
    for a, v in enumerate(vecs):
        g.add_edge("s", ("y", v), capacity=float(sup[a]))
    for a, v in enumerate(vecs):
        # no capacity attribute = unbounded arc
        for b in np.flatnonzero(dom[a]):
            g.add_edge(("y", v), ("z", vecs[b]))
    for b, v in enumerate(vecs):
        g.add_edge(("z", v), "t", capacity=float(dem[b]))
    value, flow = nx.maximum_flow(g, "s", "t", flow_func=nx.algorithms.flow.edmonds_karp)
    return value, flow, vecs


def decide_order(p, q) -> OrderVerdict:
    """Compare two environments (the shorter one is padded with fair cookies)."""
    p, q = pad_pair(p, q)
    if p.M > MAX_COOKIES:
        raise ValueError(f"coupling search supports at most {MAX_COOKIES} cookies, got {p.M}")
    if p == q:
        table = CouplingTable(p.M, [(v, v, float(w)) for v, w in zip(outcomes(p.M), product_law(p.probs)) if w > 0])
        return OrderVerdict(Order.EQUAL, p, q, table=table, flow_deficit=0.0)
    bad = _cumulative_failure(p, q)
    if bad is not None:
        return OrderVerdict(Order.INCOMPARABLE, p, q, failed_prefix=bad)
    value, flow, vecs = _max_flow(p, q)
    deficit = abs(1.0 - value)
    if deficit > FLOW_TOL:
        return OrderVerdict(Order.INCOMPARABLE, p, q, flow_deficit=deficit)
    rows = []
    for y in vecs:
        for (tag, z), f in flow[("y", y)].items():
            if f > 0:
                rows.append((y, z, float(f)))
    table = CouplingTable(p.M, rows)
    k = _first_strict_prefix(p, q)
    order = Order.STRICT if k is not None else Order.WEAK_ONLY
    return OrderVerdict(order, p, q, witness=k, table=table, flow_deficit=deficit)


def _first_strict_prefix(p: CookieEnvironment, q: CookieEnvironment) -> int | None:
    cp = cq = Fraction(0)
    for m, (a, b) in enumerate(zip(p.exact, q.exact), start=1):
        cp += a
        cq += b
        if cp < cq:
            return m
    return None


def build_coupling_table(p, q) -> CouplingTable:
    verdict = decide_order(p, q)
    if verdict.table is None:
        raise ValueError(f"{verdict.p} and {verdict.q} are not ordered; no dominating coupling exists")
    return verdict.table


def minimal_strict_index(p, q) -> int:
    """Smallest ``m`` with ``p_1 + ... + p_m < q_1 + ... + q_m`` for a strictly ordered pair."""
    verdict = decide_order(p, q)
    if verdict.order is not Order.STRICT:
        raise ValueError(f"pair is {verdict.order.value}, not strictly ordered")
    return verdict.witness


def strict_gap_value(p, q, k: int) -> float:
    """``(1-q_1)...(1-q_{k-1}) q_k - (1-p_1)...(1-p_{k-1}) p_k``: the chance the first
        success is trial ``k`` under ``q`` minus the same under ``p``."""
    p, q = pad_pair(p, q)
    if not 1 <= k <= p.M:
        raise ValueError(f"index {k} outside 1..{p.M}")
    first_at = lambda e: np.prod(1.0 - e.probs[: k - 1]) * e.probs[k - 1]
    return float(first_at(q) - first_at(p))


def swap_example_table(p1: float, p2: float) -> CouplingTable:
    """The five-row coupling of ``(p1, p2)`` below ``(p2, p1)`` for ``p1 < p2``."""
    return CouplingTable(2, [
        ((0, 0), (0, 0), (1 - p1) * (1 - p2)),
        ((0, 1), (0, 1), p1 * (1 - p2)),
        ((1, 0), (1, 0), p1 * (1 - p2)),
        ((0, 1), (1, 0), p2 - p1),
        ((1, 1), (1, 1), p1 * p2),
    ])
