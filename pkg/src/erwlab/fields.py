"""Seeded Bernoulli trial fields ``xi[i, j]`` and their coupled pairs.

Trials are addressed by ``(site, j)`` and computed on demand from the seed, so
two consumers of the same field (a walk and a branching process, say) always
see identical outcomes regardless of the order in which they read them.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from . import _rng
from .coupling import CouplingTable, build_coupling_table
from .env import CookieEnvironment, as_env, pad_pair

_EMPTY_F = np.zeros(0, dtype=np.float64)
_EMPTY_U = np.zeros(0, dtype=np.uint64)

SEED_MASK = (1 << 64) - 1


def parse_seed(text) -> int:
    """Decimal or ``0x``-prefixed hexadecimal 64-bit seed."""
    value = int(text, 0) if isinstance(text, str) else int(text)
    if not 0 <= value <= SEED_MASK:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {value}")
    return value


def episode_seed(seed: int, episode: int) -> int:
    """Seed of episode ``episode`` in a batch started from ``seed``."""
    return int(_rng.derive_seed(np.uint64(parse_seed(seed)), int(episode)))


class TrialField:
    """Independent trials: ``xi[i, j] ~ Bernoulli(p_j)`` for ``j <= M``, fair afterwards."""

    kind = 0

    def __init__(self, env, seed: int = 0):
        self.env = as_env(env)
        self.seed = parse_seed(seed)
        self.counters: dict[int, int] = defaultdict(int)
        self._probs = np.ascontiguousarray(self.env.probs, dtype=np.float64)

    @property
    def spec(self) -> tuple:
        """Argument tuple understood by the compiled kernels."""
        return (np.uint64(self.seed), self.kind, self._probs, _EMPTY_F, _EMPTY_U, _EMPTY_U)

    def trial(self, site: int, j: int) -> int:
        if j < 1:
            raise ValueError("trial index starts at 1")
        self.counters[site] = max(self.counters[site], j)
        return int(_rng.trial_at(*self.spec, int(site), int(j)))

    def draw(self, site: int) -> int:
        """Next unread trial at ``site``."""
        return self.trial(site, self.counters[site] + 1)

    def trials(self, site: int, n: int) -> np.ndarray:
        return np.array([_rng.trial_at(*self.spec, int(site), j) for j in range(1, n + 1)], dtype=np.int8)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.env.format()}, seed={self.seed:#x})"


class _CoupledSide(TrialField):
    def __init__(self, parent: "CoupledTrialField", kind: int, env: CookieEnvironment):
        self.env = env
        self.seed = parent.seed
        self.kind = kind
        self.counters = defaultdict(int)
        self._probs = parent._probs
        self._parent = parent

    @property
    def spec(self) -> tuple:
        cum, ym, zm = self._parent._arrays
        return (np.uint64(self.seed), self.kind, self._probs, cum, ym, zm)


class CoupledTrialField:
    """Pair of fields for ``p ⪯ q`` sharing randomness site by site.

    At each site the first ``M`` trials of both sides are one joint draw from
    the coupling table; later trials are the same fair bits on both sides.
    ``first`` has the law of the ``p`` field and ``second`` of the ``q`` field.
    """

    def __init__(self, p, q, seed: int = 0, table: CouplingTable | None = None):
        self.p, self.q = pad_pair(p, q)
        self.seed = parse_seed(seed)
        self.table = build_coupling_table(self.p, self.q) if table is None else table
        if self.table.M != self.p.M:
            raise ValueError("coupling table length does not match the environments")
        # raises on rows that break prefix dominance
        self._arrays = self.table.sampler_arrays()
        self._probs = np.ascontiguousarray(self.p.probs, dtype=np.float64)
        self.first = _CoupledSide(self, 1, self.p)
        self.second = _CoupledSide(self, 2, self.q)

    @property
    def M(self) -> int:
        return self.p.M

    def coupled_trial(self, site: int, j: int) -> tuple[int, int]:
        a, b = self.first.trial(site, j), self.second.trial(site, j)
        if j <= self.M:
            if int(np.sum(self.first.trials(site, j))) > int(np.sum(self.second.trials(site, j))):
                raise RuntimeError("prefix dominance violated; coupling table is corrupted")
        return a, b

    def head(self, site: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        y = tuple(int(t) for t in self.first.trials(site, self.M))
        z = tuple(int(t) for t in self.second.trials(site, self.M))
        return y, z
