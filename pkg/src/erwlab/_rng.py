"""Counter-based randomness shared by every simulation kernel.

Each Bernoulli trial is a pure function of ``(seed, site, stream, index)``,
so the walk and the branching processes can read the same trial field in any
order.  The mixer is the splitmix64 finalizer applied three times.

A field is described to the kernels by a small tuple of arrays::

    (seed, kind, probs, cum, ymask, zmask)

``kind`` is 0 for an independent field (cookie ``j`` is ``u_j < p_j``),
1 / 2 for the first / second side of a coupled field whose whole head vector
is one draw from a coupling table (``cum`` holds cumulative row masses and
``ymask`` / ``zmask`` the head bits of every row).  Trials past the head are
fair bits taken from 64-bit words on a separate stream, shared by both sides
of a coupled field.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_STREAM = U64(0xD1B54A32D192ED03)

HEAD_STREAM = 0
TAIL_STREAM = 1
JOINT_STREAM = 2
EPISODE_STREAM = 3

TRIAL_CAP = 1 << 32


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> U64(30))) * _M1
    z = (z ^ (z >> U64(27))) * _M2
    return z ^ (z >> U64(31))


@njit(cache=True)
def hash3(seed, site, stream, index):
    h = _mix(U64(seed) + _GOLDEN)
    h = _mix(h ^ (U64(np.int64(site) & np.int64(-1)) * _GOLDEN))
    return _mix(h ^ (U64(stream) * _STREAM + U64(index)))


@njit(cache=True)
def derive_seed(seed, episode):
    """Seed of episode ``episode`` in a batch started from ``seed``."""
    return hash3(seed, 0, EPISODE_STREAM, episode)


@njit(cache=True, inline="always")
def to_unit(h):
    # 53 high bits -> [0, 1)
    return np.float64(h >> U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def popcount(x):
    x = x - ((x >> U64(1)) & U64(0x5555555555555555))
    x = (x & U64(0x3333333333333333)) + ((x >> U64(2)) & U64(0x3333333333333333))
    x = (x + (x >> U64(4))) & U64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * U64(0x0101010101010101)) >> U64(56))


@njit(cache=True)
def head_mask(seed, kind, probs, cum, ymask, zmask, site):
    """Bit ``j - 1`` of the result is the outcome of cookie trial ``j``."""
    if kind == 0:
        m = U64(0)
        for j in range(probs.shape[0]):
            if to_unit(hash3(seed, site, HEAD_STREAM, j + 1)) < probs[j]:
                m |= U64(1) << U64(j)
        return m
    u = to_unit(hash3(seed, site, JOINT_STREAM, 0))
    row = np.searchsorted(cum, u, side="right")
    if row >= cum.shape[0]:
        row = cum.shape[0] - 1
    if kind == 1:
        return ymask[row]
    return zmask[row]


@njit(cache=True)
def tail_key(seed, site):
    return hash3(seed, site, TAIL_STREAM, 0)


@njit(cache=True, inline="always")
def word_at(key, block):
    # splitmix64 sequence seeded by the site key
    return _mix(U64(key) + U64(block + 1) * _GOLDEN)


@njit(cache=True)
def tail_word(seed, site, block):
    """Fair trials ``M + 64 * block + 1 ..`` at ``site``, least significant bit first."""
    return word_at(tail_key(seed, site), block)


@njit(cache=True)
def trial_at(seed, kind, probs, cum, ymask, zmask, site, j):
    M = probs.shape[0]
    if j <= M:
        return np.int64((head_mask(seed, kind, probs, cum, ymask, zmask, site) >> U64(j - 1)) & U64(1))
    t = j - M - 1
    return np.int64((tail_word(seed, site, t >> 6) >> U64(t & 63)) & U64(1))


@njit(cache=True)
def count_before(seed, kind, probs, cum, ymask, zmask, site, k, stop_bit):
    """Number of trials equal to ``1 - stop_bit`` before the ``k``-th trial equal
    to ``stop_bit``.  ``stop_bit = 0`` gives successes before the k-th failure,
    ``stop_bit = 1`` failures before the k-th success."""
    if k <= 0:
        return 0
    M = probs.shape[0]
    hm = head_mask(seed, kind, probs, cum, ymask, zmask, site)
    stops = 0
    other = 0
    for j in range(M):
        b = np.int64((hm >> U64(j)) & U64(1))
        if b == stop_bit:
            stops += 1
            if stops == k:
                return other
        else:
            other += 1
    block = 0
    used = M
    key = tail_key(seed, site)
    while True:
        w = word_at(key, block)
        if stop_bit == 0:
            w = ~w
        # now set bits are stops
        c = popcount(w)
        if stops + c < k:
            stops += c
            other += 64 - c
        else:
            # position of the (k - stops)-th set bit, by halving the word
            need = k - stops
            pos = 0
            width = 32
            while width > 0:
                low = popcount((w >> U64(pos)) & ((U64(1) << U64(width)) - U64(1)))
                if low < need:
                    need -= low
                    pos += width
                width >>= 1
            return other + pos - (k - stops - 1)
        block += 1
        used += 64
        if used > TRIAL_CAP:
            raise RuntimeError("trial cap exceeded while counting Bernoulli trials")
