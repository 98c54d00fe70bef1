"""Boundary solve for the stationary law of the backward chain.

For ``k >= M - 1`` the one-step generating function of the chain is
``phi(x)^(k+1) h(x)`` with ``phi(x) = 1/(2 - x)`` and
``h(x) = prod_j (p_j (2 - x) + (1 - p_j) x)``.  The stationary generating
function ``G`` therefore satisfies

    G(x) = c(x) + h(x) phi(x) G(phi(x)),

where ``c`` is linear in the ``L = M - 1`` unknown masses ``pi_0..pi_{L-1}``.
The Taylor coefficients of ``G`` at ``x = 0`` are exactly those masses, and the
equation transports them along the orbit ``x_n = n / (n + 1)`` of ``phi``.
Each Taylor order ``m`` of the transported series either has a growing free
mode that must vanish (``2m + 1 > delta``) or must converge to the finite
Taylor coefficient of ``G`` at 1; either way one linear condition per order.
Matching the expansion at ``x = 1`` gives those finite coefficients, among them
``E[Z] = G'(1)`` for ``delta > 2``.

The masses solved at ``n = n0 2^i`` converge algebraically in ``n`` and are
extrapolated; the spread of the last extrapolations is the error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._laws import head_split, stopping_mean


def _binom_table(n: int) -> np.ndarray:
    C = np.zeros((n + 1, n + 1))
    for a in range(n + 1):
        for b in range(a + 1):
            C[a, b] = math.comb(a, b)
    return C


def _h_poly(probs) -> np.ndarray:
    h = np.array([1.0])
    for p in probs:
        # p (2 - x) + (1 - p) x
        h = np.convolve(h, [2.0 * p, 1.0 - 2.0 * p])
    return h


def _c_terms(probs):
    """``c_k(x) = g_k(x) - phi^(k+1) h(x)`` for ``k < L`` as (k, poly, phi power) terms."""
    M = len(probs)
    L = M - 1
    h = _h_poly(probs)
    ks, polys, bs = [], [], []
    for k in range(L):
        absorbed, opened = head_split(probs, k + 1)
        for f, w in absorbed.items():
            poly = np.zeros(M + 1)
            poly[f] = w
            ks.append(k), polys.append(poly), bs.append(0)
        for (s, f), w in opened.items():
            poly = np.zeros(M + 1)
            poly[f] = w
            ks.append(k), polys.append(poly), bs.append(k + 1 - s)
        ks.append(k), polys.append(-h), bs.append(k + 1)
    return np.array(ks, dtype=np.int64), np.array(polys), np.array(bs, dtype=np.int64), h


@njit(cache=True)
def _poly_taylor(poly, x, J, C):
    out = np.zeros(J + 1)
    deg = poly.shape[0] - 1
    for i in range(J + 1):
        s = 0.0
        for d in range(i, deg + 1):
            s += poly[d] * C[d, i] * x ** (d - i)
        out[i] = s
    return out


@njit(cache=True)
def _phi_pow_taylor(b, x, J, C):
    out = np.zeros(J + 1)
    y = 2.0 - x
    if b == 0:
        out[0] = 1.0
        return out
    for i in range(J + 1):
        out[i] = C[b + i - 1, i] * y ** (-b - i)
    return out


@njit(cache=True)
def _mul(a, b, J):
    out = np.zeros(J + 1)
    for i in range(J + 1):
        for j in range(J + 1 - i):
            out[i + j] += a[i] * b[j]
    return out


@njit(cache=True)
def _c_taylor(ks, polys, bs, L, x, J, C):
    out = np.zeros((J + 1, L))
    for t in range(ks.shape[0]):
        ser = _mul(_poly_taylor(polys[t], x, J, C), _phi_pow_taylor(bs[t], x, J, C), J)
        for i in range(J + 1):
            out[i, ks[t]] += ser[i]
    return out


@njit(cache=True)
def _orbit(ks, polys, bs, hpoly, L, J, checkpoints, C):
    """Transport the Taylor coefficients (linear in the unknown masses) along ``x_n``."""
    a = np.zeros((J + 1, L))
    for m in range(J + 1):
        a[m, m] = 1.0
    lp = np.zeros(J + 1)
    ncp = checkpoints.shape[0]
    rec_a = np.zeros((ncp, J + 1, L))
    rec_lp = np.zeros((ncp, J + 1))
    rec_x = np.zeros(ncp)
    x = 0.0
    n = 0
    ci = 0
    nmax = checkpoints[ncp - 1]
    BD = np.zeros((J + 1, J + 1))
    while n < nmax:
        cT = _c_taylor(ks, polys, bs, L, x, J, C)
        BT = _mul(_poly_taylor(hpoly, x, J, C), _phi_pow_taylor(1, x, J, C), J)
        y = 2.0 - x
        D = np.zeros(J + 1)
        for i in range(1, J + 1):
            D[i] = y ** (-i - 1)
        P = np.zeros(J + 1)
        P[0] = 1.0
        for i in range(J + 1):
            BD[i] = _mul(BT, P, J)
            P = _mul(P, D, J)
        anew = np.zeros((J + 1, L))
        for m in range(J + 1):
            for u in range(L):
                r = a[m, u] - cT[m, u]
                for i in range(m):
                    r -= anew[i, u] * BD[i, m]
                anew[m, u] = r / BD[m, m]
            lp[m] += math.log(BD[m, m])
        a = anew
        x = 1.0 / (2.0 - x)
        n += 1
        if n == checkpoints[ci]:
            rec_a[ci] = a
            rec_lp[ci] = lp
            rec_x[ci] = x
            ci += 1
    return rec_a, rec_lp, rec_x


def _c_taylor_at_one(ks, polys, bs, L, order, C):
    """Taylor coefficients of ``c`` at ``x = 1`` up to ``order`` (vectors over unknowns)."""
    return _c_taylor(ks, polys, bs, L, 1.0, order, C)


def _series_mul(a, b, n):
    out = np.zeros(n + 1)
    for i in range(n + 1):
        out[i:] += a[i] * b[: n + 1 - i]
    return out


def finite_taylor_at_one(probs, delta, ks, polys, bs, hpoly, L, C):
    """Affine maps ``u -> G^(i)(1)/i!`` for every ``i < delta - 1``.

    Returns ``(lin, const)`` with ``g_i = lin[i] @ u + const[i]``.
    """
    I = int(math.ceil(delta - 1.0)) - 1  # largest i with i < delta - 1
    order = I + 1
    cT = _c_taylor_at_one(ks, polys, bs, L, order, C)
    hT = _poly_taylor(hpoly, 1.0, order, C)
    BT = _series_mul(hT, np.array([1.0] * (order + 1)), order)  # phi(1+t) = 1/(1-t)
    D1 = np.array([0.0] + [1.0] * order)
    lin = np.zeros((I + 1, L))
    const = np.zeros(I + 1)
    const[0] = 1.0
    powers = [np.eye(1, order + 1, 0)[0]]
    for i in range(1, order + 1):
        powers.append(_series_mul(powers[-1], D1, order))
    coef = [_series_mul(BT, powers[i], order) for i in range(order + 1)]
    for m in range(1, I + 1):
        num_lin = cT[m + 1].copy()
        num_const = 0.0
        for i in range(m):
            num_lin += lin[i] * coef[i][m + 1]
            num_const += const[i] * coef[i][m + 1]
        denom = coef[m][m + 1]  # = m + 1 - delta
        lin[m] = -num_lin / denom
        const[m] = -num_const / denom
    return lin, const


@dataclass
class BoundarySolution:
    masses: np.ndarray  # pi_0 .. pi_{L-1}
    mean: float  # E[Z] (inf when delta <= 2)
    mean_error: float
    mass_error: float
    residual: float
    n_orbit: int


def _correction_exponents(delta: float, J: int, count: int = 4) -> list[float]:
    """Powers of ``1/n`` expected in the transported conditions."""
    cands = {float(i) for i in range(1, count + 1)}
    cands |= {delta - 1.0 + i for i in range(count)}
    for m in range(1, J + 1):
        if 2 * m + 1 < delta:
            cands |= {delta - 1.0 - 2 * m + i for i in range(count)}
    return sorted(c for c in cands if c > 1e-9)[:count]


def _window_fits(values: np.ndarray, n: np.ndarray, exps: list[float]) -> np.ndarray:
    """Intercepts of ``v(n) = v_inf + sum_a c_a n^-a`` fitted on sliding windows."""
    k = len(exps) + 1
    e = 1.0 / (n + 1.0)
    fits = []
    for end in range(k, len(n) + 1):
        X = np.column_stack([np.ones(k)] + [e[end - k : end] ** a for a in exps])
        fits.append(np.linalg.solve(X, values[end - k : end]))
    return np.array([f[0] for f in fits])


def _best(fits: np.ndarray) -> tuple[np.ndarray, float]:
    """Pick the window whose fit moved least from the previous one."""
    diffs = np.abs(np.diff(fits, axis=0))
    flat = diffs.reshape(diffs.shape[0], -1).max(axis=1)
    i = int(np.argmin(flat))
    return fits[i + 1], float(flat[i])


def solve_boundary(probs, delta: float, n0: int = 32, doublings: int = 14) -> BoundarySolution:
    probs = np.asarray(probs, dtype=float)
    M = probs.shape[0]
    L = M - 1
    if L < 2 or delta <= 2:
        raise ValueError("boundary solve needs drift above 2 (hence at least three cookies)")
    J = L - 1
    ks, polys, bs, hpoly = _c_terms(probs)
    C = _binom_table(M + 2 * (J + 2) + int(bs.max()) + 4)
    checkpoints = np.array([n0 * 2 ** i for i in range(doublings + 1)], dtype=np.int64)
    rec_a, rec_lp, rec_x = _orbit(ks, polys, bs, hpoly, L, J, checkpoints, C)
    lin, const = finite_taylor_at_one(probs, delta, ks, polys, bs, hpoly, L, C)
    I = lin.shape[0] - 1

    sols = []
    for c in range(len(checkpoints)):
        x = rec_x[c]
        A = np.zeros((L, L))
        b = np.zeros(L)
        for m in range(J + 1):
            # analytic part of G^(m)/m! at x from the expansion at 1
            an_lin = np.zeros(L)
            an_const = 0.0
            for i in range(m, I + 1):
                w = math.comb(i, m) * (x - 1.0) ** (i - m)
                an_lin += w * lin[i]
                an_const += w * const[i]
            row = rec_a[c, m] - an_lin
            rhs = an_const
            if 2 * m + 1 > delta:
                scale = math.exp(rec_lp[c, m])
                row, rhs = row * scale, rhs * scale
            A[m] = row
            b[m] = rhs
        sols.append(np.linalg.solve(A, b))
    sols = np.array(sols)
    means = sols @ lin[1] + const[1]
    exps = _correction_exponents(delta, J)
    n = checkpoints.astype(float)
    mean, mean_err = _best(_window_fits(means, n, exps))
    masses, mass_err = _best(np.array([_window_fits(sols[:, k], n, exps) for k in range(L)]).T)
    # first-moment identity as an independent residual check
    ident = np.array([_ident_coeff(probs, k, delta) for k in range(L)])
    resid = float(abs(ident @ masses - (delta - 1.0)))
    return BoundarySolution(np.asarray(masses), float(mean), mean_err, mass_err, resid, int(checkpoints[-1]))


def _ident_coeff(probs, k, delta):
    return stopping_mean(probs, k + 1) - (k + 1) + delta
