"""Independent reference computations used by the test-suite.

Nothing here imports the code under test beyond plain data access; each
function reaches its answer by a different route, usually brute force or a
closed form.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import expm
from scipy.optimize import linprog


def chord_envelope(values, x=None):
    """Concave envelope by brute force over every chord (O(N^3))."""
    v = np.asarray(values, dtype=float)
    n = v.size
    x = np.linspace(0.0, 1.0, n) if x is None else np.asarray(x, dtype=float)
    out = v.copy()
    for a in range(n):
        for b in range(a + 1, n):
            for i in range(a, b + 1):
                t = (x[i] - x[a]) / (x[b] - x[a])
                out[i] = max(out[i], (1 - t) * v[a] + t * v[b])
    return out


def chord_endpoints(values, i, x=None):
    """End points of the widest envelope chord through node ``i`` (brute force)."""
    v = np.asarray(values, dtype=float)
    env = chord_envelope(v, x)
    n = v.size
    best = (i, i)
    for a in range(0, i + 1):
        for b in range(i, n):
            if b - a <= best[1] - best[0]:
                continue
            if abs(env[a] - v[a]) > 1e-12 or abs(env[b] - v[b]) > 1e-12:
                continue
            xs = np.linspace(0.0, 1.0, n) if x is None else np.asarray(x, dtype=float)
            t = (xs[a:b + 1] - xs[a]) / (xs[b] - xs[a])
            line = (1 - t) * v[a] + t * v[b]
            if np.allclose(line, env[a:b + 1], atol=1e-12):
                best = (a, b)
    return best


def game_value_lp(A):
    """Value and row strategy of ``A`` via scipy's HiGHS on the row player's LP."""
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    # variables (x_1..x_m, v): maximize v s.t. A^T x >= v, sum x = 1, x >= 0
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A.T, np.ones((n, 1))])
    b_ub = np.zeros(n)
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    assert res.status == 0
    return float(res.x[-1]), res.x[:m]


def game_2x2(A):
    """Closed form for 2x2 games: saddle point if any, else the mixed formula."""
    (a, b), (c, d) = np.asarray(A, dtype=float)
    lower = max(min(a, b), min(c, d))
    upper = min(max(a, c), max(b, d))
    if lower == upper:
        return lower, None, None
    den = a + d - b - c
    x = (d - c) / den
    y = (d - b) / den
    return (a * d - b * c) / den, np.array([x, 1 - x]), np.array([y, 1 - y])


def normal_moment(k: int) -> float:
    return 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2))) if k else 1.0


def two_point_bayes(prior, lik):
    w = np.asarray(prior, dtype=float) * np.asarray(lik, dtype=float)
    return w / w.sum()


def gaussian_density(x, mean, var):
    return math.exp(-(x - mean) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)


def chain_marginal(R, p, t):
    return expm(np.asarray(R, dtype=float).T * t) @ np.asarray(p, dtype=float)


def lambda_max_bruteforce(p, S, samples=20000, seed=0):
    """Largest Rayleigh quotient over random tangent directions (support-restricted, sum zero)."""
    p = np.asarray(p, dtype=float)
    S = np.asarray(S, dtype=float)
    supp = np.flatnonzero(p > 1e-12)
    if supp.size <= 1:
        return -math.inf
    rng = np.random.default_rng(seed)
    best = -math.inf
    for _ in range(samples):
        x = np.zeros(p.size)
        z = rng.standard_normal(supp.size)
        x[supp] = z - z.mean()
        best = max(best, x @ S @ x / (x @ x))
    return best


def noinfo_u(y):
    """u for the noinfo preset: value of [[1 + e^{-y^2}, -1], [-1, 1]]."""
    e = np.exp(-np.asarray(y, dtype=float) ** 2)
    return e / (4.0 + e)


def feynman_kac_noinfo(y0, r=1.0, T=7.0, dt=1e-3, paths=100_000, seed=12345, chunk=25_000):
    """MC estimate and SE of E int_0^T r e^{-rt} u(Y_t) dt for dY = -0.5 tanh(Y) dt + dW."""
    rng = np.random.default_rng(seed)
    steps = int(round(T / dt))
    t = dt * np.arange(steps + 1)
    # exact integral of r e^{-rt} over each step, split half/half (trapezoid in u)
    mass = np.exp(-r * t[:-1]) - np.exp(-r * t[1:])
    acc = []
    for start in range(0, paths, chunk):
        n = min(chunk, paths - start)
        y = np.full(n, float(y0))
        total = np.zeros(n)
        u_prev = noinfo_u(y)
        for s in range(steps):
            y = y - 0.5 * np.tanh(y) * dt + math.sqrt(dt) * rng.standard_normal(n)
            u_next = noinfo_u(y)
            total += mass[s] * 0.5 * (u_prev + u_next)
            u_prev = u_next
        acc.append(total)
    vals = np.concatenate(acc)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(paths))


def simplex_points(K, steps):
    for c in itertools.product(range(steps + 1), repeat=K - 1):
        if sum(c) <= steps:
            yield np.array(list(c) + [steps - sum(c)], dtype=float) / steps
