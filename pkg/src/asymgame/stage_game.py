"""Matrix games and the non-revealing value ``u(p, y)``, plus the concavity tools used in ``p``."""
from __future__ import annotations

import numpy as np

from .model import GameModel

__all__ = [
    "as_belief", "stage_matrix", "solve_matrix_game", "u_value", "u_surface",
    "concave_envelope_1d", "upper_hull", "lambda_max",
]

BELIEF_NEG_TOL = 1e-12
BELIEF_SUM_TOL = 1e-10
_PIVOT_TOL = 1e-12


def as_belief(p) -> np.ndarray:
    """Validate a point of the simplex; tiny negatives are clipped and the vector renormalized."""
    p = np.array(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("belief must be a non-empty 1-D vector")
    if p.min() < -BELIEF_NEG_TOL:
        raise ValueError(f"belief has a negative entry {p.min()!r}")
    if abs(p.sum() - 1.0) > BELIEF_SUM_TOL:
        raise ValueError(f"belief sums to {p.sum()!r}, not 1")
    p = np.maximum(p, 0.0)
    return p / p.sum()


def stage_matrix(m: GameModel, p, y: float) -> np.ndarray:
    """Averaged payoff ``A[i, j] = sum_k p(k) g(k, y, i, j)``."""
    p = as_belief(p)
    if p.size != m.K:
        raise ValueError(f"belief has {p.size} entries, model has K={m.K}")
    return np.tensordot(p, m.payoff(float(y)), axes=1)


def solve_matrix_game(A):
    """Value and optimal mixed strategies of the zero-sum game ``A`` (row player maximizes).

    Dense tableau simplex with Bland's rule on the column player's LP
    ``max 1'w  s.t.  A' w <= 1, w >= 0`` where ``A' = A - min(A) + 1``.  The row
    player's strategy is read off the slack reduced costs.

    Returns
    -------
    value : float
    x : ndarray, shape (nI,)
        Optimal strategy of the row player.
    yJ : ndarray, shape (nJ,)
        Optimal strategy of the column player.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or 0 in A.shape:
        raise ValueError("payoff matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(A)):
        raise ValueError("payoff matrix has non-finite entries")
    m, n = A.shape
    shift = A.min() - 1.0
    Ap = A - shift

    # rows 0..m-1: constraints; row m: objective (reduced costs, maximize)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = Ap
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = 1.0
    T[m, :n] = -1.0
    basis = list(range(n, n + m))

    while True:
        cand = np.flatnonzero(T[m, :-1] < -_PIVOT_TOL)
        if cand.size == 0:
            break
        col = int(cand[0])
        column = T[:m, col]
        pos = np.flatnonzero(column > _PIVOT_TOL)
        ratios = T[pos, -1] / column[pos]
        best = ratios.min()
        ties = pos[ratios <= best + _PIVOT_TOL * max(1.0, abs(best))]
        row = int(min(ties, key=lambda i: basis[i]))
        T[row] /= T[row, col]
        for i in range(m + 1):
            if i != row and T[i, col] != 0.0:
                T[i] -= T[i, col] * T[row]
        basis[row] = col

    w = np.zeros(n + m)
    for i, var in enumerate(basis):
        w[var] = T[i, -1]
    total = T[m, -1]
    yJ = np.maximum(w[:n], 0.0)
    yJ /= yJ.sum()
    x = np.maximum(T[m, n:n + m], 0.0)
    x /= x.sum()
    value = 1.0 / total + shift
    return float(value), x, yJ


def u_value(m: GameModel, p, y: float) -> float:
    """Value of the non-revealing one-stage game at belief ``p`` and observation ``y``."""
    return solve_matrix_game(stage_matrix(m, p, y))[0]


def u_surface(m: GameModel, p_nodes, y_nodes) -> np.ndarray:
    """``u`` on a ``(p, y)`` grid for two-state models; ``p`` is the probability of state 0."""
    if m.K != 2:
        raise ValueError("u_surface needs a two-state model")
    p_nodes = np.asarray(p_nodes, dtype=float)
    y_nodes = np.asarray(y_nodes, dtype=float)
    out = np.empty((p_nodes.size, y_nodes.size))
    g = m.payoff(y_nodes)
    cols = [0] if m.payoff_is_y_free else range(y_nodes.size)
    for jy in cols:
        for ip, p in enumerate(p_nodes):
            A = p * g[jy, 0] + (1.0 - p) * g[jy, 1]
            out[ip, jy] = solve_matrix_game(A)[0]
    if m.payoff_is_y_free:
        out[:] = out[:, :1]
    return out


def upper_hull(x, v) -> np.ndarray:
    """Indices of the upper convex hull vertices of ``(x, v)``; ``x`` increasing (monotone chain)."""
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (x[a] - x[o]) * (v[i] - v[o]) - (v[a] - v[o]) * (x[i] - x[o])
            if cross >= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull, dtype=int)


def concave_envelope_1d(values, x=None) -> np.ndarray:
    """Smallest concave function on the grid dominating ``values``.

    ``x`` defaults to the uniform grid on [0, 1].  Endpoint values are kept.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("need at least two grid values")
    x = np.linspace(0.0, 1.0, v.size) if x is None else np.asarray(x, dtype=float)
    h = upper_hull(x, v)
    env = np.interp(x, x[h], v[h])
    return np.maximum(env, v)


def lambda_max(p, S) -> float:
    """Largest Rayleigh quotient of symmetric ``S`` over the tangent cone of the simplex at ``p``.

    Returns ``-inf`` at vertices, where the tangent space is ``{0}``.
    """
    p = np.asarray(p, dtype=float)
    S = np.asarray(S, dtype=float)
    if S.shape != (p.size, p.size):
        raise ValueError("S must be K x K")
    if np.abs(S - S.T).max(initial=0.0) > 1e-10:
        raise ValueError("S is not symmetric")
    support = np.flatnonzero(p > BELIEF_NEG_TOL)
    d = support.size
    if d <= 1:
        return float("-inf")
    # orthonormal basis of {x : sum x = 0} on the support
    q, _ = np.linalg.qr(np.eye(d) - 1.0 / d)
    basis = q[:, : d - 1]
    sub = S[np.ix_(support, support)]
    sub = 0.5 * (sub + sub.T)
    return float(np.linalg.eigvalsh(basis.T @ sub @ basis).max())
