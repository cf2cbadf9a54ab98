"""Discrete-time games ``G_n``: value iteration for ``V_n`` and simulated matches.

Stage ``q`` of ``G_n`` lasts ``1/n`` time units and carries the weight
``lambda_n (1 - lambda_n)^q`` with ``lambda_n = 1 - exp(-r/n)``.  Within a
stage the public sees the informed player's action and the increment of ``Y``
before the chain moves, and beliefs are updated in that order.

Everything here is restricted to two-state models, where a belief is the
scalar ``p`` = probability of state 0 and ``V_n`` lives on the same grid as the
limit value.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .chain_filter import filter_update, simulate_paths, transition_matrix
from .hjb import Grid, ValueField, bilinear, constraint_active
from .model import GameModel
from .rng import path_rng
from .stage_game import solve_matrix_game, u_surface

__all__ = [
    "gauss_hermite_nodes", "stage_weight", "posterior_after_stage", "behaviour_grid",
    "ShapleyOperator", "shapley_operator", "value_iteration_vn",
    "StrategyTable", "SplittingPolicy", "build_informed_strategy", "non_revealing_policy",
    "BayesOpponent", "MatchResult", "simulate_match", "merge_results", "write_transcripts_csv",
]

log = logging.getLogger(__name__)

GH_ORDERS = (3, 5, 7, 9)
HORIZON_MASS = 1e-3
_CHUNK_FLOATS = 2_000_000
_CACHE_FLOATS = 30_000_000


def gauss_hermite_nodes(mq: int):
    """Nodes and weights of the ``mq``-point rule for the standard normal (weights sum to 1)."""
    if mq not in GH_ORDERS:
        raise ValueError(f"unsupported quadrature order {mq}; choose from {GH_ORDERS}")
    x, w = hermegauss(mq)
    return x, w / w.sum()


def stage_weight(m: GameModel, n: int) -> float:
    """``lambda_n = 1 - exp(-r/n)``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return float(-np.expm1(-m.r / n))


def _check_rule(sigma_rule, K: int, nI: int) -> np.ndarray:
    s = np.asarray(sigma_rule, dtype=float)
    if s.shape != (K, nI):
        raise ValueError(f"behaviour rule must have shape ({K}, {nI})")
    if s.min() < -1e-12 or np.abs(s.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValueError("each row of the behaviour rule must be a probability vector")
    return np.maximum(s, 0.0)


def _after_action(p, sig_obs):
    joint = p * sig_obs
    total = joint.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0):
        raise ValueError("observed action has probability zero under the belief")
    return joint / total


def posterior_after_stage(m: GameModel, p, y: float, i: int, dy: float, dt: float, sigma_rule):
    """Public belief after one stage in which action ``i`` and increment ``dy`` were observed.

    ``sigma_rule[k, i]`` is the probability that the informed player plays ``i`` in state ``k``.
    """
    s = _check_rule(sigma_rule, m.K, m.nI)
    if not 0 <= i < m.nI:
        raise ValueError("action index out of range")
    post = _after_action(np.asarray(p, dtype=float), s[:, i])
    return filter_update(m, post, y, dy, dt)


def _simplex_lattice(nI: int, ns: int) -> np.ndarray:
    h = ns - 1
    pts = [c for c in itertools.product(range(ns), repeat=nI - 1) if sum(c) <= h]
    a = np.array(pts, dtype=float).reshape(len(pts), nI - 1) / h
    return np.column_stack([a, 1.0 - a.sum(axis=1)])


def behaviour_grid(K: int, nI: int, ns: int) -> np.ndarray:
    """All behaviour rules with every ``sigma(.|k)`` on the lattice of step ``1/(ns-1)``; shape ``(S, K, nI)``."""
    if ns < 2:
        raise ValueError("ns must be at least 2")
    lat = _simplex_lattice(nI, ns)
    combos = itertools.product(range(len(lat)), repeat=K)
    return np.array([[lat[c] for c in combo] for combo in combos])


class ShapleyOperator:
    """One application of the stage recursion on a two-state grid.

    For every node the informed player's behaviour rule is searched over
    :func:`behaviour_grid`, plus local candidates around the best lattice point
    once :meth:`freeze_refinement` has been called;
    the uninformed player's reply is the worst pure action.  The ``Y`` increment
    is integrated by Gauss-Hermite with the posterior-mean drift.
    """

    def __init__(self, m: GameModel, n: int, grid: Grid, mq: int = 5, ns: int = 21,
                 lam: float | None = None):
        if m.K != 2:
            raise ValueError("the V_n operator supports two-state models only")
        if m.nI > 3 or m.nJ > 3:
            raise ValueError("the V_n operator supports at most 3 actions per player")
        self.m, self.n, self.grid = m, n, grid
        self.lam = stage_weight(m, n) if lam is None else float(lam)
        self.dt = 1.0 / n
        self.gx, self.gw = gauss_hermite_nodes(mq)
        self.ns = ns
        self._extra = None
        self.combos = behaviour_grid(m.K, m.nI, ns)
        self.P = transition_matrix(m.R, self.dt)

        P, Y = np.meshgrid(grid.p_nodes, grid.y_nodes, indexing="ij")
        self.p = np.stack([P.ravel(), 1.0 - P.ravel()], axis=-1)
        self.y = Y.ravel()
        self.g = m.payoff(self.y)
        self.b = m.drift(self.y)
        self.sig = np.broadcast_to(m.vol(self.y), self.y.shape).astype(float)

        per_node = len(self.combos) * m.nI * len(self.gx) * m.K
        self.chunk = max(1, _CHUNK_FLOATS // per_node)
        self._parts = None
        if per_node * len(self.y) * 3 <= _CACHE_FLOATS:
            self._parts = [self._evaluate(sl, self.combos[None]) for sl in self._slices()]

    def _slices(self):
        N = len(self.y)
        return [slice(a, min(a + self.chunk, N)) for a in range(0, N, self.chunk)]

    def _evaluate(self, sl, sigma):
        """Stage payoff and continuation sample points for rules ``sigma`` (shape ``(Nc|1, S, K, I)``)."""
        p, y, g, b, sig = self.p[sl], self.y[sl], self.g[sl], self.b[sl], self.sig[sl]
        dt, lam = self.dt, self.lam
        joint = p[:, None, :, None] * sigma                      # (Nc, S, K, I)
        prob_i = joint.sum(axis=2)                               # (Nc, S, I)
        stage = lam * np.einsum("nski,nkij->nsj", joint, g).min(axis=-1)
        safe = np.where(prob_i > 0.0, prob_i, 1.0)
        post = joint / safe[:, :, None, :]
        post = np.where(prob_i[:, :, None, :] > 0.0, post, 0.5)
        post = np.moveaxis(post, 2, 3)                           # (Nc, S, I, K)
        bbar = np.einsum("nsik,nk->nsi", post, b)
        sd = sig * np.sqrt(dt)
        dy = bbar[..., None] * dt + sd[:, None, None, None] * self.gx   # (Nc, S, I, L)
        resid = dy[..., None] - (b * dt)[:, None, None, None, :]
        ll = -resid ** 2 / (2.0 * (sd ** 2)[:, None, None, None, None])
        with np.errstate(divide="ignore"):
            logw = np.log(post)[:, :, :, None, :] + ll
        logw -= logw.max(axis=-1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=-1, keepdims=True)
        pq = (w @ self.P)[..., 0]
        yq = np.clip(y[:, None, None, None] + dy, self.grid.y_nodes[0], self.grid.y_nodes[-1])
        weight = (1.0 - lam) * prob_i[..., None] * self.gw
        return stage, pq, yq, weight

    def _values(self, W, parts):
        stage, pq, yq, weight = parts
        cont = (weight * bilinear(W, self.grid.p_nodes, self.grid.y_nodes, pq, yq)).sum(axis=(2, 3))
        return stage + cont

    def _local_rules(self, best):
        """Refinement candidates around ``best`` (shape ``(Nc, K, I)``)."""
        K, nI = self.m.K, self.m.nI
        h = 1.0 / (self.ns - 1)
        nfree = K * (nI - 1)
        steps = np.array([-0.5, -0.25, 0.0, 0.25, 0.5] if nfree <= 2 else [-0.5, 0.0, 0.5]) * h
        offs = np.array(list(itertools.product(steps, repeat=nfree))).reshape(-1, K, nI - 1)
        free = best[:, None, :, :nI - 1] + offs[None]
        free = np.clip(free, 0.0, 1.0)
        tot = free.sum(axis=-1, keepdims=True)
        free = free / np.maximum(tot, 1.0)
        return np.concatenate([free, 1.0 - free.sum(axis=-1, keepdims=True)], axis=-1)

    def _coarse(self, W, idx, sl):
        parts = self._parts[idx] if self._parts is not None else self._evaluate(sl, self.combos[None])
        vals = self._values(W, parts)
        k = vals.argmax(axis=1)
        return vals[np.arange(len(k)), k], self.combos[k]

    def freeze_refinement(self, W) -> None:
        """Fix the local candidates around the best lattice rules for ``W``.

        The candidate set must not move with the iterate, otherwise the map is
        no longer a contraction.
        """
        W = np.asarray(W, dtype=float)
        self._extra = []
        for idx, sl in enumerate(self._slices()):
            _, best = self._coarse(W, idx, sl)
            cand = self._local_rules(best)
            self._extra.append((cand, self._evaluate(sl, cand)))

    def apply(self, W: np.ndarray, return_rules: bool = False):
        W = np.asarray(W, dtype=float)
        extra = getattr(self, "_extra", None)
        out = np.empty(len(self.y))
        rules = np.empty((len(self.y), self.m.K, self.m.nI))
        for idx, sl in enumerate(self._slices()):
            best_val, best = self._coarse(W, idx, sl)
            if extra is not None:
                cand, parts = extra[idx]
                rv = self._values(W, parts)
                kr = rv.argmax(axis=1)
                rbest = rv[np.arange(len(kr)), kr]
                better = rbest > best_val
                best_val = np.where(better, rbest, best_val)
                best = np.where(better[:, None, None], cand[np.arange(len(kr)), kr], best)
            out[sl] = best_val
            rules[sl] = best
        out = out.reshape(self.grid.shape)
        if return_rules:
            return out, rules.reshape(self.grid.shape + (self.m.K, self.m.nI))
        return out

    __call__ = apply


def shapley_operator(m: GameModel, n: int, grid: Grid, W, mq: int = 5, ns: int = 21,
                     refine: bool = True) -> ValueField:
    """Apply the stage recursion once to ``W`` (a :class:`ValueField` or an array on ``grid``)."""
    w = W.v if isinstance(W, ValueField) else np.asarray(W, dtype=float)
    op = ShapleyOperator(m, n, grid, mq, ns)
    if refine:
        op.freeze_refinement(w)
    v = op(w)
    return ValueField(v=v, grid=grid, iterations=1, dt=1.0 / n, extra={"n": n})


def value_iteration_vn(m: GameModel, n: int, grid: Grid, tol: float = 1e-6,
                       max_iter: int | None = None, mq: int = 5, ns: int = 21,
                       refine: bool = True, w0=None) -> ValueField:
    """Fixed point of the stage recursion, iterated from ``u`` until the change is at most ``tol * lambda_n``.

    With contraction factor ``1 - lambda_n`` the default ``max_iter`` (per phase) is
    enough to reach the tolerance from any start within the payoff range.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = ShapleyOperator(m, n, grid, mq, ns)
    lam = op.lam
    W = u_surface(m, grid.p_nodes, grid.y_nodes) if w0 is None else np.array(w0, dtype=float)
    spread = float(np.abs(m.payoff(grid.y_nodes)).max()) * 2.0 + 1.0
    if max_iter is None:
        need = np.log(tol * lam / spread) / np.log1p(-lam) if lam < 1 else 1
        max_iter = int(np.ceil(need)) + 10
    history = []
    change = float("inf")
    it = 0
    # lattice search to convergence, then once more with the frozen local candidates
    for phase in ((0, 1) if refine else (0,)):
        if phase:
            op.freeze_refinement(W)
        budget = it + max_iter
        while it < budget:
            new = op(W)
            change = float(np.abs(new - W).max())
            W = new
            it += 1
            history.append((it, change))
            if change <= tol * lam:
                break
    converged = change <= tol * lam
    log.info("V_%d: %d iterations, final change %.3g", n, it, change)
    return ValueField(v=W, grid=grid, iterations=it, final_change=change, dt=1.0 / n,
                      converged=converged, history=history, extra={"n": n, "mq": mq, "ns": ns})


# -- strategies ---------------------------------------------------------------


class StrategyTable:
    """Optimal strategies of the non-revealing game, cached on the belief and observation."""

    def __init__(self, m: GameModel):
        if m.K != 2:
            raise ValueError("strategy tables are implemented for two-state models")
        self.m = m
        self._y_free = m.payoff_is_y_free
        self._cache: dict = {}

    def _key(self, p: float, y: float):
        return (p, 0.0 if self._y_free else y)

    def solve(self, p: float, y: float):
        key = self._key(float(p), float(y))
        hit = self._cache.get(key)
        if hit is None:
            g = self.m.payoff(key[1])
            A = key[0] * g[0] + (1.0 - key[0]) * g[1]
            _, x, t = solve_matrix_game(A)
            hit = (x, t)
            if len(self._cache) > 500_000:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def _batch(self, p, y, which: int):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        y = np.broadcast_to(np.asarray(y, dtype=float), p.shape)
        if self._y_free:
            y = np.zeros_like(p)
        keys, inv = np.unique(np.stack([p, y], axis=1), axis=0, return_inverse=True)
        rows = np.array([self.solve(a, b)[which] for a, b in keys])
        return rows[np.ravel(inv)]

    def row(self, p, y) -> np.ndarray:
        """``sigma*(p, y)`` for arrays of beliefs; shape ``(N, nI)``."""
        return self._batch(p, y, 0)

    def column(self, p, y) -> np.ndarray:
        """``tau*(p, y)``; shape ``(N, nJ)``."""
        return self._batch(p, y, 1)


@dataclass
class SplittingPolicy:
    """Informed player's rule: split the public belief to chord end points, then play ``sigma*``.

    ``chord[i, j]`` marks nodes where the value lies on a chord of its concave
    envelope; ``lo``/``hi`` hold the end-point node indices of that chord.
    """

    model: GameModel
    grid: Grid
    chord: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    table: StrategyTable = field(repr=False, default=None)

    def __post_init__(self):
        if self.table is None:
            self.table = StrategyTable(self.model)

    @property
    def revealing(self) -> bool:
        return bool(self.chord.any())

    def split(self, p, y):
        """End points ``(p_lo, p_hi)`` and the weight of ``p_hi``; inactive splits return ``p`` twice."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        y = np.broadcast_to(np.asarray(y, dtype=float), p.shape)
        g = self.grid
        jy = np.clip(np.rint((y - g.y_nodes[0]) / g.dy).astype(int), 0, g.shape[1] - 1)
        ip = np.clip(np.floor(p / g.dp).astype(int), 0, g.shape[0] - 2)
        left = self.chord[ip, jy]
        right = self.chord[ip + 1, jy]
        src = np.where(left, ip, ip + 1)
        on = left | right
        a = g.p_nodes[self.lo[src, jy]]
        b = g.p_nodes[self.hi[src, jy]]
        on &= (p > a) & (p < b)
        p_lo = np.where(on, a, p)
        p_hi = np.where(on, b, p)
        w_hi = np.where(on, (p - p_lo) / np.where(on, p_hi - p_lo, 1.0), 0.0)
        return p_lo, p_hi, w_hi, on

    def reveal_probs(self, p, p_hi, w_hi):
        """``P(draw p_hi | k)`` for both states; shape ``(N, 2)``."""
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            q0 = np.where(p > 0, w_hi * p_hi / np.where(p > 0, p, 1.0), 0.0)
            q1 = np.where(p < 1, w_hi * (1 - p_hi) / np.where(p < 1, 1 - p, 1.0), 0.0)
        return np.clip(np.stack([q0, q1], axis=-1), 0.0, 1.0)

    def behaviour(self, p, y) -> np.ndarray:
        """Aggregated rule ``sigma(i | k)`` seen by someone who does not observe the draw; ``(N, K, nI)``."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        y = np.broadcast_to(np.asarray(y, dtype=float), p.shape)
        p_lo, p_hi, w_hi, _ = self.split(p, y)
        s_lo = self.table.row(p_lo, y)
        s_hi = self.table.row(p_hi, y)
        q = self.reveal_probs(p, p_hi, w_hi)
        return (1.0 - q)[..., None] * s_lo[:, None, :] + q[..., None] * s_hi[:, None, :]

    def node_rule(self, ip: int, jy: int) -> np.ndarray:
        return self.behaviour(self.grid.p_nodes[ip], self.grid.y_nodes[jy])[0]


def _chord_ends(chord: np.ndarray):
    n_p, n_y = chord.shape
    lo = np.tile(np.arange(n_p)[:, None], (1, n_y))
    hi = lo.copy()
    for j in range(n_y):
        i = 0
        while i < n_p:
            if not chord[i, j]:
                i += 1
                continue
            start = i
            while i < n_p and chord[i, j]:
                i += 1
            lo[start:i, j] = max(start - 1, 0)
            hi[start:i, j] = min(i, n_p - 1)
    return lo, hi


def build_informed_strategy(m: GameModel, V: ValueField) -> SplittingPolicy:
    """Splitting policy read off the chords of a converged limit value."""
    if not V.converged:
        raise ValueError("value field is not flagged as converged")
    chord = constraint_active(m, V)
    chord[0, :] = False
    chord[-1, :] = False
    lo, hi = _chord_ends(chord)
    return SplittingPolicy(model=m, grid=V.grid, chord=chord, lo=lo, hi=hi)


def non_revealing_policy(m: GameModel, grid: Grid) -> SplittingPolicy:
    chord = np.zeros(grid.shape, dtype=bool)
    lo, hi = _chord_ends(chord)
    return SplittingPolicy(model=m, grid=grid, chord=chord, lo=lo, hi=hi)


@dataclass
class BayesOpponent:
    """Uninformed player: Bayes belief from public data, reply ``tau*`` at that belief.

    The belief update uses the informed player's aggregated rule, which is
    common knowledge.
    """

    model: GameModel
    policy: SplittingPolicy

    def reply(self, p, y) -> np.ndarray:
        return self.policy.table.column(p, y)

    def update(self, p, y, i, dy, dt: float):
        """Beliefs (batch, shape ``(N, K)``) after observing actions ``i`` and increments ``dy``."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        beh = self.policy.behaviour(p[:, 0], y)
        sig_obs = beh[np.arange(len(p)), :, np.asarray(i)]
        return filter_update(self.model, _after_action(p, sig_obs), y, dy, dt)


# -- matches ------------------------------------------------------------------


@dataclass
class MatchResult:
    estimate: float
    std_error: float
    num_paths: int
    n: int
    stages: int
    horizon: float
    truncation_budget: float
    martingale_lhs: float
    martingale_bound: float
    phat_trace: np.ndarray = field(repr=False)
    pi_trace: np.ndarray = field(repr=False)
    payoffs: np.ndarray = field(repr=False)
    transcripts: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "estimate": self.estimate, "std_error": self.std_error, "num_paths": self.num_paths,
            "n": self.n, "stages": self.stages, "horizon": self.horizon,
            "truncation_budget": self.truncation_budget,
            "martingale_lhs": self.martingale_lhs, "martingale_bound": self.martingale_bound,
        }


def _pick(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs, axis=1)
    return np.minimum((u[:, None] > cum).sum(axis=1), probs.shape[1] - 1)


def _decision_uniforms(seed: int, ids, stages: int) -> np.ndarray:
    out = np.empty((len(ids), stages, 3))
    for row, pid in enumerate(ids):
        out[row] = path_rng(seed, pid, stream=1).random((stages, 3))
    return out


def simulate_match(m: GameModel, pol: SplittingPolicy, opp: BayesOpponent, n: int, p0, y0: float,
                   T: float | None = None, num_paths: int = 1000, seed: int = 0,
                   first_path: int = 0, transcripts: int = 0) -> MatchResult:
    """Monte Carlo estimate of the ``G_n`` payoff when ``pol`` meets ``opp``.

    The discounted sum is cut after ``ceil(n T)`` stages; the last stage carries the
    whole remaining weight, so a constant game is reproduced exactly and the cut
    costs at most ``(max g - min g) (1 - lambda_n)^(stages - 1)``, reported as
    ``truncation_budget``.
    """
    if m.K != 2:
        raise ValueError("matches are implemented for two-state models")
    T = 7.0 / m.r if T is None else float(T)
    if np.exp(-m.r * T) > HORIZON_MASS:
        raise ValueError(f"horizon T={T:g} too short: exp(-rT) must be at most {HORIZON_MASS:g}")
    p0 = np.asarray(p0, dtype=float)
    lam = stage_weight(m, n)
    dt = 1.0 / n
    Q = int(np.ceil(n * T - 1e-9))
    weights = lam * (1.0 - lam) ** np.arange(Q)
    weights[-1] = (1.0 - lam) ** (Q - 1)

    ids = range(first_path, first_path + num_paths)
    _, x, y = simulate_paths(m, p0, y0, Q * dt, dt, num_paths, seed, first_path=first_path)
    U = _decision_uniforms(seed, ids, Q)
    rows = np.arange(num_paths)
    ph = np.tile(p0, (num_paths, 1))
    pay = np.zeros(num_paths)
    mart = np.zeros(num_paths)
    phat_trace = np.empty((Q, m.K))
    pi_trace = np.empty((Q, m.K))
    logs = []
    for q in range(Q):
        yq, k = y[:, q], x[:, q]
        p_lo, p_hi, w_hi, _ = pol.split(ph[:, 0], yq)
        s_lo = pol.table.row(p_lo, yq)
        s_hi = pol.table.row(p_hi, yq)
        qk = pol.reveal_probs(ph[:, 0], p_hi, w_hi)
        up = U[:, q, 0] < qk[rows, k]
        pi0 = np.where(up, p_hi, p_lo)
        i = _pick(np.where(up[:, None], s_hi, s_lo), U[:, q, 1])
        j = _pick(opp.reply(ph[:, 0], yq), U[:, q, 2])
        pay += weights[q] * m.payoff(yq)[rows, k, i, j]

        sig_obs = (1.0 - qk) * s_lo[rows, i][:, None] + qk * s_hi[rows, i][:, None]
        p_after = _after_action(ph, sig_obs)
        disc = lam * (1.0 - lam) ** q
        mart += disc * np.abs(p_after - ph).sum(axis=1)
        phat_trace[q] = ph.mean(axis=0)
        pi_trace[q] = [pi0.mean(), 1.0 - pi0.mean()]
        if transcripts:
            cut = slice(0, transcripts)
            logs.append(np.column_stack([np.full(num_paths, q), np.full(num_paths, q * dt), k, yq, i, j,
                                         ph[:, 0], ph[:, 1], pi0, 1.0 - pi0])[cut])
        ph = filter_update(m, p_after, yq, y[:, q + 1] - yq, dt)

    g_all = m.payoff(np.linspace(m.y_min, m.y_max, 201))
    budget = float((g_all.max() - g_all.min()) * (1.0 - lam) ** (Q - 1))
    C = 2.0 * float(np.abs(np.diag(m.R)).max(initial=0.0))
    se = float(pay.std(ddof=1) / np.sqrt(num_paths)) if num_paths > 1 else 0.0
    trans = []
    if transcripts:
        stacked = np.stack(logs, axis=1)
        trans = [stacked[r] for r in range(stacked.shape[0])]
    return MatchResult(
        estimate=float(pay.mean()), std_error=se, num_paths=num_paths, n=n, stages=Q,
        horizon=Q * dt, truncation_budget=budget, martingale_lhs=float(mart.mean()),
        martingale_bound=float(m.K * np.sqrt(lam + 2.0 * C / n)),
        phat_trace=phat_trace, pi_trace=pi_trace, payoffs=pay, transcripts=trans,
    )


def merge_results(parts) -> MatchResult:
    """Combine matches over consecutive path blocks (in the given order)."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    pay = np.concatenate([r.payoffs for r in parts])
    N = len(pay)
    share = np.array([r.num_paths for r in parts], dtype=float) / N
    se = float(pay.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
    return MatchResult(
        estimate=float(pay.mean()), std_error=se, num_paths=N, n=first.n, stages=first.stages,
        horizon=first.horizon, truncation_budget=first.truncation_budget,
        martingale_lhs=float(sum(w * r.martingale_lhs for w, r in zip(share, parts))),
        martingale_bound=first.martingale_bound,
        phat_trace=sum(w * r.phat_trace for w, r in zip(share, parts)),
        pi_trace=sum(w * r.pi_trace for w, r in zip(share, parts)),
        payoffs=pay, transcripts=[t for r in parts for t in r.transcripts],
    )


def write_transcripts_csv(result: MatchResult, f, first_path: int = 0) -> None:
    """One block per path: ``path_id,q,t,x,y,i,j,phat_0,phat_1,pi_0,pi_1``."""
    f.write("path_id,q,t,x,y,i,j,phat_0,phat_1,pi_0,pi_1\n")
    for r, tr in enumerate(result.transcripts):
        for row in tr:
            q, t, x, yv, i, j, a, b, c, d = row
            f.write(f"{first_path + r},{int(q)},{t!r},{int(x)},{yv!r},{int(i)},{int(j)},"
                    f"{a!r},{b!r},{c!r},{d!r}\n")
