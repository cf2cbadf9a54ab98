"""Simulation of the hidden chain with its observation, plus the belief filter ``chi``.

The filter is advanced by a Bayes reweight with the Gaussian likelihood of the
observed increment, followed by the exact chain transition ``exp(dt R)``.  That
keeps every belief on the simplex by construction.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .model import GameModel
from .rng import path_rng

__all__ = [
    "PathBundle", "FilterUnderflow", "drift_c", "diff_kappa", "transition_matrix",
    "markov_marginal", "simulate_joint_path", "simulate_paths", "filter_update",
    "run_filter", "write_paths_csv",
]

POISSON_TAIL = 1e-13
_MAX_RATE_STEP = 10.0


class FilterUnderflow(FloatingPointError):
    """All likelihood weights vanished: dt too large or the model is misconfigured."""


def _check_vol(m: GameModel, sig):
    if np.any(sig < m.eps):
        bad = np.min(sig)
        raise ValueError(f"volatility {bad:.6g} below floor eps={m.eps:g}")


def drift_c(m: GameModel, p, y):
    """Drift of the pair (belief, observation): ``(R^T p, <p, b(y)>)``.

    Broadcasts over leading axes: ``p`` has shape ``(..., K)``, ``y`` shape ``(...)``.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    b = m.drift(y)
    return np.concatenate([p @ m.R, np.sum(p * b, axis=-1)[..., None]], axis=-1)


def diff_kappa(m: GameModel, p, y):
    """Diffusion vector ``((p_k / sigma)(b_k - <b, p>))_k`` followed by ``sigma``."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    b = m.drift(y)
    sig = np.broadcast_to(m.vol(y), y.shape)
    _check_vol(m, sig)
    mean = np.sum(p * b, axis=-1, keepdims=True)
    kp = p / np.asarray(sig)[..., None] * (b - mean)
    return np.concatenate([kp, np.asarray(sig, dtype=float)[..., None]], axis=-1)


def _propagate(R: np.ndarray, rows: np.ndarray, t: float) -> np.ndarray:
    """``rows @ exp(t R)`` by uniformization, sub-stepping so each Poisson rate stays moderate."""
    rows = np.array(rows, dtype=float)
    lam = float(np.max(np.abs(np.diag(R)))) if R.size else 0.0
    if t == 0.0 or lam == 0.0:
        return rows
    U = np.eye(len(R)) + R / lam
    nsub = max(1, int(np.ceil(lam * t / _MAX_RATE_STEP)))
    h = t / nsub
    mu = lam * h
    for _ in range(nsub):
        weight = np.exp(-mu)
        acc = weight * rows
        term = rows
        mass = weight
        m = 0
        while 1.0 - mass > POISSON_TAIL:
            m += 1
            term = term @ U
            weight *= mu / m
            mass += weight
            acc = acc + weight * term
        rows = acc / mass
    return rows


@lru_cache(maxsize=64)
def _transition_cached(R_bytes: bytes, K: int, t: float) -> np.ndarray:
    R = np.frombuffer(R_bytes, dtype=float).reshape(K, K)
    P = _propagate(R, np.eye(K), t)
    P = np.maximum(P, 0.0)
    P /= P.sum(axis=1, keepdims=True)
    P.setflags(write=False)
    return P


def transition_matrix(R, t: float) -> np.ndarray:
    """``exp(t R)``; row ``k`` is the law of ``X_t`` given ``X_0 = k``."""
    R = np.ascontiguousarray(R, dtype=float)
    if t < 0:
        raise ValueError("t must be non-negative")
    return _transition_cached(R.tobytes(), len(R), float(t))


def markov_marginal(R, p, t: float) -> np.ndarray:
    """Law of ``X_t`` when ``X_0 ~ p``, i.e. ``exp(t R^T) p``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    p = np.asarray(p, dtype=float)
    if t == 0:
        return p.copy()
    out = _propagate(np.asarray(R, dtype=float), p, float(t))
    out = np.maximum(out, 0.0)
    return out / out.sum(axis=-1, keepdims=True)


@dataclass
class PathBundle:
    times: np.ndarray
    x_path: np.ndarray
    y_path: np.ndarray
    chi_path: np.ndarray | None = None
    seed: int = 0
    path_id: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_paths_csv([self], buf, long_format=False)
        return buf.getvalue()


def write_paths_csv(bundles, f, long_format: bool = True) -> None:
    """Write paths as CSV: header ``[path_id,]t,x,y,chi_0..chi_{K-1}`` after a ``#`` metadata line."""
    bundles = list(bundles)
    seeds = sorted({b.seed for b in bundles})
    dt = bundles[0].dt if bundles else 0.0
    f.write(f"# seed={','.join(map(str, seeds))} dt={dt!r} paths={len(bundles)}\n")
    K = 0 if bundles[0].chi_path is None else bundles[0].chi_path.shape[1]
    w = csv.writer(f, lineterminator="\n")
    header = (["path_id"] if long_format else []) + ["t", "x", "y"] + [f"chi_{k}" for k in range(K)]
    w.writerow(header)
    for b in bundles:
        for n, t in enumerate(b.times):
            row = ([b.path_id] if long_format else []) + [repr(float(t)), int(b.x_path[n]), repr(float(b.y_path[n]))]
            if K:
                row += [repr(float(c)) for c in b.chi_path[n]]
            w.writerow(row)


def _path_draws(seed: int, path_ids, nsteps: int):
    """Per-path draws: initial-state uniform, chain uniforms, Gaussian increments."""
    u0 = np.empty(len(path_ids))
    uc = np.empty((len(path_ids), nsteps))
    z = np.empty((len(path_ids), nsteps))
    for row, pid in enumerate(path_ids):
        gen = path_rng(seed, pid)
        u0[row] = gen.random()
        uc[row] = gen.random(nsteps)
        z[row] = gen.standard_normal(nsteps)
    return u0, uc, z


def _n_steps(T: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < dt * (1 - 1e-12):
        raise ValueError("horizon T must be at least dt")
    return int(round(T / dt))


def _sample_rows(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum((u[:, None] > cum).sum(axis=1), cum.shape[1] - 1)


def simulate_paths(m: GameModel, p0, y0: float, T: float, dt: float, num_paths: int, seed: int,
                   first_path: int = 0, k0=None):
    """Simulate ``num_paths`` joint paths of ``(X, Y)`` on the uniform grid of step ``dt``.

    ``X`` moves exactly by the transition matrix ``exp(dt R)`` sampled from the current
    state; ``Y`` follows Euler-Maruyama with the left-point state.  ``X_0 ~ p0`` unless
    ``k0`` pins it.

    Returns ``times, x, y`` with ``x, y`` of shape ``(num_paths, nsteps + 1)``.
    """
    nsteps = _n_steps(T, dt)
    ids = range(first_path, first_path + num_paths)
    u0, uc, z = _path_draws(seed, ids, nsteps)
    P = transition_matrix(m.R, dt)
    cum = np.cumsum(P, axis=1)
    x = np.empty((num_paths, nsteps + 1), dtype=np.int64)
    y = np.empty((num_paths, nsteps + 1))
    if k0 is None:
        x[:, 0] = _sample_rows(np.cumsum(np.asarray(p0, dtype=float))[None, :].repeat(num_paths, 0), u0)
    else:
        x[:, 0] = int(k0)
    y[:, 0] = y0
    sq = np.sqrt(dt)
    rows = np.arange(num_paths)
    for n in range(nsteps):
        yn = y[:, n]
        b = m.drift(yn)[rows, x[:, n]]
        sig = np.broadcast_to(m.vol(yn), yn.shape)
        y[:, n + 1] = yn + b * dt + sig * sq * z[:, n]
        x[:, n + 1] = _sample_rows(cum[x[:, n]], uc[:, n])
    times = dt * np.arange(nsteps + 1)
    return times, x, y


def simulate_joint_path(m: GameModel, k0: int, y0: float, T: float, dt: float, seed: int,
                        path_id: int = 0) -> PathBundle:
    """One path started from state ``k0``; deterministic given ``(seed, path_id)``."""
    if not 0 <= k0 < m.K:
        raise ValueError("k0 out of range")
    times, x, y = simulate_paths(m, None, y0, T, dt, 1, seed, first_path=path_id, k0=k0)
    return PathBundle(times=times, x_path=x[0], y_path=y[0], seed=seed, path_id=path_id)


def _likelihood_reweight(m: GameModel, chi, y, dy, dt):
    y = np.asarray(y, dtype=float)
    dy = np.asarray(dy, dtype=float)
    b = m.drift(y)
    sig = np.broadcast_to(m.vol(y), y.shape)
    _check_vol(m, sig)
    var = (np.asarray(sig) ** 2 * dt)[..., None]
    ll = -((dy[..., None] - b * dt) ** 2) / (2.0 * var) - 0.5 * np.log(2.0 * np.pi * var)
    with np.errstate(divide="ignore"):
        logw = np.log(chi) + ll
    top = logw.max(axis=-1, keepdims=True)
    if np.any(top < np.log(1e-300)):
        raise FilterUnderflow("total likelihood underflow; dt too large or model misconfigured")
    w = np.exp(logw - top)
    return w / w.sum(axis=-1, keepdims=True)


def filter_update(m: GameModel, chi, y, dy, dt: float):
    """One filter step: reweight by the likelihood of ``dy``, then apply ``exp(dt R)``.

    Works on a single belief or on a batch of shape ``(..., K)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    chi = np.asarray(chi, dtype=float)
    post = _likelihood_reweight(m, chi, y, dy, dt)
    out = post @ transition_matrix(m.R, dt)
    out = np.maximum(out, 0.0)
    return out / out.sum(axis=-1, keepdims=True)


def run_filter(m: GameModel, y_path, p0, dt: float):
    """Fold :func:`filter_update` along ``y_path`` (last axis is time); ``chi[..., 0, :] = p0``."""
    y_path = np.asarray(y_path, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    nt = y_path.shape[-1]
    chi = np.empty(y_path.shape + (m.K,))
    chi[..., 0, :] = p0
    for n in range(nt - 1):
        chi[..., n + 1, :] = filter_update(m, chi[..., n, :], y_path[..., n],
                                           y_path[..., n + 1] - y_path[..., n], dt)
    return chi
