"""Limit value ``V`` on a ``(p, y)`` grid for two-state models.

``V`` is the fixed point of the split step

    V <- Cav_p [ V + dt * (L_h V + r (u - V)) ]

where ``L_h`` is a monotone discretization of the generator of the
(belief, observation) diffusion and ``Cav_p`` is the concave envelope in ``p``
taken on every ``y`` slice.  ``p`` is the probability of state 0.

Discretization of ``L_h``:

* drift in ``p``: upwind differences;
* where the belief does not diffuse (``kappa_p == 0``): three-point second
  difference in ``y`` and a central ``y`` drift whenever that stays monotone,
  upwind otherwise;
* elsewhere the rank-one second-order term ``kappa' D^2 V kappa`` is a
  directional second difference along ``kappa`` whose end points are read off
  the grid by bilinear interpolation (non-negative weights, so monotone), and
  the ``y`` drift is upwinded.  The stencil reach grows like ``sqrt(N)`` cells,
  which keeps the scheme consistent (first order) as the grid is refined.

Homogeneous Neumann conditions at the ``y`` ends are imposed by mirror
reflection; the ``p`` ends need none because the belief drift points inward
and ``kappa_p`` vanishes there.
"""
from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .chain_filter import diff_kappa, drift_c
from .model import GameModel
from .stage_game import concave_envelope_1d, lambda_max, u_surface, u_value

__all__ = [
    "Grid", "ValueField", "Scheme", "CFLError", "ResidualStats",
    "make_grid", "hamiltonian", "build_scheme", "scheme_step", "solve_value",
    "residual_report", "concavify", "bilinear", "refinement_check", "RefinementCheck",
    "constraint_active",
]

log = logging.getLogger(__name__)

CFL_SAFETY = 0.9


class CFLError(ValueError):
    """Time step too large for the explicit scheme to stay monotone."""


@dataclass(frozen=True)
class Grid:
    p_nodes: np.ndarray
    y_nodes: np.ndarray

    def __post_init__(self):
        if len(self.p_nodes) < 3 or len(self.y_nodes) < 3:
            raise ValueError("grid needs at least 3 nodes per axis")

    @property
    def dp(self) -> float:
        return float(self.p_nodes[1] - self.p_nodes[0])

    @property
    def dy(self) -> float:
        return float(self.y_nodes[1] - self.y_nodes[0])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.p_nodes), len(self.y_nodes)

    def key(self) -> tuple:
        return (len(self.p_nodes), len(self.y_nodes), float(self.y_nodes[0]), float(self.y_nodes[-1]))


def make_grid(m: GameModel, n_p: int, n_y: int) -> Grid:
    return Grid(np.linspace(0.0, 1.0, n_p), np.linspace(m.y_min, m.y_max, n_y))


def bilinear(v: np.ndarray, p_nodes, y_nodes, p, y):
    """Bilinear interpolation of ``v[ip, jy]``; queries are clamped to the grid."""
    p = np.clip(np.asarray(p, dtype=float), p_nodes[0], p_nodes[-1])
    y = np.clip(np.asarray(y, dtype=float), y_nodes[0], y_nodes[-1])
    dp = p_nodes[1] - p_nodes[0]
    dy = y_nodes[1] - y_nodes[0]
    fi = (p - p_nodes[0]) / dp
    fj = (y - y_nodes[0]) / dy
    i0 = np.clip(np.floor(fi).astype(int), 0, len(p_nodes) - 2)
    j0 = np.clip(np.floor(fj).astype(int), 0, len(y_nodes) - 2)
    a = fi - i0
    c = fj - j0
    return ((1 - a) * (1 - c) * v[i0, j0] + a * (1 - c) * v[i0 + 1, j0]
            + (1 - a) * c * v[i0, j0 + 1] + a * c * v[i0 + 1, j0 + 1])


@dataclass
class ValueField:
    """Values on a grid plus solver metadata."""

    v: np.ndarray
    grid: Grid
    iterations: int = 0
    final_change: float = float("nan")
    dt: float = float("nan")
    converged: bool = False
    history: list = field(default_factory=list)
    u: np.ndarray | None = None
    width: float | None = None
    extra: dict = field(default_factory=dict)

    def __call__(self, p, y):
        return bilinear(self.v, self.grid.p_nodes, self.grid.y_nodes, p, y)

    def second_differences(self) -> np.ndarray:
        return self.v[2:] - 2.0 * self.v[1:-1] + self.v[:-2]

    def metadata(self) -> dict:
        return {
            "n_p": self.grid.shape[0], "n_y": self.grid.shape[1],
            "y_min": float(self.grid.y_nodes[0]), "y_max": float(self.grid.y_nodes[-1]),
            "dt": self.dt, "iterations": self.iterations,
            "final_change": self.final_change, "converged": self.converged,
            "stencil_width": self.width, **self.extra,
        }


def hamiltonian(m: GameModel, p, y: float, grad, hess) -> float:
    """``-<grad, c> - 1/2 kappa' hess kappa - r u`` at ``(p, y)``; ``grad`` has ``K + 1`` entries."""
    p = np.asarray(p, dtype=float)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    c = drift_c(m, p, y)
    k = diff_kappa(m, p, y)
    return float(-grad @ c - 0.5 * k @ hess @ k - m.r * u_value(m, p, y))


def concavify(v: np.ndarray) -> np.ndarray:
    """Concave envelope in ``p`` of every ``y`` column (skips columns that are already concave)."""
    out = v.copy()
    d2 = v[2:] - 2.0 * v[1:-1] + v[:-2]
    for j in np.flatnonzero((d2 > 0.0).any(axis=0)):
        out[:, j] = concave_envelope_1d(v[:, j])
    return out


def _mirror(y, lo, hi):
    span = hi - lo
    # reflect into [lo, hi]; at most one fold is needed since reach <= span
    y = np.where(y < lo, 2 * lo - y, y)
    y = np.where(y > hi, 2 * hi - y, y)
    return np.clip(y, lo, lo + span)


def _auto_width(grid: Grid) -> float:
    n = min(grid.shape) - 1
    return max(1.0, 0.5 * np.sqrt(n))


@dataclass
class Scheme:
    """Precomputed linear operator ``L_h`` and source for one (model, grid) pair."""

    model: GameModel
    grid: Grid
    L: sp.csr_matrix
    u: np.ndarray
    width: float
    aligned: np.ndarray
    extent: tuple = (1, 1)  # widest stencil reach in (p, y) nodes

    @property
    def max_dt(self) -> float:
        """Largest step keeping every center coefficient non-negative."""
        diag = -self.L.diagonal()
        return 1.0 / (float(diag.max(initial=0.0)) + self.model.r)

    @property
    def dt(self) -> float:
        return CFL_SAFETY * self.max_dt

    def diffusion_half_step(self, v: np.ndarray, dt: float) -> np.ndarray:
        flat = v.ravel()
        out = flat + dt * (self.L @ flat + self.model.r * (self.u.ravel() - flat))
        return out.reshape(v.shape)

    def step(self, v: np.ndarray, dt: float) -> np.ndarray:
        if dt > self.max_dt * (1 + 1e-12):
            raise CFLError(f"dt={dt:.6g} exceeds the stability bound {self.max_dt:.6g}")
        return concavify(self.diffusion_half_step(v, dt))


_SCHEMES: "weakref.WeakKeyDictionary[GameModel, dict]" = weakref.WeakKeyDictionary()


def build_scheme(m: GameModel, grid: Grid, width: float | None = None) -> Scheme:
    """Assemble ``L_h`` for a two-state model (cached per model and grid)."""
    if m.K != 2:
        raise ValueError("the limit-value solver supports two-state models only")
    width = _auto_width(grid) if width is None else float(width)
    cache = _SCHEMES.setdefault(m, {})
    key = grid.key() + (width,)
    if key in cache:
        return cache[key]

    P, Y = np.meshgrid(grid.p_nodes, grid.y_nodes, indexing="ij")
    n_p, n_y = grid.shape
    dp, dy = grid.dp, grid.dy
    beliefs = np.stack([P, 1.0 - P], axis=-1)
    c = drift_c(m, beliefs, Y)
    kap = diff_kappa(m, beliefs, Y)
    cp, cy = c[..., 0], c[..., 2]
    kp, ky = kap[..., 0], kap[..., 2]
    # round-off from <p, b> when b does not depend on the state
    kp[np.abs(kp) <= 1e-12 * (1.0 + np.abs(ky))] = 0.0
    # p ends: beliefs cannot leave the simplex
    kp[0, :] = 0.0
    kp[-1, :] = 0.0
    cp[0, :] = np.maximum(cp[0, :], 0.0)
    cp[-1, :] = np.minimum(cp[-1, :], 0.0)

    idx = np.arange(n_p * n_y).reshape(n_p, n_y)
    rows, cols, vals = [], [], []

    def add(r, cidx, w):
        r = np.broadcast_to(r, np.shape(w)).ravel()
        cidx = np.broadcast_to(cidx, np.shape(w)).ravel()
        w = np.asarray(w, dtype=float).ravel()
        keep = w != 0.0
        rows.append(r[keep])
        cols.append(cidx[keep])
        vals.append(w[keep])
        rows.append(r[keep])
        cols.append(r[keep])
        vals.append(-w[keep])

    ii, jj = np.meshgrid(np.arange(n_p), np.arange(n_y), indexing="ij")
    here = idx[ii, jj]

    # belief drift, upwind
    up = np.maximum(cp, 0.0) / dp
    dn = np.maximum(-cp, 0.0) / dp
    add(here, idx[np.minimum(ii + 1, n_p - 1), jj], np.where(ii < n_p - 1, up, 0.0))
    add(here, idx[np.maximum(ii - 1, 0), jj], np.where(ii > 0, dn, 0.0))

    aligned = kp == 0.0
    jp = np.minimum(jj + 1, n_y - 1)
    jm = np.maximum(jj - 1, 0)
    # mirror: the missing neighbour at a y end is the interior one
    jp = np.where(jj == n_y - 1, n_y - 2, jp)
    jm = np.where(jj == 0, 1, jm)

    # aligned nodes: 3-point y diffusion, central drift when monotone
    diff_y = 0.5 * ky ** 2 / dy ** 2
    central = aligned & (np.abs(cy) * dy <= ky ** 2)
    wy_up = np.where(central, diff_y + 0.5 * cy / dy, diff_y + np.maximum(cy, 0.0) / dy)
    wy_dn = np.where(central, diff_y - 0.5 * cy / dy, diff_y + np.maximum(-cy, 0.0) / dy)
    # non-aligned nodes only carry the upwind drift in y here
    wy_up = np.where(aligned, wy_up, np.maximum(cy, 0.0) / dy)
    wy_dn = np.where(aligned, wy_dn, np.maximum(-cy, 0.0) / dy)
    add(here, idx[ii, jp], wy_up)
    add(here, idx[ii, jm], wy_dn)

    # non-aligned nodes: directional second difference along kappa
    na = ~aligned
    extent = (1, 1)
    if na.any():
        ip_, jy_ = ii[na], jj[na]
        kpn, kyn = kp[na], ky[na]
        p0, y0 = P[na], Y[na]
        reach = np.maximum(np.abs(kpn) / dp, np.abs(kyn) / dy)
        h = width / reach
        h = np.minimum(h, np.minimum(p0, 1.0 - p0) / np.abs(kpn))
        h = np.minimum(h, (grid.y_nodes[-1] - grid.y_nodes[0]) / np.abs(kyn))
        coef = 0.5 / h ** 2
        extent = (max(1, int(np.ceil((h * np.abs(kpn)).max() / dp - 1e-9))),
                  max(1, int(np.ceil((h * np.abs(kyn)).max() / dy - 1e-9))))
        for sgn in (1.0, -1.0):
            pq = np.clip(p0 + sgn * h * kpn, 0.0, 1.0)
            yq = _mirror(y0 + sgn * h * kyn, grid.y_nodes[0], grid.y_nodes[-1])
            fi = pq / dp
            fj = (yq - grid.y_nodes[0]) / dy
            i0 = np.clip(np.floor(fi).astype(int), 0, n_p - 2)
            j0 = np.clip(np.floor(fj).astype(int), 0, n_y - 2)
            a = np.clip(fi - i0, 0.0, 1.0)
            b = np.clip(fj - j0, 0.0, 1.0)
            src = idx[ip_, jy_]
            for di, dj, w in ((0, 0, (1 - a) * (1 - b)), (1, 0, a * (1 - b)),
                              (0, 1, (1 - a) * b), (1, 1, a * b)):
                add(src, idx[i0 + di, j0 + dj], coef * w)

    n = n_p * n_y
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    L.sum_duplicates()
    u = u_surface(m, grid.p_nodes, grid.y_nodes)
    scheme = Scheme(model=m, grid=grid, L=L, u=u, width=width, aligned=aligned, extent=extent)
    cache[key] = scheme
    return scheme


def scheme_step(m: GameModel, grid: Grid, V, dt: float) -> np.ndarray:
    """One full split step (generator half-step, then concavification in ``p``)."""
    v = V.v if isinstance(V, ValueField) else np.asarray(V, dtype=float)
    return build_scheme(m, grid).step(v, dt)


def solve_value(m: GameModel, grid: Grid, tol: float = 1e-6, max_iter: int = 200_000,
                dt: float | None = None, v0=None, width: float | None = None) -> ValueField:
    """Iterate :func:`scheme_step` from ``V0 = u`` until the sup change is at most ``tol * dt``.

    Non-convergence is reported through ``converged=False`` on the returned field.
    """
    if m.K != 2:
        raise ValueError("the limit-value solver supports two-state models only")
    if tol <= 0:
        raise ValueError("tol must be positive")
    scheme = build_scheme(m, grid, width)
    dt = scheme.dt if dt is None else dt
    v = scheme.u.copy() if v0 is None else np.array(v0, dtype=float)
    history = []
    change = float("inf")
    it = 0
    while it < max_iter:
        new = scheme.step(v, dt)
        change = float(np.abs(new - v).max())
        v = new
        it += 1
        if it <= 10 or it % 100 == 0:
            history.append((it, change))
        if change <= tol * dt:
            break
    history.append((it, change))
    converged = change <= tol * dt
    log.info("solve_value: %d iterations, final change %.3g (dt=%.3g)", it, change, dt)
    return ValueField(v=v, grid=grid, iterations=it, final_change=change, dt=dt,
                      converged=converged, history=history, u=scheme.u, width=scheme.width)


@dataclass
class ResidualStats:
    max_abs: float
    mean_abs: float
    quantiles: dict
    active_fraction: float
    n_nodes: int
    n_masked: int
    constant: float
    residual: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "max_abs_residual": self.max_abs, "mean_abs_residual": self.mean_abs,
            "quantiles": self.quantiles, "active_fraction": self.active_fraction,
            "n_nodes": self.n_nodes, "n_masked_kink": self.n_masked,
            "C_over_dp_plus_dy": self.constant,
        }


def constraint_active(m: GameModel, V: ValueField) -> np.ndarray:
    """Nodes where the concavification binds at the fixed point (``V`` on a chord).

    The envelope lifts the generator half-step there by an amount of order ``dt``.
    """
    scheme = build_scheme(m, V.grid, V.width)
    dt = V.dt if np.isfinite(V.dt) else scheme.dt
    pre = scheme.diffusion_half_step(V.v, dt)
    return (V.v - pre) > max(1e-12, 1e-3 * dt * (np.abs(V.v).max() + 1.0))


def _source_kinks(u: np.ndarray, dp: float, dy: float) -> np.ndarray:
    """Nodes where ``u`` has a slope jump: second difference above ``sqrt(h) * h * scale``.

    Smooth stretches give second differences of order ``h**2``; a kink gives order ``h``.
    """
    scale = float(np.ptp(u)) + 1.0
    out = np.zeros(u.shape, dtype=bool)
    out[1:-1, :] |= np.abs(u[2:] - 2 * u[1:-1] + u[:-2]) > np.sqrt(dp) * dp * scale
    out[:, 1:-1] |= np.abs(u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) > np.sqrt(dy) * dy * scale
    return out


def _dilate(mask: np.ndarray, reach_p: int, reach_y: int) -> np.ndarray:
    """Boolean dilation by a rectangle of half-widths ``reach_p`` x ``reach_y`` nodes."""
    out = mask.copy()
    for axis, reach in ((0, reach_p), (1, reach_y)):
        src = out.copy()
        n = mask.shape[axis]
        for d in range(1, min(reach, n - 1) + 1):
            lead = [slice(None)] * 2
            trail = [slice(None)] * 2
            lead[axis], trail[axis] = slice(d, None), slice(None, -d)
            out[tuple(lead)] |= src[tuple(trail)]
            out[tuple(trail)] |= src[tuple(lead)]
    return out


def residual_report(m: GameModel, grid: Grid, V: ValueField, y_margin: int = 0) -> ResidualStats:
    """``min(rV + H, -lambda_max(p, D_p^2 V))`` with central difference quotients.

    Only interior nodes are evaluated.  ``V`` is not twice differentiable at
    switches between contact and chord nodes, nor where ``u`` has a slope jump;
    nodes within the scheme's stencil reach of such a kink (plus one node) are
    masked, and the same reach is dropped at each truncated ``y`` end
    (``y_margin`` can widen it).  ``active_fraction`` is the share of interior
    nodes lying on a chord of the envelope.
    """
    v = V.v
    scheme = build_scheme(m, grid, V.width)
    n_p, n_y = grid.shape
    dp, dy = grid.dp, grid.dy
    chord = constraint_active(m, V)

    wp = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * dp)
    wy = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * dy)
    wpp = (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / dp ** 2
    wyy = (v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / dy ** 2
    wpy = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4 * dp * dy)

    P, Y = np.meshgrid(grid.p_nodes[1:-1], grid.y_nodes[1:-1], indexing="ij")
    beliefs = np.stack([P, 1.0 - P], axis=-1)
    c = drift_c(m, beliefs, Y)
    k = diff_kappa(m, beliefs, Y)
    u = scheme.u[1:-1, 1:-1]
    # V extended off the simplex as a function of the first coordinate only
    H = -(wp * c[..., 0] + wy * c[..., 2]) \
        - 0.5 * (k[..., 0] ** 2 * wpp + 2 * k[..., 0] * k[..., 2] * wpy + k[..., 2] ** 2 * wyy) \
        - m.r * u
    lam = 0.5 * wpp  # lambda_max along the single tangent direction (1, -1)/sqrt(2)
    res = np.minimum(m.r * v[1:-1, 1:-1] + H, -lam)

    # kinks: contact/chord switches along p and slope jumps of u; the scheme smears
    # them over its stencil reach, so dilate by that many nodes
    status = chord.astype(int)
    kink = _source_kinks(scheme.u, dp, dy)
    kink[1:, :] |= status[1:, :] != status[:-1, :]
    kink[:-1, :] |= status[1:, :] != status[:-1, :]
    # one extra node for the residual's own stencil
    reach_p, reach_y = scheme.extent[0] + 1, scheme.extent[1] + 1
    near = _dilate(kink, reach_p, reach_y)
    mixed = near[1:-1, 1:-1]
    keep = ~mixed
    margin = max(int(y_margin), reach_y)
    keep[:, :margin] = False
    keep[:, -margin:] = False
    vals = np.abs(res[keep])
    if vals.size == 0:
        vals = np.zeros(1)
    qs = {str(q): float(np.quantile(vals, q)) for q in (0.5, 0.9, 0.99)}
    active = float(chord[1:-1, 1:-1].mean())
    return ResidualStats(
        max_abs=float(vals.max()), mean_abs=float(vals.mean()), quantiles=qs,
        active_fraction=active, n_nodes=int(keep.sum()), n_masked=int(mixed.sum()),
        constant=float(vals.max() / (dp + dy)), residual=res, mask=keep,
    )


def lambda_max_field(V: ValueField) -> np.ndarray:
    """``lambda_max`` of the discrete ``p``-Hessian at interior ``p`` nodes (general routine, K = 2)."""
    d2 = V.second_differences() / V.grid.dp ** 2
    out = np.empty_like(d2)
    for idx, val in np.ndenumerate(d2):
        p = V.grid.p_nodes[idx[0] + 1]
        out[idx] = lambda_max([p, 1 - p], [[val, 0.0], [0.0, 0.0]])
    return out


@dataclass
class RefinementCheck:
    """Residuals of a coarse solve and its ``(2N_p - 1, 2N_y - 1)`` refinement on shared nodes."""

    coarse_max: float
    fine_max: float
    coarse_mean: float
    fine_mean: float
    n_nodes: int
    sup_diff: float

    @property
    def reduction(self) -> float:
        return 1.0 - self.fine_max / self.coarse_max if self.coarse_max > 0 else 0.0


def refinement_check(m: GameModel, coarse: ValueField, fine: ValueField) -> RefinementCheck:
    """Compare residuals on the coarse interior nodes kept by *both* kink masks.

    Each mask shrinks with its own stencil reach, so comparing the two maxima
    over their own masks would sample the fine solve closer to the kinks.
    """
    (nc_p, nc_y), (nf_p, nf_y) = coarse.grid.shape, fine.grid.shape
    if (nf_p, nf_y) != (2 * nc_p - 1, 2 * nc_y - 1):
        raise ValueError("fine grid must be the (2N-1) refinement of the coarse grid")
    rc = residual_report(m, coarse.grid, coarse)
    rf = residual_report(m, fine.grid, fine)
    # interior coarse node (i, j) sits at fine interior index (2i + 1, 2j + 1)
    f_res = rf.residual[1::2, 1::2]
    f_keep = rf.mask[1::2, 1::2]
    keep = rc.mask & f_keep
    if not keep.any():
        raise ValueError("no shared smooth nodes to compare")
    a = np.abs(rc.residual[keep])
    b = np.abs(f_res[keep])
    diff = float(np.abs(fine.v[::2, ::2] - coarse.v).max())
    return RefinementCheck(coarse_max=float(a.max()), fine_max=float(b.max()),
                           coarse_mean=float(a.mean()), fine_mean=float(b.mean()),
                           n_nodes=int(keep.sum()), sup_diff=diff)
