"""Game instances: parsing and sampled validation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .expr import BinOp, Call, Expr, ExprError, Neg, Num, Var, eval_expr, parse_expr

__all__ = [
    "GameModel", "ModelError", "ValidationReport",
    "parse_model", "load_model", "validate_model", "preset_path",
]

GENERATOR_TOL = 1e-12


class ModelError(ValueError):
    """Schema or consistency violation in a model file."""


@dataclass(frozen=True, eq=False)
class GameModel:
    """A two-player zero-sum game driven by a hidden chain ``X`` and an observed diffusion ``Y``.

    Payoff keys are 0-based ``(k, i, j)`` tuples.  All coefficient methods accept a
    scalar or an array of ``y`` values and put the state / action axes last.
    """

    K: int
    R: np.ndarray
    b: tuple
    sigma: Expr
    g: dict
    r: float
    nI: int
    nJ: int
    eps: float
    y_min: float
    y_max: float
    source: dict = field(default_factory=dict, repr=False)

    def drift(self, y):
        """``b(k, y)`` with the state index last: shape ``y.shape + (K,)``."""
        return np.stack([eval_expr(e, y) for e in self.b], axis=-1)

    def vol(self, y):
        return eval_expr(self.sigma, y)

    def payoff(self, y):
        """``g(k, y, i, j)`` with shape ``y.shape + (K, nI, nJ)``."""
        y = np.asarray(y, dtype=float)
        out = np.empty(y.shape + (self.K, self.nI, self.nJ))
        for (k, i, j), e in self.g.items():
            out[..., k, i, j] = eval_expr(e, y if y.ndim else float(y))
        return out

    @property
    def payoff_is_y_free(self) -> bool:
        return all(_is_constant(e) for e in self.g.values())

    def to_dict(self) -> dict:
        return dict(self.source)


def _is_constant(e) -> bool:
    if isinstance(e, Num):
        return True
    if isinstance(e, Var):
        return False
    if isinstance(e, Neg):
        return _is_constant(e.operand)
    if isinstance(e, BinOp):
        return _is_constant(e.left) and _is_constant(e.right)
    assert isinstance(e, Call)
    return all(_is_constant(a) for a in e.args)


def _need(d: dict, key: str, kind):
    if key not in d:
        raise ModelError(f"missing field {key!r}")
    val = d[key]
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ModelError(f"field {key!r} must be an integer")
    elif kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ModelError(f"field {key!r} must be a number")
        val = float(val)
    elif not isinstance(val, kind):
        raise ModelError(f"field {key!r} has the wrong type")
    return val


def _expr(text, where: str) -> Expr:
    if not isinstance(text, str):
        raise ModelError(f"{where}: expression must be a string")
    try:
        return parse_expr(text)
    except ExprError as exc:
        raise ModelError(f"{where}: {exc}") from exc


def model_from_dict(d: dict) -> GameModel:
    K = _need(d, "K", int)
    nI = _need(d, "nI", int)
    nJ = _need(d, "nJ", int)
    r = _need(d, "r", float)
    eps = _need(d, "eps", float)
    y_min = _need(d, "y_min", float)
    y_max = _need(d, "y_max", float)
    if K < 1 or nI < 1 or nJ < 1:
        raise ModelError("K, nI and nJ must be positive")
    if r <= 0:
        raise ModelError("discount r must be positive")
    if eps <= 0:
        raise ModelError("volatility floor eps must be positive")
    if not y_min < y_max:
        raise ModelError("need y_min < y_max")

    R = np.asarray(_need(d, "R", list), dtype=float)
    if R.shape != (K, K):
        raise ModelError(f"R must be {K}x{K}, got shape {R.shape}")
    for k in range(K):
        s = R[k].sum()
        if abs(s) > GENERATOR_TOL:
            raise ModelError(f"row sum nonzero: row {k} of R sums to {s!r}")
    off = R[~np.eye(K, dtype=bool)]
    if off.size and off.min() < 0:
        raise ModelError("R has a negative off-diagonal rate")
    R.setflags(write=False)

    b_src = _need(d, "b", list)
    if len(b_src) != K:
        raise ModelError(f"b needs {K} expressions, got {len(b_src)}")
    b = tuple(_expr(t, f"b[{k}]") for k, t in enumerate(b_src))
    sigma = _expr(_need(d, "sigma", str), "sigma")

    g_src = _need(d, "g", dict)
    g = {}
    for key, text in g_src.items():
        try:
            k, i, j = (int(s) for s in key.split(","))
        except ValueError:
            raise ModelError(f"bad payoff key {key!r}; expected 'k,i,j'") from None
        if not (0 <= k < K and 0 <= i < nI and 0 <= j < nJ):
            raise ModelError(f"payoff key {key!r} out of range")
        g[(k, i, j)] = _expr(text, f"g[{key}]")
    for k in range(K):
        for i in range(nI):
            for j in range(nJ):
                if (k, i, j) not in g:
                    raise ModelError(f"missing payoff entry '{k},{i},{j}'")

    return GameModel(K=K, R=R, b=b, sigma=sigma, g=g, r=r, nI=nI, nJ=nJ, eps=eps,
                     y_min=y_min, y_max=y_max, source=dict(d))


def parse_model(text: str) -> GameModel:
    """Build a :class:`GameModel` from JSON text."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ModelError("model file must hold a JSON object")
    return model_from_dict(d)


def load_model(path) -> GameModel:
    return parse_model(Path(path).read_text())


def preset_path(name: str) -> Path:
    """Path of a bundled preset, e.g. ``preset_path("full")``."""
    fname = name if name.endswith(".json") else name + ".json"
    return Path(str(resources.files("asymgame") / "presets" / fname))


@dataclass
class ValidationReport:
    passed: bool
    min_sigma: float
    argmin_sigma_y: float
    max_abs_b: float
    max_abs_g: float
    lip_b: float
    lip_sigma: float
    lip_g: float
    failures: list = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [
            f"status: {'PASS' if self.passed else 'FAIL'}",
            f"min sigma: {self.min_sigma:.6g} at y={self.argmin_sigma_y:.6g}",
            f"max |b|: {self.max_abs_b:.6g}",
            f"max |g|: {self.max_abs_g:.6g}",
            f"Lipschitz estimates: b {self.lip_b:.6g}, sigma {self.lip_sigma:.6g}, g {self.lip_g:.6g}",
        ]
        out += [f"failure: {f}" for f in self.failures]
        return out


def _lip(values: np.ndarray, ys: np.ndarray) -> float:
    # values: (n, ...) sampled on ys
    if len(ys) < 2:
        return 0.0
    slopes = np.abs(np.diff(values, axis=0)) / np.diff(ys).reshape((-1,) + (1,) * (values.ndim - 1))
    return float(slopes.max()) if slopes.size else 0.0


def validate_model(m: GameModel, samples: int = 1001) -> ValidationReport:
    """Check boundedness, the volatility floor and Lipschitz behaviour on a uniform y-sample."""
    ys = np.linspace(m.y_min, m.y_max, max(int(samples), 2))
    failures = []
    nan = float("nan")
    try:
        sig = np.broadcast_to(m.vol(ys), ys.shape)
        b = m.drift(ys)
        g = m.payoff(ys)
    except ExprError as exc:
        return ValidationReport(False, nan, nan, nan, nan, nan, nan, nan, [f"evaluation error: {exc}"])
    imin = int(np.argmin(sig))
    if sig[imin] < m.eps:
        failures.append(f"sigma below floor eps={m.eps:g}: sigma({ys[imin]:.6g}) = {sig[imin]:.6g}")
    off = _offdiag_min(m.R)
    if off < 0 or np.abs(m.R.sum(axis=1)).max() > GENERATOR_TOL:
        failures.append("R is not a generator")
    return ValidationReport(
        passed=not failures,
        min_sigma=float(sig[imin]),
        argmin_sigma_y=float(ys[imin]),
        max_abs_b=float(np.abs(b).max()),
        max_abs_g=float(np.abs(g).max()),
        lip_b=_lip(b, ys),
        lip_sigma=_lip(sig, ys),
        lip_g=_lip(g, ys),
        failures=failures,
    )


def _offdiag_min(R: np.ndarray) -> float:
    off = R[~np.eye(len(R), dtype=bool)]
    return float(off.min()) if off.size else 0.0
