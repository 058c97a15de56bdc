"""Problems an algorithm must solve, their residuals, and the built-in presets."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .expr import OK, _raise_for, evaluate_batch, parse

DEFAULT_EPSILON = 1e-3
DEFAULT_IT_MAX = 10


class Kind(str, enum.Enum):
    ROOT = "root"
    MIN = "min"


@dataclass(frozen=True)
class ProblemSpec:
    """A root-finding system (``len(exprs) == n``) or a scalar objective (one expr).

    ``j_max`` is the highest derivative order an algorithm may use.
    """

    kind: Kind
    n: int
    exprs: tuple
    box_lo: tuple
    box_hi: tuple
    initial_points: tuple
    epsilon: float = DEFAULT_EPSILON
    it_max: int = DEFAULT_IT_MAX
    j_max: int = 2
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "exprs", tuple(self.exprs))
        object.__setattr__(self, "box_lo", tuple(float(v) for v in self.box_lo))
        object.__setattr__(self, "box_hi", tuple(float(v) for v in self.box_hi))
        object.__setattr__(
            self, "initial_points", tuple(tuple(float(v) for v in p) for p in self.initial_points)
        )
        if self.n < 1:
            raise ValueError("dimension must be positive")
        want = self.n if self.kind is Kind.ROOT else 1
        if len(self.exprs) != want:
            raise ValueError(f"{self.kind.value} problem needs {want} expression(s), got {len(self.exprs)}")
        for e in self.exprs:
            if e.n_vars != self.n:
                raise ValueError("expression arity does not match problem dimension")
        if len(self.box_lo) != self.n or len(self.box_hi) != self.n:
            raise ValueError("box bounds must have length n")
        if any(not lo < hi for lo, hi in zip(self.box_lo, self.box_hi)):
            raise ValueError("box_lo must be strictly below box_hi")
        if not self.initial_points:
            raise ValueError("at least one initial point is required")
        for p in self.initial_points:
            if len(p) != self.n:
                raise ValueError("initial point has wrong length")
            if not self.in_box(p):
                raise ValueError(f"initial point {p} lies outside the box")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.it_max < 1:
            raise ValueError("it_max must be at least 1")
        if self.j_max not in (1, 2):
            raise ValueError("j_max must be 1 or 2")
        if self.kind is Kind.ROOT and self.n > 1 and self.j_max > 1:
            # second derivatives of a vector field are a third-order tensor
            raise ValueError("root-finding systems with n > 1 support j_max = 1 only")

    @property
    def lo(self):
        return np.array(self.box_lo)

    @property
    def hi(self):
        return np.array(self.box_hi)

    def with_(self, **changes) -> "ProblemSpec":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ProblemSpec(**fields)

    # -- evaluation ---------------------------------------------------------

    def jets(self, points, order):
        """Evaluate every expression at rows of ``points``.

        Returns ``(values, grads, hessians, status)`` shaped ``(m, k)``,
        ``(m, k, n)``, ``(m, k, n, n)``, ``(m,)`` with ``k = len(exprs)``.
        The status is the first non-OK code over the expressions.
        """
        pts = np.asarray(points, dtype=float)
        vals, grads, hess = [], [], []
        status = np.zeros(pts.shape[0], dtype=np.int8)
        for e in self.exprs:
            v, g, h, st = evaluate_batch(e, pts, order)
            status = np.where(status == OK, st, status)
            vals.append(v)
            grads.append(g)
            hess.append(h)
        v = np.stack(vals, axis=1)
        g = np.stack(grads, axis=1) if order >= 1 else None
        h = np.stack(hess, axis=1) if order >= 2 else None
        return v, g, h, status

    def residual_batch(self, points):
        """Infinity-norm residual at each row: of f for roots, of grad f for minima."""
        if self.kind is Kind.ROOT:
            v, _, _, st = self.jets(points, 0)
            res = np.abs(v).max(axis=1)
        else:
            _, g, _, st = self.jets(points, 1)
            res = np.abs(g[:, 0, :]).max(axis=1)
        return res, st

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if x.shape[1] != self.n:
            raise ValueError("point has wrong length")
        res, st = self.residual_batch(x)
        _raise_for(st[0], self.name)
        return float(res[0])

    def in_box_batch(self, points):
        pts = np.asarray(points, dtype=float)
        return ((pts >= self.lo) & (pts <= self.hi)).all(axis=-1)

    def in_box(self, x) -> bool:
        x = tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1))
        if len(x) != self.n:
            raise ValueError("point has wrong length")
        return all(lo <= v <= hi for v, lo, hi in zip(x, self.box_lo, self.box_hi))

    def objective_batch(self, points):
        """Scalar field used for contour grids: f itself, or max|f_i| for systems."""
        v, _, _, st = self.jets(points, 0)
        if self.kind is Kind.MIN:
            return v[:, 0], st
        return np.abs(v).max(axis=1), st

    def describe(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "n": self.n,
            "exprs": [e.text for e in self.exprs],
            "box_lo": list(self.box_lo),
            "box_hi": list(self.box_hi),
            "initial_points": [list(p) for p in self.initial_points],
            "epsilon": self.epsilon,
            "it_max": self.it_max,
            "j_max": self.j_max,
        }


def make_problem(kind, exprs, box, initial_points, *, epsilon=DEFAULT_EPSILON,
                 it_max=DEFAULT_IT_MAX, j_max=2, name="custom") -> ProblemSpec:
    """Build a problem from expression strings and a box given as ``[(lo, hi), ...]``."""
    n = len(box)
    parsed = tuple(parse(t, n) for t in exprs)
    return ProblemSpec(
        kind=Kind(kind),
        n=n,
        exprs=parsed,
        box_lo=[b[0] for b in box],
        box_hi=[b[1] for b in box],
        initial_points=initial_points,
        epsilon=epsilon,
        it_max=it_max,
        j_max=j_max,
        name=name,
    )


_PRESETS = {
    "cubic_root": dict(kind="root", exprs=["x^3-1"], box=[(-2, 2)], initial_points=[(0.1,)]),
    "xexp_root": dict(kind="root", exprs=["x*exp(x)-1"], box=[(-2, 2)], initial_points=[(0.1,)]),
    "quartic_min": dict(kind="min", exprs=["x^4+x^3-x^2-1"], box=[(-2, 2)], initial_points=[(0.1,)]),
    "rosenbrock_min": dict(
        kind="min", exprs=["100*(x2-x1^2)^2+(1-x1)^2"], box=[(-2, 2), (-2, 2)],
        initial_points=[(0.7, 0.75)], it_max=20,
    ),
    "system2d": dict(
        kind="root", exprs=["x2-x1^2", "5*x2-exp(x1)"], box=[(-2, 2), (-2, 2)],
        initial_points=[(0.1, 0.1)], j_max=1,
    ),
    "strongly_convex_1d": dict(kind="min", exprs=["exp(x)+x^2"], box=[(-2, 2)], initial_points=[(0.1,)]),
    "quad_2d": dict(
        kind="min", exprs=["(x1-1)^2+2*x2^2-x1*x2"], box=[(-1, 2), (-1, 2)],
        initial_points=[(-1.0, -1.0)], it_max=20,
    ),
    "expquad_2d": dict(
        kind="min", exprs=["exp(x1)+x1^2+exp(x2)+x2^2+x1*x2"], box=[(-1, 1), (-1, 1)],
        initial_points=[(0.5, 0.5)], it_max=20,
    ),
    "expquad_2d_literal": dict(
        kind="min", exprs=["exp(x1)+x1^2+exp(x2)+x1^2+x1*x2"], box=[(-1, 1), (-1, 1)],
        initial_points=[(0.5, 0.5)], it_max=20,
    ),
}

PRESET_NAMES = tuple(_PRESETS)

# starting-point ensembles used in the initial-condition experiments
ENSEMBLE_STARTS = {
    "strongly_convex_1d": [(-2 + 0.25 * i,) for i in range(17)],
    "quad_2d": [
        (2, 2), (2, 1), (2, 0), (2, -1), (1, 2), (1, 1), (1, 0), (1, -1),
        (0, 2), (0, 1), (0, 0), (0, -1), (-1, 2), (-1, 1), (-1, 0), (-1, -1),
    ],
    "expquad_2d": [
        (-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1),
        (0.4, 0.3), (0.9, -0.1), (-0.6, -0.8), (-0.3, -0.9),
    ],
}


def builtin(name: str) -> ProblemSpec:
    try:
        kw = dict(_PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown problem preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    return make_problem(name=name, **kw)
