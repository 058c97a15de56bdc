"""Monomial algorithm family: exponent tuples, step choices, directions, updates.

Direction semantics by dimension and problem kind:

* ``n == 1``: ``d = prod_j (f^(j)(x)) ** nu[j]`` evaluated left to right.
* minimization, ``n > 1``: ``d = f**nu0 * H**nu2 @ (grad f)**nu1`` where the
  gradient power is elementwise and ``H**k`` for ``k < 0`` means ``|k|``
  successive linear solves.
* root-finding, ``n > 1``: ``d = J**nu1 @ f**nu0`` with the same conventions.

Integer powers are repeated multiplications; a zero base under a negative
exponent is reported rather than turned into an infinity.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass

import numpy as np

from .expr import OK, OVERFLOW, EvaluationError, _raise_for
from .problem import Kind, ProblemSpec

ZERO_BASE = 3
SINGULAR = 4

PIVOT_RTOL = 1e-12
DEFAULT_BETA_GRID = tuple(i / 8 for i in range(8))
DEFAULT_ABAR_MAX = 10


class ZeroBaseNegativePower(EvaluationError):
    pass


class SingularMatrix(EvaluationError):
    pass


class Family(str, enum.Enum):
    SINGLE = "single"
    TWO_STEP = "two-step"


@dataclass(frozen=True, order=True)
class StepChoice:
    """Step ``sign * 2**-abar``."""

    sign: int
    abar: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.abar < 0:
            raise ValueError("abar must be nonnegative")

    @property
    def value(self) -> float:
        return self.sign * 2.0 ** -self.abar

    def __str__(self):
        return f"{'+' if self.sign > 0 else '-'}{self.abar}"


def step_choices(abar_max: int = DEFAULT_ABAR_MAX) -> list[StepChoice]:
    """All step choices in tie-break order: every + step before any - step,
    smaller abar first within a sign."""
    return [StepChoice(s, a) for s in (1, -1) for a in range(abar_max + 1)]


def format_schedule(schedule) -> str:
    return ",".join(str(s) for s in schedule)


def parse_schedule(text: str) -> list[StepChoice]:
    text = text.strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        m = re.fullmatch(r"\s*([+-])(\d+)\s*", part)
        if m is None:
            raise ValueError(f"bad schedule entry {part!r}; expected e.g. '-0' or '+3'")
        out.append(StepChoice(1 if m.group(1) == "+" else -1, int(m.group(2))))
    return out


def _fmt_beta(beta: float) -> str:
    s = repr(float(beta))
    return s[:-2] if s.endswith(".0") else s


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: Family
    nu: tuple
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Family(self.kind))
        object.__setattr__(self, "nu", tuple(int(k) for k in self.nu))
        object.__setattr__(self, "beta", float(self.beta))
        if len(self.nu) not in (2, 3):
            raise ValueError("nu must have one exponent per derivative order 0..j_max")
        if self.kind is Family.SINGLE and self.beta != 0.0:
            raise ValueError("single-step algorithms carry no momentum")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")

    @property
    def label(self) -> str:
        return f"nu=({','.join(str(k) for k in self.nu)});beta={_fmt_beta(self.beta)}"

    def __str__(self):
        return self.label


_ALGO = re.compile(r"\s*nu\s*=\s*\(([^)]*)\)\s*(?:;\s*beta\s*=\s*([^;\s]+)\s*)?")


def parse_algorithm(text: str, kind=None) -> AlgorithmSpec:
    """Parse ``"nu=(a,b,c);beta=q"``.  Without ``kind``, nonzero beta means two-step."""
    m = _ALGO.fullmatch(text)
    if m is None:
        raise ValueError(f"bad algorithm string {text!r}; expected 'nu=(a,b,c);beta=q'")
    try:
        nu = tuple(int(p) for p in m.group(1).split(","))
        beta = float(m.group(2)) if m.group(2) is not None else 0.0
    except ValueError:
        raise ValueError(f"bad algorithm string {text!r}") from None
    if kind is None:
        kind = Family.TWO_STEP if beta != 0.0 else Family.SINGLE
    return AlgorithmSpec(Family(kind), nu, beta)


def enumerate_algorithms(kind=Family.SINGLE, j_max=2, k_min=-2, k_max=2,
                         beta_grid=DEFAULT_BETA_GRID) -> list[AlgorithmSpec]:
    """Cartesian product of exponents (nu[0] slowest) and, for two-step, betas (fastest)."""
    kind = Family(kind)
    if j_max not in (1, 2):
        raise ValueError("j_max must be 1 or 2")
    if k_min > k_max:
        raise ValueError("empty exponent range")
    betas = (0.0,) if kind is Family.SINGLE else tuple(beta_grid)
    if not betas:
        raise ValueError("empty beta grid")
    ks = range(k_min, k_max + 1)
    return [
        AlgorithmSpec(kind, nu, b)
        for nu in itertools.product(ks, repeat=j_max + 1)
        for b in betas
    ]


# ---------------------------------------------------------------------------
# batched kernels


def _ipow(base, k, status):
    """Integer power by repeated multiplication; flags zero bases under k < 0."""
    if k == 0:
        return np.ones_like(base)
    p = base
    for _ in range(abs(k) - 1):
        p = p * base
    if k < 0:
        zero = base == 0.0
        if zero.ndim > 1:
            zero = zero.any(axis=tuple(range(1, zero.ndim)))
        status[(status == OK) & zero] = ZERO_BASE
        p = 1.0 / p
    return p


def matvec(a, v):
    return (a * v[:, None, :]).sum(axis=2)


def solve(a, b, status):
    """Gaussian elimination with partial pivoting on a stack of small systems.

    A pivot below ``PIVOT_RTOL`` times the matrix infinity norm marks the row
    ``SINGULAR`` in ``status``.
    """
    a = a.copy()
    b = b.copy()
    m, n, _ = a.shape
    rows = np.arange(m)
    tol = PIVOT_RTOL * np.abs(a).sum(axis=2).max(axis=1)
    singular = np.zeros(m, dtype=bool)
    for k in range(n):
        p = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = p != k
        if swap.any():
            ak = a[rows, k].copy()
            a[rows, k] = a[rows, p]
            a[rows, p] = ak
            bk = b[rows, k].copy()
            b[rows, k] = b[rows, p]
            b[rows, p] = bk
        piv = a[:, k, k]
        bad = (np.abs(piv) < tol) | (piv == 0.0)
        singular |= bad
        piv = np.where(bad, 1.0, piv)
        for i in range(k + 1, n):
            f = a[:, i, k] / piv
            a[:, i, k:] -= f[:, None] * a[:, k, k:]
            b[:, i] -= f * b[:, k]
    x = np.zeros_like(b)
    for i in range(n - 1, -1, -1):
        s = b[:, i].copy()
        for j in range(i + 1, n):
            s -= a[:, i, j] * x[:, j]
        d = a[:, i, i]
        x[:, i] = s / np.where(d == 0.0, 1.0, d)
    status[(status == OK) & singular] = SINGULAR
    return x


def _matpow_apply(a, k, v, status):
    for _ in range(abs(k)):
        v = matvec(a, v) if k > 0 else solve(a, v, status)
    return v


def needed_order(nu) -> int:
    nz = [j for j, k in enumerate(nu) if k != 0]
    return max(nz) if nz else 0


def direction_batch(p: ProblemSpec, nu, points):
    """Monomial direction at each row of ``points``; returns ``(d, status)``."""
    nu = tuple(nu)
    if needed_order(nu) > p.j_max:
        raise ValueError(f"exponents {nu} need derivatives beyond j_max={p.j_max}")
    pts = np.asarray(points, dtype=float)
    m = pts.shape[0]
    with np.errstate(all="ignore"):
        v, g, h, status = p.jets(pts, needed_order(nu))
        status = status.copy()
        if p.n == 1:
            derivs = [v[:, 0], None if g is None else g[:, 0, 0], None if h is None else h[:, 0, 0, 0]]
            d = np.ones(m)
            for j, k in enumerate(nu):
                if k != 0:
                    d = d * _ipow(derivs[j], k, status)
            d = d[:, None]
        elif p.kind is Kind.MIN:
            nu2 = nu[2] if len(nu) > 2 else 0
            vec = _ipow(g[:, 0, :], nu[1], status) if nu[1] != 0 else np.ones((m, p.n))
            if nu2 != 0:
                vec = _matpow_apply(h[:, 0], nu2, vec, status)
            if nu[0] != 0:
                vec = _ipow(v[:, 0], nu[0], status)[:, None] * vec
            d = vec
        else:
            vec = _ipow(v, nu[0], status) if nu[0] != 0 else np.ones((m, p.n))
            if nu[1] != 0:
                vec = _matpow_apply(g, nu[1], vec, status)
            d = vec
        status[(status == OK) & ~np.isfinite(d).all(axis=1)] = OVERFLOW
    return d, status


def extrapolate(x, x_prev, beta):
    """Momentum point ``x + beta*(x - x_prev)``; ``beta == 0`` returns ``x`` untouched."""
    if beta == 0.0:
        return x
    return x + beta * (x - x_prev)


def _raise_step(code, where):
    if code == ZERO_BASE:
        raise ZeroBaseNegativePower(f"zero base raised to a negative power at {where}")
    if code == SINGULAR:
        raise SingularMatrix(f"singular matrix at {where}")
    _raise_for(code, where)


# ---------------------------------------------------------------------------
# scalar API


@dataclass(frozen=True)
class IterState:
    x: np.ndarray
    x_prev: np.ndarray

    @classmethod
    def start(cls, x0):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        return cls(x0.copy(), x0.copy())


def direction(p: ProblemSpec, nu, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    d, st = direction_batch(p, nu, x)
    _raise_step(st[0], tuple(x[0]))
    return d[0]


def advance_single(p: ProblemSpec, nu, alpha: StepChoice, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    d = direction(p, nu, x)
    return x + alpha.value * d


def advance_two_step(p: ProblemSpec, nu, alpha: StepChoice, beta: float, s: IterState) -> IterState:
    y = extrapolate(s.x, s.x_prev, beta)
    d = direction(p, nu, y)
    return IterState(y + alpha.value * d, s.x.copy())


__all__ = [
    "AlgorithmSpec", "Family", "IterState", "SingularMatrix", "StepChoice",
    "ZeroBaseNegativePower", "advance_single", "advance_two_step", "direction",
    "direction_batch", "enumerate_algorithms", "extrapolate", "format_schedule",
    "parse_algorithm", "parse_schedule", "solve", "step_choices",
]
