"""Scalar expressions over named variables with second-order forward-mode AD.

Expressions are parsed into a small immutable tree of tuples.  Every numeric
evaluation, scalar or batched, goes through :func:`evaluate_batch`, which
propagates (value, gradient, Hessian) triples over a stack of points at once.
The scalar entry points are thin wrappers around a batch of one point, so a
value computed by :func:`evaluate` is bit-identical to the value field of
:func:`eval_taylor2` and to the same point inside any larger batch.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

MAX_POWER = 16
FUNCTIONS = ("exp", "log", "sin", "cos")

# per-point evaluation status codes
OK = 0
DOMAIN = 1
OVERFLOW = 2


class ParseError(ValueError):
    """Malformed expression text.  ``pos`` is the 0-based character offset."""

    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} (at position {pos})")
        self.pos = pos


class UnknownIdentifier(ParseError):
    pass


class VariableIndexError(ParseError):
    pass


class ExponentError(ParseError):
    pass


class EvaluationError(ArithmeticError):
    pass


class DomainError(EvaluationError):
    """log of a nonpositive number or division by zero."""


class EvaluationOverflow(EvaluationError):
    """An intermediate value became non-finite."""


@dataclass(frozen=True)
class Expression:
    root: tuple
    n_vars: int
    text: str = ""

    def __str__(self):
        return self.text or repr(self.root)


@dataclass(frozen=True)
class Taylor2:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, n_vars):
        self.text = text
        self.n_vars = n_vars
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        node = self.sum()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return node

    def sum(self):
        node = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.product()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def product(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return ("neg", self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            k = self.exponent()
            return ("pow", base, k)
        return base

    def exponent(self):
        kind, val, pos = self.peek()
        paren = kind == "op" and val == "("
        if paren:
            self.take()
            kind, val, pos = self.peek()
        sign = 1
        if kind == "op" and val in ("-", "+"):
            self.take()
            sign = -1 if val == "-" else 1
            kind, val, pos = self.peek()
        if kind != "num":
            raise ExponentError("exponent of ^ must be an integer constant", pos)
        self.take()
        value = float(val)
        if not value.is_integer():
            raise ExponentError(f"non-integer exponent {val}", pos)
        k = sign * int(value)
        if abs(k) > MAX_POWER:
            raise ExponentError(f"exponent magnitude above {MAX_POWER}", pos)
        if paren:
            self.expect(")")
        return k

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return ("const", float(val))
        if kind == "op" and val == "(":
            node = self.sum()
            self.expect(")")
            return node
        if kind == "id":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return ("call", val, arg)
            return self.variable(val, pos)
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {val!r}", pos)

    def variable(self, name, pos):
        if name == "x":
            if self.n_vars != 1:
                raise UnknownIdentifier("bare 'x' is only allowed for one variable", pos)
            return ("var", 0)
        m = re.fullmatch(r"x([0-9]+)", name)
        if m is None:
            raise UnknownIdentifier(f"unknown identifier {name!r}", pos)
        idx = int(m.group(1))
        if not 1 <= idx <= self.n_vars:
            raise VariableIndexError(
                f"variable {name} out of range x1..x{self.n_vars}", pos
            )
        return ("var", idx - 1)


def parse(text: str, n_vars: int) -> Expression:
    """Parse ``text`` into an :class:`Expression` over ``x1..x{n_vars}``.

    Supports numbers, ``+ - * /``, unary minus, ``^`` with an integer
    constant exponent (``|k| <= 16``), parentheses and the functions
    ``exp log sin cos``.  With ``n_vars == 1`` the bare name ``x`` is an
    alias for ``x1``.
    """
    if n_vars < 1:
        raise ValueError("n_vars must be positive")
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    root = _Parser(text, n_vars).parse()
    return Expression(root=root, n_vars=n_vars, text=text)


# ---------------------------------------------------------------------------
# batched forward-mode evaluation
#
# A jet is (v, g, h): v shape (m,), g shape (m, n) or None, h shape (m, n, n)
# or None.  None stands for an exactly-zero derivative block.


def _outer(a, b):
    return a[:, :, None] * b[:, None, :]


def _sym_outer(a, b):
    return _outer(a, b) + _outer(b, a)


def _add(x, y):
    if x is None:
        return y
    if y is None:
        return x
    return x + y


def _scale(block, s, dims):
    if block is None:
        return None
    return block * s.reshape((-1,) + (1,) * dims)


class _Evaluator:
    def __init__(self, points, order):
        self.x = points
        self.m, self.n = points.shape
        self.order = order
        self.status = np.zeros(self.m, dtype=np.int8)

    def flag(self, mask, code):
        self.status[(self.status == OK) & mask] = code

    def run(self, node):
        v, g, h = self.visit(node)
        if self.order >= 1 and g is not None:
            self.flag(~np.isfinite(g).all(axis=1), OVERFLOW)
        if self.order >= 2 and h is not None:
            self.flag(~np.isfinite(h).all(axis=(1, 2)), OVERFLOW)
        return v, g, h

    def visit(self, node):
        v, g, h = getattr(self, "op_" + node[0])(node)
        self.flag(~np.isfinite(v), OVERFLOW)
        return v, g, h

    def op_const(self, node):
        return np.full(self.m, node[1]), None, None

    def op_var(self, node):
        i = node[1]
        g = None
        if self.order >= 1:
            g = np.zeros((self.m, self.n))
            g[:, i] = 1.0
        return self.x[:, i].copy(), g, None

    def op_neg(self, node):
        v, g, h = self.visit(node[1])
        return -v, None if g is None else -g, None if h is None else -h

    def op_add(self, node):
        av, ag, ah = self.visit(node[1])
        bv, bg, bh = self.visit(node[2])
        return av + bv, _add(ag, bg), _add(ah, bh)

    def op_sub(self, node):
        av, ag, ah = self.visit(node[1])
        bv, bg, bh = self.visit(node[2])
        return av - bv, _add(ag, None if bg is None else -bg), _add(ah, None if bh is None else -bh)

    def mul(self, a, b):
        av, ag, ah = a
        bv, bg, bh = b
        v = av * bv
        g = h = None
        if self.order >= 1:
            g = _add(_scale(ag, bv, 1), _scale(bg, av, 1))
        if self.order >= 2:
            h = _add(_scale(ah, bv, 2), _scale(bh, av, 2))
            if ag is not None and bg is not None:
                h = _add(h, _sym_outer(ag, bg))
        return v, g, h

    def op_mul(self, node):
        return self.mul(self.visit(node[1]), self.visit(node[2]))

    def div(self, a, b):
        av, ag, ah = a
        bv, bg, bh = b
        self.flag(bv == 0.0, DOMAIN)
        q = av / bv
        g = h = None
        if self.order >= 1:
            num = _add(ag, None if bg is None else -_scale(bg, q, 1))
            g = None if num is None else num / bv[:, None]
        if self.order >= 2:
            num = _add(ah, None if bh is None else -_scale(bh, q, 2))
            if bg is not None and g is not None:
                num = _add(num, -_sym_outer(bg, g))
            h = None if num is None else num / bv[:, None, None]
        return q, g, h

    def op_div(self, node):
        return self.div(self.visit(node[1]), self.visit(node[2]))

    def op_pow(self, node):
        k = node[2]
        if k == 0:
            self.visit(node[1])  # still surfaces errors inside the base
            return np.ones(self.m), None, None
        base = self.visit(node[1])
        p = base
        for _ in range(abs(k) - 1):
            p = self.mul(p, base)
            self.flag(~np.isfinite(p[0]), OVERFLOW)
        if k < 0:
            p = self.div((np.ones(self.m), None, None), p)
        return p

    def op_call(self, node):
        fname = node[1]
        av, ag, ah = self.visit(node[2])
        if fname == "exp":
            f0 = np.exp(av)
            f1 = f2 = f0
        elif fname == "log":
            bad = av <= 0.0
            self.flag(bad, DOMAIN)
            safe = np.where(bad, 1.0, av)
            f0 = np.log(safe)
            f1 = 1.0 / safe
            f2 = -(f1 * f1)
        elif fname == "sin":
            f0 = np.sin(av)
            f1 = np.cos(av)
            f2 = -f0
        elif fname == "cos":
            f0 = np.cos(av)
            f1 = -np.sin(av)
            f2 = -f0
        else:  # pragma: no cover - parser rejects other names
            raise ValueError(fname)
        g = h = None
        if self.order >= 1:
            g = _scale(ag, f1, 1)
        if self.order >= 2:
            h = _scale(ah, f1, 2)
            if ag is not None:
                h = _add(h, _scale(_outer(ag, ag), f2, 2))
        return f0, g, h


def evaluate_batch(e: Expression, points, order: int = 2):
    """Evaluate ``e`` and its derivatives up to ``order`` at every row of ``points``.

    Returns ``(value, gradient, hessian, status)`` with shapes ``(m,)``,
    ``(m, n)``, ``(m, n, n)`` and ``(m,)``.  Derivative arrays above
    ``order`` are returned as ``None``.  Rows whose status is not ``OK``
    carry meaningless numbers; callers must mask them.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != e.n_vars:
        raise ValueError(f"points must have shape (m, {e.n_vars})")
    ev = _Evaluator(pts, order)
    with np.errstate(all="ignore"):
        v, g, h = ev.run(e.root)
    m, n = pts.shape
    if order >= 1 and g is None:
        g = np.zeros((m, n))
    if order >= 2 and h is None:
        h = np.zeros((m, n, n))
    return v, (g if order >= 1 else None), (h if order >= 2 else None), ev.status


def _raise_for(status, where):
    if status == DOMAIN:
        raise DomainError(f"domain error evaluating {where}")
    if status == OVERFLOW:
        raise EvaluationOverflow(f"non-finite value evaluating {where}")


def _single(e, point, order):
    p = np.asarray(point, dtype=float).reshape(-1)
    if p.shape[0] != e.n_vars:
        raise ValueError(f"point has length {p.shape[0]}, expected {e.n_vars}")
    v, g, h, st = evaluate_batch(e, p[None, :], order)
    _raise_for(st[0], e)
    return v, g, h


def evaluate(e: Expression, point) -> float:
    v, _, _ = _single(e, point, 0)
    return float(v[0])


def eval_taylor2(e: Expression, point) -> Taylor2:
    v, g, h = _single(e, point, 2)
    return Taylor2(value=float(v[0]), gradient=g[0].copy(), hessian=h[0].copy())
