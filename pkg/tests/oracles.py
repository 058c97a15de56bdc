"""Independent reference implementations used by the tests.

``brute_force`` enumerates every schedule of length ``it_max`` with the scalar
stepping API, so it shares nothing with the search beyond the direction
kernels.  ``fd_gradient``/``fd_hessian`` are plain central differences.
"""

import itertools

import numpy as np

from algoforge.expr import EvaluationError, evaluate
from algoforge.family import Family, IterState, advance_two_step, step_choices


def _run(p, a, table, choices, start, mode="counted", enforce_box=True):
    """Returns (feasible, cost, it_con, executed choice indices)."""
    beta = a.beta if a.kind is Family.TWO_STEP else 0.0
    eps = p.epsilon
    s = IterState.start(start)
    try:
        r0 = p.residual(s.x)
    except EvaluationError:
        return False, None, None, None
    if r0 <= eps:
        return True, 0.0, 0, ()
    wt = {0: 1.0, 1: 10.0, 2: 100.0}
    ec = {0: 0.0, 1: 1.0, 2: 1.5, -1: 2.0, -2: 3.0}
    base = sum(wt[j] * ec[k] for j, k in enumerate(a.nu))
    cost = 0.0
    for it, ci in enumerate(choices, start=1):
        step = table[ci]
        try:
            s = advance_two_step(p, a.nu, step, beta, s)
        except EvaluationError:
            return False, None, None, None
        if enforce_box and not p.in_box(s.x):
            return False, None, None, None
        try:
            r = p.residual(s.x)
        except EvaluationError:
            return False, None, None, None
        c = float(step.abar) + base
        if a.kind is Family.TWO_STEP:
            c = c + a.beta
        if mode == "residual-weighted":
            cost += r * c
        elif mode == "counted-inclusive" or r > eps:
            cost += c
        if r <= eps:
            return True, cost, it, tuple(choices[:it])
    return False, None, None, None


def brute_force(p, a, abar_max=2, start=None, mode="counted"):
    """Best (cost, it_con, schedule indices) over all schedules, or None if infeasible."""
    table = step_choices(abar_max)
    start = p.initial_points[0] if start is None else start
    best = None
    seen = set()
    for sched in itertools.product(range(len(table)), repeat=p.it_max):
        ok, cost, it_con, prefix = _run(p, a, table, sched, start, mode)
        if not ok or prefix in seen:
            continue
        seen.add(prefix)
        key = (cost, it_con, prefix)
        if best is None or key < best:
            best = key
    return best


def fd_gradient(e, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty(len(x))
    for i in range(len(x)):
        dx = np.zeros(len(x))
        dx[i] = h
        g[i] = (evaluate(e, x + dx) - evaluate(e, x - dx)) / (2 * h)
    return g


def fd_hessian(e, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            di = np.zeros(n)
            dj = np.zeros(n)
            di[i] = h
            dj[j] = h
            H[i, j] = (
                evaluate(e, x + di + dj) - evaluate(e, x + di - dj)
                - evaluate(e, x - di + dj) + evaluate(e, x - di - dj)
            ) / (4 * h * h)
    return H
