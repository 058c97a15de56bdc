"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the terminal
summary (see conftest.py) and when this file is run as a script:

    python tests/test_acceptance.py

Criteria whose literal statement conflicts with the mandated cost model are
implemented faithfully and marked ``xfail(strict=True)``: they report FAIL
with the measured numbers, and the suite turns red if they ever start
passing.
"""

import os
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from algoforge import cli
from algoforge.expr import evaluate_batch
from algoforge.family import (
    AlgorithmSpec,
    Family,
    IterState,
    advance_single,
    advance_two_step,
    direction_batch,
    enumerate_algorithms,
    parse_schedule,
    step_choices,
)
from algoforge.problem import ENSEMBLE_STARTS, PRESET_NAMES, builtin, make_problem
from algoforge.search import (
    FamilyConfig,
    SearchConfig,
    Status,
    competition_ranks,
    discover,
    ensemble,
    search_schedule,
    simulate,
)

sys.path.insert(0, str(Path(__file__).parent))
from oracles import brute_force  # noqa: E402

RESULTS = {}
WORKERS = min(4, os.cpu_count() or 1)

COST_CONFLICT = (
    "the converging iteration is free, so algorithms that converge in one step cost 0 "
    "and undercut the method named in the criterion; see README 'Known deviations'"
)


def record(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    return ok


def is_nesterov(a):
    return a.kind is Family.TWO_STEP and a.nu == (0, 1, 0) and a.beta > 0


# ---------------------------------------------------------------------------


def test_criterion_1_golden_recurrence():
    t0 = time.time()
    p = make_problem("root", ["x^2-3"], [(-2, 2)], [(0.1,)])
    a = AlgorithmSpec("single", (1, 1, -1))
    cfg = SearchConfig(enforce_box=False)
    sched = parse_schedule("-0,-0,-0")
    xs = [float(x[0]) for x in simulate(p, a, sched, cfg).points]
    ys = [float(x[0]) for x in simulate(p, a, sched, cfg, start=(3.0,)).points]
    want = [0.1, 0.399, 1.532478801, 2.53090211]
    ok = all(abs(x - w) <= 1e-9 for x, w in zip(xs, want)) and len(xs) == 4
    ok &= ys == [3.0, -15.0, 3315.0, -36429267615.0]
    ok &= ys[3] == 4 * 3315 - 3315 ** 3
    record(1, ok, f"x2 iterates {xs}, x1 iterates {ys} ({time.time() - t0:.3f}s)")
    assert ok


@pytest.fixture(scope="module")
def quartic_discover(tmp_path_factory):
    out = tmp_path_factory.mktemp("c2") / "w1"
    t0 = time.time()
    rc = cli.main(["discover", "--problem", "quartic_min", "--workers", "1", "--out", str(out)])
    assert rc == 0
    return out, time.time() - t0


@pytest.mark.xfail(strict=True, reason=COST_CONFLICT)
def test_criterion_2_steepest_descent_optimal(quartic_discover):
    import csv
    out, secs = quartic_discover
    with open(out / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 125
    sd = next(r for r in rows if r["algorithm"] == "nu=(0,1,0);beta=0")
    sd_cost = float(sd["cost"]) if sd["cost"] else float("inf")
    cheaper = [(r["algorithm"], float(r["cost"])) for r in rows
               if r["status"] == "feasible" and float(r["cost"]) < sd_cost]
    ok = sd["status"] == "feasible" and not cheaper and secs <= 600
    record(2, ok, f"nu=(0,1,0) {sd['status']} cost {sd['cost']}; {len(cheaper)} feasible algorithms "
                  f"strictly cheaper, e.g. {cheaper[:4]} ({secs:.0f}s)")
    assert ok


def test_criterion_3_rosenbrock():
    t0 = time.time()
    p = builtin("rosenbrock_min")
    sd = search_schedule(p, AlgorithmSpec("single", (0, 1, 0)))
    nt = search_schedule(p, AlgorithmSpec("single", (0, 1, -1)))
    secs = time.time() - t0
    ok = sd.status is not Status.FEASIBLE and nt.status is Status.FEASIBLE
    ok &= nt.best.it_con <= 20 and secs <= 900
    record(3, ok, f"steepest descent {sd.status.value} ({sd.nodes_expanded} nodes); "
                  f"Newton {nt.status.value} cost {nt.cost} it_con {nt.best and nt.best.it_con} ({secs:.0f}s)")
    assert ok


@pytest.mark.xfail(strict=True, reason=COST_CONFLICT)
def test_criterion_4_two_step_quad_2d():
    t0 = time.time()
    p = builtin("quad_2d")
    vs = discover(p, FamilyConfig(kind="two-step"), SearchConfig(), workers=WORKERS)
    secs = time.time() - t0
    feas = [v for v in vs if v.status is Status.FEASIBLE]
    nest = [v for v in feas if is_nesterov(v.algorithm)]
    ranks = competition_ranks(vs)
    best_nest = nest[0] if nest else None
    nest_rank = ranks[vs.index(best_nest)] if best_nest else None
    ok = len(feas) >= 5 and best_nest is not None and nest_rank == 1 and best_nest.best.it_con < 5
    cheapest = [(v.algorithm.label, v.cost) for v in feas[:3]]
    record(4, ok, f"{len(feas)} feasible; best Nesterov "
                  f"{best_nest.algorithm.label if best_nest else None} cost "
                  f"{best_nest.cost if best_nest else None} it_con "
                  f"{best_nest.best.it_con if best_nest else None} rank {nest_rank}; "
                  f"cheapest {cheapest} ({secs:.0f}s, {WORKERS} workers)")
    assert ok


@pytest.mark.xfail(strict=True, reason=COST_CONFLICT)
def test_criterion_5_ensemble_strongly_convex():
    t0 = time.time()
    p = builtin("strongly_convex_1d")
    fam = FamilyConfig(kind="two-step")
    base = discover(p, fam, SearchConfig(), workers=WORKERS)
    feas = [v for v in base if v.status is Status.FEASIBLE]
    shortlist = [v.algorithm for v in feas[:5]]
    nest = next((v.algorithm for v in feas if is_nesterov(v.algorithm)), None)
    in_short = nest in shortlist
    if nest is not None and not in_short:
        shortlist.append(nest)  # still measured, but the criterion already fails
    starts = ENSEMBLE_STARTS["strongly_convex_1d"]
    res = ensemble(p, starts, fam, SearchConfig(), shortlist=shortlist, workers=WORKERS)
    top5 = shortlist[:5]
    all_feasible = all(
        v.status is Status.FEASIBLE for ranked in res.per_start for v in ranked if v.algorithm in top5
    )
    nest_ranks = []
    for ranked in res.per_start:
        r = dict(zip([v.algorithm for v in ranked], competition_ranks(ranked)))
        nest_ranks.append(r.get(nest))
    ok = in_short and all_feasible and all(r is not None and r <= 2 for r in nest_ranks)
    secs = time.time() - t0
    record(5, ok, f"shortlist {[a.label for a in top5]}; Nesterov {nest.label if nest else None} "
                  f"in shortlist: {in_short}; shortlist feasible at all 17: {all_feasible}; "
                  f"Nesterov ranks {nest_ranks} ({secs:.0f}s)")
    assert ok


def test_criterion_6_oracle_equivalence():
    t0 = time.time()
    rng = random.Random(2024)
    cfg = SearchConfig(abar_max=2)
    table = step_choices(2)
    mismatches, n, n_feas = [], 0, 0
    for name in PRESET_NAMES:
        p = builtin(name).with_(it_max=3)
        algs = enumerate_algorithms(Family.SINGLE, p.j_max) + enumerate_algorithms(Family.TWO_STEP, p.j_max)
        for a in rng.sample(algs, 20):
            v = search_schedule(p, a, cfg)
            bf = brute_force(p, a, 2)
            n += 1
            if bf is None:
                same = v.status is Status.INFEASIBLE
            else:
                n_feas += 1
                got = (v.cost, v.best.it_con, tuple(table.index(s) for s in v.best.schedule)) \
                    if v.status is Status.FEASIBLE else None
                same = got == bf
            if not same:
                mismatches.append((name, a.label))
    secs = time.time() - t0
    ok = not mismatches and secs <= 120
    record(6, ok, f"{n} searches vs brute force, {n_feas} feasible, mismatches {mismatches} ({secs:.0f}s)")
    assert ok


def test_criterion_7_ad_vs_finite_differences():
    t0 = time.time()
    worst = 0.0
    for name in PRESET_NAMES:
        p = builtin(name)
        rng = np.random.default_rng(11)
        X = p.lo + (p.hi - p.lo) * rng.random((100, p.n))
        for e in p.exprs:
            _, g, H, st = evaluate_batch(e, X)
            assert not st.any()
            for i in range(p.n):
                h = 1e-5 * (p.hi[i] - p.lo[i])
                dx = np.zeros(p.n)
                dx[i] = h
                vp, gp, _, _ = evaluate_batch(e, X + dx, 1)
                vm, gm, _, _ = evaluate_batch(e, X - dx, 1)
                fd_g = (vp - vm) / (2 * h)
                fd_h = (gp - gm) / (2 * h)
                tol_g = np.maximum(1e-5 * np.abs(g).max(axis=1), 1e-8)
                tol_h = np.maximum(1e-5 * np.abs(H).max(axis=(1, 2)), 1e-8)
                worst = max(worst, (np.abs(g[:, i] - fd_g) / tol_g).max(),
                            (np.abs(H[:, :, i] - fd_h).max(axis=1) / tol_h).max())
    ok = worst <= 1.0
    record(7, ok, f"worst error / tolerance = {worst:.3f} over 100 points per preset ({time.time() - t0:.1f}s)")
    assert ok


def test_criterion_8_degeneracies():
    t0 = time.time()
    checks = {}
    # beta = 0 two-step is single-step, bit for bit, in searches and single steps
    same = True
    rng = np.random.default_rng(5)
    for name in PRESET_NAMES:
        p = builtin(name)
        algs = enumerate_algorithms(Family.SINGLE, p.j_max)
        for k in rng.choice(len(algs), 4, replace=False):
            a1 = algs[k]
            a2 = AlgorithmSpec("two-step", a1.nu, 0.0)
            v1 = search_schedule(p, a1, SearchConfig(node_budget=3000))
            v2 = search_schedule(p, a2, SearchConfig(node_budget=3000))
            same &= (v1.status, v1.cost, v1.nodes_expanded) == (v2.status, v2.cost, v2.nodes_expanded)
            if v1.best is not None:
                same &= all(np.array_equal(x, y) for x, y in zip(v1.best.points, v2.best.points))
            x = p.lo + (p.hi - p.lo) * rng.random(p.n)
            step = step_choices()[int(rng.integers(22))]
            try:
                s1 = advance_single(p, a1.nu, step, x)
                s2 = advance_two_step(p, a1.nu, step, 0.0, IterState(x, x + 1.0)).x
                same &= np.array_equal(s1, s2)
            except ArithmeticError:
                pass
    checks["beta0"] = same
    # nu = 0 gives the all-ones direction
    ones = True
    for name in PRESET_NAMES:
        p = builtin(name)
        X = p.lo + (p.hi - p.lo) * rng.random((50, p.n))
        d, st = direction_batch(p, (0,) * (p.j_max + 1), X)
        ones &= bool((d[st == 0] == 1.0).all())
    checks["ones"] = ones
    # converging iteration is uncounted
    v = search_schedule(builtin("quad_2d"), AlgorithmSpec("single", (0, 1, -1)))
    t = simulate(builtin("quartic_min"), AlgorithmSpec("single", (0, 1, 0)), parse_schedule("+1,+1"))
    checks["free"] = v.cost == 0.0 and v.best.it_con == 1 and t.iter_costs == [11.0, 0.0]
    # zero base to a negative power and singular matrices prune, never crash
    zb = search_schedule(builtin("cubic_root").with_(it_max=3), AlgorithmSpec("single", (0, -1, 0)),
                         start=(0.0,))
    sing = make_problem("min", ["(x1+x2)^2+x1"], [(-2, 2), (-2, 2)], [(0.5, 0.5)], it_max=3)
    sv = search_schedule(sing, AlgorithmSpec("single", (0, 1, -1)))
    checks["edges"] = ("step_error" in zb.proof_conditions and zb.status is Status.INFEASIBLE
                       and "step_error" in sv.proof_conditions and sv.status is Status.INFEASIBLE)
    ok = all(checks.values())
    record(8, ok, f"{checks} ({time.time() - t0:.1f}s)")
    assert ok


def test_criterion_9_determinism(quartic_discover, tmp_path):
    out1, _ = quartic_discover
    out2 = tmp_path / "w2"
    t0 = time.time()
    assert cli.main(["discover", "--problem", "quartic_min", "--workers", "2", "--out", str(out2)]) == 0
    same_csv = (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    same_json = (out1 / "results.json").read_bytes() == (out2 / "results.json").read_bytes()
    ok = same_csv and same_json
    record(9, ok, f"results.csv identical across 1 and 2 workers: {same_csv}; "
                  f"results.json identical: {same_json} ({time.time() - t0:.0f}s)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
