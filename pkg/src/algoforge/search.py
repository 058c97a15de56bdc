"""Trajectory simulation, exact step-schedule search, discovery and ensembles.

The schedule search is a uniform-cost tree search over per-iteration step
choices.  Nodes are grouped into buckets of equal path cost and each bucket is
expanded in vectorized chunks, cheapest bucket first.  Goal children (residual
within tolerance) are collected as incumbents; the search stops once the
cheapest open bucket costs more than the best incumbent, which makes the
returned schedule optimal under the total order (cost, depth, schedule).
"""

from __future__ import annotations

import enum
import heapq
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cost import CostMode, CostModel, base_cost, step_cost
from .expr import DOMAIN, OK, OVERFLOW
from .family import (
    SINGULAR,
    ZERO_BASE,
    AlgorithmSpec,
    Family,
    direction_batch,
    enumerate_algorithms,
    extrapolate,
    needed_order,
    step_choices,
)
from .problem import ProblemSpec

log = logging.getLogger(__name__)

CHUNK = 2048

_FAILURE = {
    DOMAIN: "domain error",
    OVERFLOW: "overflow",
    ZERO_BASE: "zero base with negative power",
    SINGULAR: "singular matrix",
}


class Status(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible-proven"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class SearchConfig:
    node_budget: int = 200_000
    monotone_residual: bool = False
    enforce_box: bool = True
    memoize_states: bool = False
    granularity: float = 1e-9
    abar_max: int = 10
    cost_mode: CostMode = CostMode.COUNTED
    # exact duplicate states; sound, unlike the rounded memo above
    dedupe_states: bool = True
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        object.__setattr__(self, "cost_mode", CostMode(self.cost_mode))
        if self.node_budget < 1:
            raise ValueError("node_budget must be at least 1")
        if not self.granularity > 0:
            raise ValueError("granularity must be positive")
        if self.abar_max < 0:
            raise ValueError("abar_max must be nonnegative")

    def as_dict(self) -> dict:
        return {
            "node_budget": self.node_budget,
            "monotone_residual": self.monotone_residual,
            "enforce_box": self.enforce_box,
            "memoize_states": self.memoize_states,
            "granularity": self.granularity,
            "abar_max": self.abar_max,
            "cost_mode": self.cost_mode.value,
            "dedupe_states": self.dedupe_states,
        }


@dataclass(frozen=True)
class FamilyConfig:
    kind: Family = Family.SINGLE
    j_max: int | None = None  # None: use the problem's j_max
    k_min: int = -2
    k_max: int = 2
    beta_grid: tuple = tuple(i / 8 for i in range(8))

    def algorithms(self, p: ProblemSpec) -> list[AlgorithmSpec]:
        j_max = p.j_max if self.j_max is None else self.j_max
        if j_max > p.j_max:
            raise ValueError(f"family j_max={j_max} exceeds problem j_max={p.j_max}")
        return enumerate_algorithms(Family(self.kind), j_max, self.k_min, self.k_max, self.beta_grid)

    def as_dict(self) -> dict:
        return {
            "kind": Family(self.kind).value,
            "j_max": self.j_max,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "beta_grid": list(self.beta_grid),
        }


@dataclass
class Trajectory:
    algorithm: AlgorithmSpec
    points: list
    residuals: list
    schedule: list
    counted: list
    iter_costs: list
    it_con: int | None
    total_cost: float
    feasible: bool
    failure: str | None = None


@dataclass
class Verdict:
    algorithm: AlgorithmSpec
    status: Status
    best: Trajectory | None
    nodes_expanded: int
    proof_conditions: list
    proven_optimal: bool = False
    prune_counts: dict = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return self.best.total_cost if self.best is not None else math.inf


def _beta_cost(a: AlgorithmSpec):
    return a.beta if a.kind is Family.TWO_STEP else None


def _edge_costs(a: AlgorithmSpec, cfg: SearchConfig, choices):
    base = base_cost(a.nu, cfg.cost_model)
    beta = _beta_cost(a)
    return np.array([step_cost(c.abar, base, beta) for c in choices])


# ---------------------------------------------------------------------------
# simulation


def simulate(p: ProblemSpec, a: AlgorithmSpec, schedule, cfg: SearchConfig | None = None,
             start=None) -> Trajectory:
    """Run ``a`` with a fixed step schedule, stopping at the first converged iterate.

    Evaluation failures and box exits end the trajectory as infeasible; the
    offending point is not recorded.
    """
    cfg = cfg or SearchConfig()
    schedule = list(schedule)
    if len(schedule) > p.it_max:
        raise ValueError(f"schedule has {len(schedule)} steps, it_max is {p.it_max}")
    if needed_order(a.nu) > p.j_max:
        raise ValueError(f"{a.label} needs derivatives beyond j_max={p.j_max}")
    x = np.asarray(p.initial_points[0] if start is None else start, dtype=float).reshape(-1)
    beta = a.beta if a.kind is Family.TWO_STEP else 0.0
    edge_beta = _beta_cost(a)
    base = base_cost(a.nu, cfg.cost_model)
    traj = Trajectory(a, [], [], [], [], [], None, 0.0, False)

    if cfg.enforce_box and not p.in_box(x):
        traj.failure = "start outside box"
        return traj
    res, st = p.residual_batch(x[None, :])
    if st[0] != OK:
        traj.failure = f"start: {_FAILURE[int(st[0])]}"
        return traj
    traj.points.append(x.copy())
    traj.residuals.append(float(res[0]))
    if res[0] <= p.epsilon:
        traj.it_con = 0
        traj.feasible = True
        return traj

    x_prev = x
    total = 0.0
    for it, step in enumerate(schedule, start=1):
        y = extrapolate(x, x_prev, beta)
        d, st = direction_batch(p, a.nu, y[None, :])
        if st[0] != OK:
            traj.failure = f"iteration {it}: {_FAILURE[int(st[0])]}"
            break
        xn = y + step.value * d[0]
        if cfg.enforce_box and not p.in_box_batch(xn[None, :])[0]:
            traj.failure = f"iteration {it}: box exit"
            break
        res, st = p.residual_batch(xn[None, :])
        if st[0] != OK:
            traj.failure = f"iteration {it}: {_FAILURE[int(st[0])]}"
            break
        r = float(res[0])
        counted = r > p.epsilon
        if cfg.cost_mode is CostMode.COUNTED:
            c = step_cost(step.abar, base, edge_beta) if counted else 0.0
        elif cfg.cost_mode is CostMode.COUNTED_INCLUSIVE:
            c = step_cost(step.abar, base, edge_beta)
        else:
            c = r * step_cost(step.abar, base, edge_beta)
        total += c
        traj.points.append(xn)
        traj.residuals.append(r)
        traj.schedule.append(step)
        traj.counted.append(counted)
        traj.iter_costs.append(c)
        x_prev, x = x, xn
        if not counted:
            traj.it_con = it
            traj.feasible = True
            break
    traj.total_cost = total
    return traj


# ---------------------------------------------------------------------------
# schedule search


def _row_keys(a):
    a = np.ascontiguousarray(a)
    return a.view(np.dtype((np.void, a.shape[1] * a.itemsize))).ravel().tolist()


class _NodeStore:
    def __init__(self, n, cap=4096):
        self.n = n
        self.size = 0
        self.x = np.empty((cap, n))
        self.parent = np.empty(cap, dtype=np.int64)
        self.choice = np.empty(cap, dtype=np.int16)
        self.depth = np.empty(cap, dtype=np.int16)
        self.cost = np.empty(cap)
        self.res = np.empty(cap)

    def _grow(self, need):
        cap = len(self.cost)
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        for name in ("x", "parent", "choice", "depth", "cost", "res"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def add(self, x, parent, choice, depth, cost, res):
        k = len(x)
        self._grow(self.size + k)
        sl = slice(self.size, self.size + k)
        self.x[sl] = x
        self.parent[sl] = parent
        self.choice[sl] = choice
        self.depth[sl] = depth
        self.cost[sl] = cost
        self.res[sl] = res
        ids = np.arange(self.size, self.size + k)
        self.size += k
        return ids

    def path(self, i) -> tuple:
        out = []
        while i != 0:
            out.append(int(self.choice[i]))
            i = int(self.parent[i])
        return tuple(reversed(out))


class _Search:
    def __init__(self, p, a, cfg, start):
        self.p = p
        self.a = a
        self.cfg = cfg
        self.x0 = np.asarray(p.initial_points[0] if start is None else start, dtype=float).reshape(-1)
        self.choices = step_choices(cfg.abar_max)
        self.alphas = np.array([c.value for c in self.choices])
        self.edge = _edge_costs(a, cfg, self.choices)
        self.beta = a.beta if a.kind is Family.TWO_STEP else 0.0
        self.store = _NodeStore(p.n)
        self.pruned = {}
        self.expanded = 0
        self.best = None  # (cost, depth, schedule)
        self.seen = {}
        self.memo = {}

    def prune(self, rule, count=1):
        if count:
            self.pruned[rule] = self.pruned.get(rule, 0) + int(count)

    def run(self):
        p, cfg = self.p, self.cfg
        if cfg.enforce_box and not p.in_box(self.x0):
            return self.finish(Status.INFEASIBLE, {"start_outside_box": 1})
        res, st = p.residual_batch(self.x0[None, :])
        if st[0] != OK:
            return self.finish(Status.INFEASIBLE, {"start_not_evaluable": 1})
        if res[0] <= p.epsilon:
            self.best = (0.0, 0, ())
            return self.finish(Status.FEASIBLE)
        self.store.add(self.x0[None, :], 0, -1, 0, 0.0, res[0])

        buckets = {0.0: [np.array([0])]}
        heap = [0.0]
        budget_hit = False
        while heap and not budget_hit:
            c = heapq.heappop(heap)
            if self.best is not None and c > self.best[0]:
                heap.append(c)
                break
            while c in buckets and not budget_hit:
                ids = np.concatenate(buckets.pop(c))
                ids = ids[np.argsort(self.store.depth[ids], kind="stable")]
                for lo in range(0, len(ids), CHUNK):
                    chunk = self.filter(ids[lo: lo + CHUNK], c)
                    room = cfg.node_budget - self.expanded
                    if len(chunk) > room:
                        chunk = chunk[:room]
                        budget_hit = True
                    if len(chunk):
                        self.expanded += len(chunk)
                        self.expand(chunk, c, buckets, heap)
                    if budget_hit:
                        break
                    if self.expanded >= cfg.node_budget and self._work_left(ids, lo, c, buckets, heap):
                        budget_hit = True
                        break
        if budget_hit:
            status = Status.FEASIBLE if self.best is not None else Status.UNKNOWN
            return self.finish(status, proven=False)
        if self.best is not None:
            return self.finish(Status.FEASIBLE)
        return self.finish(Status.INFEASIBLE)

    def _work_left(self, ids, lo, c, buckets, heap):
        if lo + CHUNK < len(ids) or c in buckets:
            return True
        return bool(heap) and (self.best is None or heap[0] <= self.best[0])

    def filter(self, ids, c):
        """Drop nodes that cannot beat the incumbent or are dominated duplicates."""
        st = self.store
        if self.best is not None and c == self.best[0]:
            keep = st.depth[ids] + 1 <= self.best[1]
            self.prune("incumbent_bound", np.count_nonzero(~keep))
            ids = ids[keep]
        if not (self.cfg.dedupe_states or self.cfg.memoize_states) or len(ids) == 0:
            return ids
        two = self.beta != 0.0
        state = st.x[ids]
        if two:
            state = np.hstack([state, st.x[st.parent[ids]]])
        keep = np.ones(len(ids), dtype=bool)
        ds = st.depth[ids].tolist()
        cs = st.cost[ids].tolist()
        idl = ids.tolist()
        if self.cfg.dedupe_states:
            seen = self.seen
            for j, key in enumerate(_row_keys(state)):
                entries = seen.get(key)
                if entries is None:
                    seen[key] = [(ds[j], cs[j], idl[j])]
                elif any(self._dominates(e, ds[j], cs[j], idl[j]) for e in entries):
                    keep[j] = False
                    self.prune("duplicate_state")
                else:
                    entries.append((ds[j], cs[j], idl[j]))
        if self.cfg.memoize_states:
            memo = self.memo
            grid = np.round(state / self.cfg.granularity)
            for j, key in enumerate(_row_keys(grid)):
                if not keep[j]:
                    continue
                key = (key, ds[j])
                prev = memo.get(key)
                if prev is not None and prev <= cs[j]:
                    keep[j] = False
                    self.prune("memoized_state")
                else:
                    memo[key] = cs[j]
        return ids[keep]

    def _dominates(self, entry, d, cost, i):
        ed, ec, ei = entry
        if ed > d or ec > cost:
            return False
        if ed < d or ec < cost:
            return True
        return self.store.path(ei) < self.store.path(i)

    def expand(self, ids, c, buckets, heap):
        p, cfg, st = self.p, self.cfg, self.store
        m, k, n = len(ids), len(self.alphas), p.n
        x = st.x[ids]
        y = extrapolate(x, st.x[st.parent[ids]], self.beta) if self.beta != 0.0 else x
        d, dst = direction_batch(p, self.a.nu, y)
        ok = dst == OK
        self.prune("step_error", np.count_nonzero(~ok) * k)
        child = y[:, None, :] + self.alphas[None, :, None] * d[:, None, :]
        child = child.reshape(m * k, n)
        valid = np.repeat(ok, k)
        if cfg.enforce_box:
            inb = p.in_box_batch(child)
            self.prune("box_exit", np.count_nonzero(valid & ~inb))
            valid &= inb
        res = np.full(m * k, np.inf)
        vi = np.flatnonzero(valid)
        if len(vi):
            r, rst = p.residual_batch(child[vi])
            bad = rst != OK
            self.prune("step_error", np.count_nonzero(bad))
            valid[vi[bad]] = False
            res[vi] = r
        parent_res = np.repeat(st.res[ids], k)
        goal = valid & (res <= p.epsilon)
        if cfg.monotone_residual:
            mono = res < parent_res
            self.prune("monotone_residual", np.count_nonzero(valid & ~mono))
            valid &= mono
            goal &= valid
        depth = np.repeat(st.depth[ids] + 1, k)
        open_ = valid & ~goal
        dead = open_ & (depth >= p.it_max)
        self.prune("depth_limit", np.count_nonzero(dead))
        open_ &= ~dead

        edge = np.tile(self.edge, m)
        if cfg.cost_mode is CostMode.COUNTED:
            edge = np.where(goal, 0.0, edge)
        elif cfg.cost_mode is CostMode.RESIDUAL_WEIGHTED:
            edge = res * edge
        cost = np.repeat(st.cost[ids], k) + edge
        choice = np.tile(np.arange(k), m)
        parent = np.repeat(ids, k)

        gi = np.flatnonzero(goal)
        if len(gi):
            self.offer_goals(cost[gi], depth[gi], parent[gi], choice[gi])
        if self.best is not None:
            bc, bd = self.best[0], self.best[1]
            over = open_ & ((cost > bc) | ((cost == bc) & (depth + 1 > bd)))
            self.prune("incumbent_bound", np.count_nonzero(over))
            open_ &= ~over
        oi = np.flatnonzero(open_)
        if not len(oi):
            return
        new = st.add(child[oi], parent[oi], choice[oi], depth[oi], cost[oi], res[oi])
        ncost = cost[oi]
        for cv in np.unique(ncost):
            cv = float(cv)
            sel = new[ncost == cv]
            if cv in buckets:
                buckets[cv].append(sel)
            else:
                buckets[cv] = [sel]
                if cv != c:
                    heapq.heappush(heap, cv)

    def offer_goals(self, cost, depth, parent, choice):
        order = np.lexsort((depth, cost))
        c0, d0 = cost[order[0]], depth[order[0]]
        if self.best is not None and (c0, d0) > self.best[:2]:
            return
        tied = order[(cost[order] == c0) & (depth[order] == d0)]
        for t in tied:
            sched = self.store.path(int(parent[t])) + (int(choice[t]),)
            cand = (float(c0), int(d0), sched)
            if self.best is None or cand < self.best:
                self.best = cand

    def finish(self, status, extra=None, proven=True):
        pruned = dict(self.pruned)
        if extra:
            pruned.update(extra)
        best = None
        if self.best is not None:
            sched = [self.choices[i] for i in self.best[2]]
            best = simulate(self.p, self.a, sched, self.cfg, start=self.x0)
            if not best.feasible or best.total_cost != self.best[0]:
                raise RuntimeError(
                    f"replay mismatch for {self.a.label}: search cost {self.best[0]!r}, "
                    f"replay cost {best.total_cost!r}, feasible={best.feasible}"
                )
        return Verdict(
            algorithm=self.a,
            status=status,
            best=best,
            nodes_expanded=self.expanded,
            proof_conditions=sorted(pruned),
            proven_optimal=status is Status.FEASIBLE and proven,
            prune_counts={k: pruned[k] for k in sorted(pruned)},
        )


def search_schedule(p: ProblemSpec, a: AlgorithmSpec, cfg: SearchConfig | None = None,
                    start=None) -> Verdict:
    """Minimum-cost feasible step schedule for algorithm ``a`` on ``p``.

    Returns a :class:`Verdict`: ``FEASIBLE`` with the optimal trajectory,
    ``INFEASIBLE`` when the tree is exhausted under the pruning rules listed in
    ``proof_conditions``, or ``UNKNOWN`` when ``node_budget`` expansions run
    out first.  A budget cutoff after an incumbent was found still reports
    ``FEASIBLE`` but with ``proven_optimal`` False.
    """
    cfg = cfg or SearchConfig()
    if needed_order(a.nu) > p.j_max:
        raise ValueError(f"{a.label} needs derivatives beyond j_max={p.j_max}")
    return _Search(p, a, cfg, start).run()


# ---------------------------------------------------------------------------
# discovery and ensembles


def _search_job(args):
    p, a, cfg, start = args
    return search_schedule(p, a, cfg, start)


def rank_verdicts(verdicts):
    """Feasible first, then cost, then the input (enumeration) order."""
    order = sorted(
        range(len(verdicts)),
        key=lambda i: (verdicts[i].status is not Status.FEASIBLE, verdicts[i].cost, i),
    )
    return [verdicts[i] for i in order]


def run_searches(p, algorithms, cfg, start=None, workers=1, progress=None):
    jobs = [(p, a, cfg, start) for a in algorithms]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = []
            for v in pool.map(_search_job, jobs, chunksize=1):
                out.append(v)
                if progress:
                    progress(v)
            return out
    out = []
    for job in jobs:
        v = _search_job(job)
        out.append(v)
        if progress:
            progress(v)
    return out


def discover(p: ProblemSpec, family: FamilyConfig | None = None, cfg: SearchConfig | None = None,
             start=None, workers: int = 1, progress=None) -> list[Verdict]:
    """Search every algorithm of the family and rank the verdicts."""
    family = family or FamilyConfig()
    cfg = cfg or SearchConfig()
    algorithms = family.algorithms(p)
    return rank_verdicts(run_searches(p, algorithms, cfg, start, workers, progress))


def competition_ranks(verdicts) -> list:
    """1-based rank by cost among feasible verdicts (ties share a rank); None if infeasible."""
    costs = [v.cost for v in verdicts]
    ranks = []
    for v in verdicts:
        if v.status is not Status.FEASIBLE:
            ranks.append(None)
        else:
            ranks.append(1 + sum(1 for o, c in zip(verdicts, costs)
                                 if o.status is Status.FEASIBLE and c < v.cost))
    return ranks


@dataclass
class EnsembleResult:
    starts: list
    algorithms: list
    per_start: list  # per start: ranked list of verdicts
    aggregate: list  # per algorithm dicts


def ensemble(p: ProblemSpec, starts, family: FamilyConfig | None = None,
             cfg: SearchConfig | None = None, shortlist=None, workers: int = 1,
             progress=None) -> EnsembleResult:
    """Discover (or re-verify ``shortlist``) from every start and aggregate ranks."""
    cfg = cfg or SearchConfig()
    starts = [tuple(float(v) for v in s) for s in starts]
    for s in starts:
        if len(s) != p.n:
            raise ValueError(f"start {s} has wrong dimension")
        if not p.in_box(s):
            raise ValueError(f"start {s} lies outside the box")
    algorithms = list(shortlist) if shortlist is not None else (family or FamilyConfig()).algorithms(p)
    per_start = []
    stats = {a: {"n_feasible": 0, "n_cheapest": 0, "costs": []} for a in algorithms}
    for s in starts:
        verdicts = run_searches(p, algorithms, cfg, s, workers, progress)
        ranked = rank_verdicts(verdicts)
        per_start.append(ranked)
        for v, r in zip(ranked, competition_ranks(ranked)):
            if r is None:
                continue
            st = stats[v.algorithm]
            st["n_feasible"] += 1
            st["costs"].append(v.cost)
            if r == 1:
                st["n_cheapest"] += 1
    aggregate = []
    for a in algorithms:
        st = stats[a]
        costs = st["costs"]
        aggregate.append({
            "algorithm": a.label,
            "n_feasible": st["n_feasible"],
            "n_cheapest": st["n_cheapest"],
            "mean_cost": (sum(costs) / len(costs)) if costs else None,
        })
    return EnsembleResult(starts, algorithms, per_start, aggregate)
