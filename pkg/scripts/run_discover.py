"""Discover the cheapest algorithms for a preset and print the top of the ranking.

    python scripts/run_discover.py quartic_min --family single
    python scripts/run_discover.py quad_2d --family two-step --workers 4
"""

import argparse
import collections
import time

from algoforge import builtin
from algoforge.cost import CostMode
from algoforge.family import format_schedule
from algoforge.problem import PRESET_NAMES
from algoforge.search import FamilyConfig, SearchConfig, competition_ranks, discover


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem", choices=PRESET_NAMES)
    ap.add_argument("--family", default="single", choices=["single", "two-step"])
    ap.add_argument("--cost-mode", default="counted", choices=[m.value for m in CostMode])
    ap.add_argument("--budget", type=int, default=200_000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--top", type=int, default=15)
    args = ap.parse_args()

    p = builtin(args.problem)
    cfg = SearchConfig(node_budget=args.budget, cost_mode=args.cost_mode)
    t0 = time.time()
    vs = discover(p, FamilyConfig(kind=args.family), cfg, workers=args.workers)
    print(f"{len(vs)} algorithms in {time.time() - t0:.1f}s;",
          dict(collections.Counter(v.status.value for v in vs)))
    for v, r in list(zip(vs, competition_ranks(vs)))[:args.top]:
        sched = format_schedule(v.best.schedule) if v.best else ""
        it_con = v.best.it_con if v.best else ""
        print(f"{r!s:>4} {v.algorithm.label:<28} {v.status.value:<18} {v.cost:<10g} {it_con!s:>3} {sched}")


if __name__ == "__main__":
    main()
