"""Initial-condition study: shortlist the cheapest algorithms from the preset's
default start, then re-search each of them from every ensemble start.

    python scripts/run_ensemble.py strongly_convex_1d --shortlist 5
"""

import argparse
import time

from algoforge import builtin
from algoforge.problem import ENSEMBLE_STARTS
from algoforge.search import FamilyConfig, SearchConfig, Status, competition_ranks, discover, ensemble


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem", choices=sorted(ENSEMBLE_STARTS))
    ap.add_argument("--family", default="two-step", choices=["single", "two-step"])
    ap.add_argument("--shortlist", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    p = builtin(args.problem)
    fam, cfg = FamilyConfig(kind=args.family), SearchConfig()
    t0 = time.time()
    base = discover(p, fam, cfg, workers=args.workers)
    short = [v.algorithm for v in base if v.status is Status.FEASIBLE][:args.shortlist]
    print("shortlist:", ", ".join(a.label for a in short), f"({time.time() - t0:.0f}s)")

    res = ensemble(p, ENSEMBLE_STARTS[args.problem], fam, cfg, shortlist=short, workers=args.workers)
    for s, ranked in zip(res.starts, res.per_start):
        cells = [f"{v.algorithm.label}:{r}" for v, r in zip(ranked, competition_ranks(ranked))]
        print(s, " ".join(cells))
    print()
    for row in res.aggregate:
        print(f"{row['algorithm']:<28} feasible {row['n_feasible']:>3} cheapest {row['n_cheapest']:>3} "
              f"mean cost {row['mean_cost']}")
    print(f"total {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
