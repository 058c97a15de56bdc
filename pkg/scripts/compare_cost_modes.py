"""Rank a fixed set of algorithms under each cost mode.

Shows how much the ranking depends on whether the converging iteration is
charged.  Example:

    python scripts/compare_cost_modes.py quartic_min "nu=(0,1,0)" "nu=(2,0,0)" "nu=(0,1,-1)"
"""

import argparse

from algoforge import builtin
from algoforge.cost import CostMode
from algoforge.family import format_schedule, parse_algorithm
from algoforge.problem import PRESET_NAMES
from algoforge.search import SearchConfig, search_schedule


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem", choices=PRESET_NAMES)
    ap.add_argument("algorithms", nargs="+")
    ap.add_argument("--budget", type=int, default=200_000)
    args = ap.parse_args()

    p = builtin(args.problem)
    algs = [parse_algorithm(a) for a in args.algorithms]
    for mode in CostMode:
        cfg = SearchConfig(node_budget=args.budget, cost_mode=mode)
        print(f"[{mode.value}]")
        rows = []
        for a in algs:
            v = search_schedule(p, a, cfg)
            sched = format_schedule(v.best.schedule) if v.best else ""
            rows.append((v.cost, a.label, v.status.value, sched))
        for cost, label, status, sched in sorted(rows, key=lambda r: r[0]):
            print(f"  {label:<28} {status:<18} {cost:<10g} {sched}")


if __name__ == "__main__":
    main()
