"""Command-line front end.

Subcommands: discover, run, ensemble, grid, list-problems.  Every command
resolves one effective configuration (defaults < JSON config < flags), checks
it before touching the output directory, and writes deterministic CSV/JSON
reports.  Exit codes: 0 success, 2 user or config error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import traceback
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .cost import CostMode, CostModel
from .expr import EvaluationError, ParseError
from .family import Family, format_schedule, parse_algorithm, parse_schedule
from .problem import ENSEMBLE_STARTS, PRESET_NAMES, ProblemSpec, builtin, make_problem
from .search import (
    FamilyConfig,
    SearchConfig,
    Status,
    competition_ranks,
    discover,
    ensemble,
    simulate,
)

log = logging.getLogger("algoforge")

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3
DEFAULT_OUT = "algoforge_out"


class UsageError(Exception):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("algoforge").joinpath("config.schema.json").read_text())


# ---------------------------------------------------------------------------
# formatting


def fmt(v) -> str:
    """Shortest round-trip text for floats; blanks for None."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def fmt_cost(c) -> str:
    s = repr(float(c))
    return s[:-2] if s.endswith(".0") else s


def json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])
    write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    problem: ProblemSpec
    family: FamilyConfig
    search: SearchConfig
    output_dir: Path
    workers: int = 1
    starts: list | None = None
    shortlist: object = None

    def effective(self) -> dict:
        """Result-determining settings, in the same shape the config file accepts."""
        d = {
            "problem": problem_to_config(self.problem),
            "family": self.family.as_dict(),
            "search": self.search.as_dict(),
            "cost": self.search.cost_model.as_dict(),
        }
        d["family"]["j_max"] = self.family.j_max if self.family.j_max is not None else self.problem.j_max
        return d


def problem_to_config(p: ProblemSpec) -> dict:
    return {
        "name": p.name,
        "kind": p.kind.value,
        "exprs": [e.text for e in p.exprs],
        "box": [[lo, hi] for lo, hi in zip(p.box_lo, p.box_hi)],
        "initial_points": [list(x) for x in p.initial_points],
        "epsilon": p.epsilon,
        "it_max": p.it_max,
        "j_max": p.j_max,
    }


def _problem_from(obj) -> ProblemSpec:
    if isinstance(obj, str):
        try:
            return builtin(obj)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    kw = dict(obj)
    return make_problem(
        kw.pop("kind"), kw.pop("exprs"), [tuple(b) for b in kw.pop("box")],
        [tuple(x) for x in kw.pop("initial_points")], **kw,
    )


def _parse_floats(text: str, what: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad {what} {text!r}") from None


def _parse_starts(text: str):
    return [_parse_floats(part, "start") for part in text.split(";") if part.strip()]


def read_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from None
    try:
        jsonschema.validate(data, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"invalid config {path} at {where}: {exc.message}") from None
    return data


def resolve(args) -> RunConfig:
    data = read_config_file(args.config) if getattr(args, "config", None) else {}

    problem = args.problem if args.problem is not None else data.get("problem")
    if problem is None:
        raise UsageError("no problem given (use --problem or a config file)")
    p = _problem_from(problem)
    changes = {}
    for key, flag in (("epsilon", "eps"), ("it_max", "itmax")):
        v = getattr(args, flag, None)
        if v is None:
            v = data.get(key)
        if v is not None:
            changes[key] = v
    if changes:
        p = p.with_(**changes)

    fam = dict(data.get("family", {}))
    if getattr(args, "family", None):
        fam["kind"] = args.family
    if getattr(args, "jmax", None) is not None:
        fam["j_max"] = args.jmax
    if getattr(args, "beta_grid", None):
        fam["beta_grid"] = _parse_floats(args.beta_grid, "beta grid")
    if "beta_grid" in fam:
        if any(not 0 <= b < 1 for b in fam["beta_grid"]):
            raise UsageError("beta values must lie in [0, 1)")
        fam["beta_grid"] = tuple(float(b) for b in fam["beta_grid"])
    if "kind" in fam:
        fam["kind"] = Family(fam["kind"])
    family = FamilyConfig(**fam)
    family.algorithms(p)  # surfaces j_max / range errors early

    s = dict(data.get("search", {}))
    if getattr(args, "budget", None) is not None:
        s["node_budget"] = args.budget
    if getattr(args, "monotone_residual", False):
        s["monotone_residual"] = True
    if getattr(args, "no_box", False):
        s["enforce_box"] = False
    if getattr(args, "cost_mode", None):
        s["cost_mode"] = args.cost_mode
    if "cost_mode" in s:
        s["cost_mode"] = CostMode(s["cost_mode"])
    cost = data.get("cost", {})
    if cost:
        base = CostModel()
        ec = dict(base.exponent_cost)
        ec.update({int(k): v for k, v in cost.get("exponent_cost", {}).items()})
        ow = dict(base.order_weight)
        ow.update({int(k): v for k, v in cost.get("order_weight", {}).items()})
        s["cost_model"] = CostModel(ec, ow)
    search = SearchConfig(**s)

    out = getattr(args, "out", None) or data.get("output_dir") or os.environ.get("ALGOFORGE_OUT") or DEFAULT_OUT
    workers = getattr(args, "workers", None) or data.get("workers") or 1
    if workers < 1:
        raise UsageError("--workers must be at least 1")

    starts = None
    if getattr(args, "starts", None):
        starts = _parse_starts(args.starts)
    elif "starts" in data:
        starts = data["starts"]
    shortlist = getattr(args, "shortlist", None)
    if shortlist is None:
        shortlist = data.get("shortlist")
    elif shortlist.isdigit():
        shortlist = int(shortlist)
    else:
        shortlist = [t for t in shortlist.split("|") if t.strip()]
    return RunConfig(p, family, search, Path(out), workers, starts, shortlist)


# ---------------------------------------------------------------------------
# reports


TRAJ_HEADER_TAIL = ["residual", "abar", "sign", "counted", "iter_cost"]


def trajectory_rows(traj, n):
    rows = []
    for it, (x, r) in enumerate(zip(traj.points, traj.residuals)):
        if it == 0:
            rows.append([it, *map(float, x), r, "", "", "", ""])
        else:
            s = traj.schedule[it - 1]
            rows.append([it, *map(float, x), r, s.abar, s.sign, traj.counted[it - 1], traj.iter_costs[it - 1]])
    return rows


def write_trajectory(path: Path, traj, n):
    header = ["it"] + [f"x{i + 1}" for i in range(n)] + TRAJ_HEADER_TAIL
    write_csv(path, header, trajectory_rows(traj, n))


def trajectory_file(a) -> str:
    return "nu_" + "_".join(str(k) for k in a.nu) + "_beta_" + fmt(a.beta) + ".csv"


def verdict_record(v, rank) -> dict:
    t = v.best
    return {
        "rank": rank,
        "algorithm": v.algorithm.label,
        "kind": v.algorithm.kind.value,
        "nu": list(v.algorithm.nu),
        "beta": v.algorithm.beta,
        "status": v.status.value,
        "cost": json_float(v.cost),
        "it_con": t.it_con if t else None,
        "nodes_expanded": v.nodes_expanded,
        "proven_optimal": v.proven_optimal,
        "proof_conditions": list(v.proof_conditions),
        "prune_counts": dict(v.prune_counts),
        "schedule": format_schedule(t.schedule) if t else None,
        "trajectory": None if t is None else {
            "points": [[float(c) for c in x] for x in t.points],
            "residuals": [float(r) for r in t.residuals],
            "iter_costs": [float(c) for c in t.iter_costs],
            "counted": list(t.counted),
        },
    }


RESULTS_HEADER = ["rank", "algorithm", "status", "cost", "it_con", "nodes_expanded", "schedule"]


def results_rows(verdicts):
    rows = []
    for i, v in enumerate(verdicts, start=1):
        t = v.best
        rows.append([
            i, v.algorithm.label, v.status.value,
            v.cost if t else None, t.it_con if t else None, v.nodes_expanded,
            format_schedule(t.schedule) if t else "",
        ])
    return rows


# ---------------------------------------------------------------------------
# commands


def _progress(total):
    count = [0]

    def cb(v):
        count[0] += 1
        log.info("[%d/%d] %s: %s cost=%s nodes=%d", count[0], total, v.algorithm.label,
                 v.status.value, fmt_cost(v.cost), v.nodes_expanded)
    return cb


def cmd_discover(args) -> int:
    rc = resolve(args)
    algs = rc.family.algorithms(rc.problem)
    verdicts = discover(rc.problem, rc.family, rc.search, workers=rc.workers, progress=_progress(len(algs)))
    out = rc.output_dir
    report = {
        "command": "discover",
        "config": rc.effective(),
        "results": [verdict_record(v, i) for i, v in enumerate(verdicts, start=1)],
    }
    write_text(out / "results.json", dump_json(report))
    write_csv(out / "results.csv", RESULTS_HEADER, results_rows(verdicts))
    for v in verdicts:
        if v.status is Status.FEASIBLE:
            write_trajectory(out / "trajectories" / trajectory_file(v.algorithm), v.best, rc.problem.n)
    n_feas = sum(v.status is Status.FEASIBLE for v in verdicts)
    print(f"{len(verdicts)} algorithms searched, {n_feas} feasible; reports in {out}")
    if n_feas:
        b = verdicts[0]
        print(f"cheapest: {b.algorithm.label} cost {fmt_cost(b.cost)} schedule {format_schedule(b.best.schedule)}")
    return EXIT_OK


def cmd_run(args) -> int:
    rc = resolve(args)
    try:
        a = parse_algorithm(args.algorithm)
        sched = parse_schedule(args.schedule or "")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    p = rc.problem
    if len(sched) > p.it_max:
        raise UsageError(f"schedule has {len(sched)} steps but it_max is {p.it_max}")
    start = rc.starts[0] if rc.starts else None
    if start is not None and len(start) != p.n:
        raise UsageError("start has the wrong dimension")
    traj = simulate(p, a, sched, rc.search, start=start)
    out = rc.output_dir
    write_trajectory(out / "trajectory.csv", traj, p.n)
    status = "feasible" if traj.feasible else "infeasible"
    lines = [
        f"problem: {p.name}",
        f"algorithm: {a.label}",
        f"schedule: {format_schedule(sched)}",
        f"{status}, cost {fmt_cost(traj.total_cost)}",
        f"it_con: {'' if traj.it_con is None else traj.it_con}",
        f"iterations executed: {len(traj.schedule)}",
        f"final residual: {fmt(traj.residuals[-1]) if traj.residuals else ''}",
    ]
    if traj.failure:
        lines.append(f"failure: {traj.failure}")
    text = "\n".join(lines) + "\n"
    write_text(out / "summary.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_ensemble(args) -> int:
    rc = resolve(args)
    p = rc.problem
    starts = rc.starts
    if starts is None:
        starts = ENSEMBLE_STARTS.get(p.name, [list(x) for x in p.initial_points])
    try:
        starts = [tuple(float(v) for v in s) for s in starts]
        for s in starts:
            if len(s) != p.n or not p.in_box(s):
                raise ValueError(f"start {s} has the wrong dimension or lies outside the box")
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    shortlist = rc.shortlist
    if isinstance(shortlist, int):
        base = discover(p, rc.family, rc.search, workers=rc.workers)
        shortlist = [v.algorithm for v in base if v.status is Status.FEASIBLE][:shortlist]
        if not shortlist:
            raise UsageError("base run found no feasible algorithm to shortlist")
        log.info("shortlist: %s", ", ".join(a.label for a in shortlist))
    elif shortlist is not None:
        try:
            shortlist = [parse_algorithm(t, rc.family.kind) for t in shortlist]
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    res = ensemble(p, starts, rc.family, rc.search, shortlist=shortlist, workers=rc.workers)
    out = rc.output_dir
    header = ["start"] + [f"x{i + 1}" for i in range(p.n)] + ["algorithm", "status", "cost", "it_con", "rank"]
    rows = []
    for si, (s, ranked) in enumerate(zip(res.starts, res.per_start)):
        for v, r in zip(ranked, competition_ranks(ranked)):
            t = v.best
            rows.append([si, *s, v.algorithm.label, v.status.value,
                         v.cost if t else None, t.it_con if t else None, r])
    write_csv(out / "ensemble.csv", header, rows)
    write_csv(out / "aggregate.csv", ["algorithm", "n_feasible", "n_cheapest", "mean_cost"],
              [[a["algorithm"], a["n_feasible"], a["n_cheapest"], a["mean_cost"]] for a in res.aggregate])
    cfg = rc.effective()
    cfg["starts"] = [list(s) for s in res.starts]
    cfg["shortlist"] = [a.label for a in res.algorithms] if shortlist is not None else None
    write_text(out / "ensemble.json", dump_json({"command": "ensemble", "config": cfg, "aggregate": res.aggregate}))
    print(f"{len(res.starts)} starts x {len(res.algorithms)} algorithms; reports in {out}")
    return EXIT_OK


def cmd_grid(args) -> int:
    rc = resolve(args)
    p = rc.problem
    if p.n != 2:
        raise UsageError(f"grid needs a 2-D problem, {p.name} has n={p.n}")
    k = args.resolution
    if k < 2:
        raise UsageError("--resolution must be at least 2")
    g1 = np.linspace(p.box_lo[0], p.box_hi[0], k)
    g2 = np.linspace(p.box_lo[1], p.box_hi[1], k)
    pts = np.array([(a, b) for a in g1 for b in g2])
    f, st = p.objective_batch(pts)
    rows = [[a, b, None if s else v] for (a, b), v, s in zip(pts.tolist(), f.tolist(), st.tolist())]
    write_csv(rc.output_dir / "grid.csv", ["x1", "x2", "f"], rows)
    print(f"{len(rows)} grid points written to {rc.output_dir / 'grid.csv'}")
    return EXIT_OK


def cmd_list_problems(args) -> int:
    for name in PRESET_NAMES:
        p = builtin(name)
        box = " x ".join(f"[{fmt_cost(lo)},{fmt_cost(hi)}]" for lo, hi in zip(p.box_lo, p.box_hi))
        start = "(" + ",".join(fmt_cost(v) for v in p.initial_points[0]) + ")"
        print(f"{name}: {p.kind.value} n={p.n} box={box} start={start} "
              f"it_max={p.it_max} eps={fmt(p.epsilon)} j_max={p.j_max}")
        for e in p.exprs:
            print(f"    {e.text}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common(sp, family=True):
    sp.add_argument("--problem", help="preset name (see list-problems)")
    sp.add_argument("--config", help="JSON run configuration")
    sp.add_argument("--eps", type=float, help="residual tolerance")
    sp.add_argument("--itmax", type=int, help="maximum number of iterations")
    sp.add_argument("--out", help="output directory (default $ALGOFORGE_OUT or ./algoforge_out)")
    if family:
        sp.add_argument("--family", choices=[f.value for f in Family])
        sp.add_argument("--jmax", type=int, choices=[1, 2])
        sp.add_argument("--beta-grid", help="comma-separated momentum values, e.g. 0,0.125,0.25")
        sp.add_argument("--budget", type=int, help="node expansions per algorithm search")
        sp.add_argument("--monotone-residual", action="store_true")
        sp.add_argument("--no-box", action="store_true", help="do not prune iterates leaving the box")
        sp.add_argument("--cost-mode", choices=[m.value for m in CostMode])
        sp.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="algoforge", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("discover", help="search every algorithm of a family")
    _common(sp)
    sp.set_defaults(func=cmd_discover)

    sp = sub.add_parser("run", help="replay one algorithm with a fixed schedule")
    _common(sp)
    sp.add_argument("--algorithm", required=True, help="e.g. 'nu=(1,1,-1);beta=0'")
    sp.add_argument("--schedule", default="", help="e.g. '-0,-0,-0'")
    sp.add_argument("--start", dest="starts", help="comma-separated start overriding the problem's")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ensemble", help="repeat discovery over several starting points")
    _common(sp)
    sp.add_argument("--starts", help="';'-separated starts, e.g. '0,1;1,0'")
    sp.add_argument("--shortlist", help="N cheapest of a base run, or '|'-separated algorithm strings")
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("grid", help="sample the objective on a 2-D grid over the box")
    _common(sp, family=False)
    sp.add_argument("--resolution", type=int, default=50)
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("list-problems", help="show the built-in presets")
    sp.set_defaults(func=cmd_list_problems)
    return ap


# values that may start with '-' (schedules, negative coordinates)
_DASH_VALUED = ("--schedule", "--start", "--starts", "--beta-grid")


def _glue(argv):
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _DASH_VALUED:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ParseError, ValueError, KeyError, EvaluationError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        traceback.print_exc()
        print("internal error", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
