"""Cost accounting for algorithm runs.

An iteration whose resulting iterate still violates the residual tolerance is
"counted" and pays ``abar + base_cost(nu) (+ beta for two-step)``.  The
iteration that first meets the tolerance is free, so an algorithm that
converges in a single step costs nothing.  The residual-weighted mode instead
charges every executed iteration, scaled by the residual of its result.
``counted-inclusive`` is an analysis variant that also charges the converging
iteration at full price.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

DEFAULT_EXPONENT_COST = {0: 0.0, 1: 1.0, 2: 1.5, -1: 2.0, -2: 3.0}
DEFAULT_ORDER_WEIGHT = {0: 1.0, 1: 10.0, 2: 100.0}


class CostMode(str, enum.Enum):
    COUNTED = "counted"
    RESIDUAL_WEIGHTED = "residual-weighted"
    COUNTED_INCLUSIVE = "counted-inclusive"


@dataclass(frozen=True)
class CostModel:
    exponent_cost: dict = field(default_factory=lambda: dict(DEFAULT_EXPONENT_COST))
    order_weight: dict = field(default_factory=lambda: dict(DEFAULT_ORDER_WEIGHT))

    def __post_init__(self):
        ec = {int(k): float(v) for k, v in self.exponent_cost.items()}
        ow = {int(k): float(v) for k, v in self.order_weight.items()}
        if ec.get(0, 0.0) != 0.0:
            raise ValueError("exponent 0 must be free")
        ec[0] = 0.0
        if any(v < 0 for v in ec.values()):
            raise ValueError("exponent costs must be nonnegative")
        if any(not v > 0 for v in ow.values()):
            raise ValueError("order weights must be positive")
        object.__setattr__(self, "exponent_cost", ec)
        object.__setattr__(self, "order_weight", ow)

    def as_dict(self) -> dict:
        return {
            "exponent_cost": {str(k): v for k, v in sorted(self.exponent_cost.items())},
            "order_weight": {str(k): v for k, v in sorted(self.order_weight.items())},
        }


def base_cost(nu, m: CostModel = CostModel()) -> float:
    """Derivative-usage cost of one counted iteration: sum_j weight[j] * cost[nu[j]]."""
    total = 0.0
    for j, k in enumerate(nu):
        if k not in m.exponent_cost:
            raise ValueError(f"exponent {k} has no cost entry")
        if j not in m.order_weight:
            raise ValueError(f"derivative order {j} has no weight")
        total += m.order_weight[j] * m.exponent_cost[k]
    return total


def step_cost(abar: int, base: float, beta) -> float:
    """Cost of a counted iteration given a precomputed base cost."""
    c = float(abar) + base
    if beta is not None:
        c = c + beta
    return c


def iteration_cost(nu, alpha, beta, counted: bool, m: CostModel = CostModel()) -> float:
    """``beta`` is ``None`` for single-step algorithms."""
    if not counted:
        return 0.0
    return step_cost(alpha.abar, base_cost(nu, m), beta)


def schedule_cost(traj, m: CostModel = CostModel(), mode=CostMode.COUNTED,
                  nu=None, beta=None) -> float:
    """Total cost of a trajectory, recomputed from its schedule and residuals.

    ``nu`` and ``beta`` default to the trajectory's algorithm.
    """
    mode = CostMode(mode)
    if nu is None:
        nu = traj.algorithm.nu
    if beta is None and traj.algorithm is not None and traj.algorithm.kind.value == "two-step":
        beta = traj.algorithm.beta
    base = base_cost(nu, m)
    total = 0.0
    for it, step in enumerate(traj.schedule, start=1):
        if mode is CostMode.COUNTED:
            if traj.counted[it - 1]:
                total += step_cost(step.abar, base, beta)
        elif mode is CostMode.COUNTED_INCLUSIVE:
            total += step_cost(step.abar, base, beta)
        else:
            total += traj.residuals[it] * step_cost(step.abar, base, beta)
    return total
