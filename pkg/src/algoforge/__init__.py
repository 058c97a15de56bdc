"""Search a monomial family of iterative solvers for cheap step schedules."""

from .cost import CostMode, CostModel, base_cost, iteration_cost, schedule_cost
from .expr import Expression, eval_taylor2, evaluate, evaluate_batch, parse
from .family import (
    AlgorithmSpec,
    Family,
    StepChoice,
    enumerate_algorithms,
    format_schedule,
    parse_algorithm,
    parse_schedule,
    step_choices,
)
from .problem import PRESET_NAMES, Kind, ProblemSpec, builtin, make_problem
from .search import (
    FamilyConfig,
    SearchConfig,
    Status,
    Trajectory,
    Verdict,
    discover,
    ensemble,
    search_schedule,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSpec", "CostMode", "CostModel", "Expression", "Family", "FamilyConfig", "Kind",
    "PRESET_NAMES", "ProblemSpec", "SearchConfig", "Status", "StepChoice", "Trajectory", "Verdict",
    "base_cost", "builtin", "discover", "ensemble", "enumerate_algorithms", "eval_taylor2",
    "evaluate", "evaluate_batch", "format_schedule", "iteration_cost", "make_problem",
    "parse", "parse_algorithm", "parse_schedule", "schedule_cost", "search_schedule",
    "simulate", "step_choices",
]
