import pytest
from hypothesis import given
from hypothesis import strategies as st

from algoforge.cost import CostMode, CostModel, base_cost, iteration_cost, schedule_cost
from algoforge.family import AlgorithmSpec, StepChoice, parse_schedule
from algoforge.problem import builtin
from algoforge.search import SearchConfig, Trajectory, simulate


def _traj(nu, sched, residuals, counted, beta=None):
    kind = "two-step" if beta is not None else "single"
    a = AlgorithmSpec(kind, nu, beta or 0.0)
    return Trajectory(a, [None] * len(residuals), residuals, parse_schedule(sched), counted,
                      [], None, 0.0, True)


def test_base_cost_examples():
    assert base_cost((1, -1, 0)) == 21
    assert base_cost((0, 1, 0)) == 10
    assert base_cost((0, 0, 0)) == 0
    assert base_cost((2, -2, 1)) == 1.5 + 30 + 100
    assert base_cost((1, -1)) == 21


def test_iteration_cost_examples():
    assert iteration_cost((1, -1, 0), StepChoice(-1, 0), None, True) == 21
    assert iteration_cost((2, 2, 2), StepChoice(1, 7), 0.5, False) == 0
    assert iteration_cost((0, 1, 0), StepChoice(-1, 1), 0.5, True) == 11.5


def test_schedule_cost_examples():
    t = _traj((1, -1, 0), "-0,-1,-0", [1, 0.5, 0.2, 0.1], [True, True, True])
    assert schedule_cost(t) == 64
    t = _traj((0, 1, 0), "-3", [1.0, 1e-4], [False])
    assert schedule_cost(t) == 0
    t = _traj((0, 1, 0), "-0,-0", [1.0, 0.5, 0.01], [True, True])
    assert schedule_cost(t, mode=CostMode.RESIDUAL_WEIGHTED) == pytest.approx(5.1, abs=1e-15)
    t = _traj((0, 1, 0), "-1,-2", [1.0, 0.5, 1e-4], [True, False], beta=0.25)
    assert schedule_cost(t) == 11.25


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel(exponent_cost={0: 1.0})
    with pytest.raises(ValueError):
        CostModel(order_weight={0: 0.0, 1: 10.0, 2: 100.0})
    with pytest.raises(ValueError):
        base_cost((3, 0, 0))
    m = CostModel(exponent_cost={0: 0, 1: 2, 2: 3, -1: 4, -2: 5})
    assert base_cost((1, 1, 0), m) == 2 + 20


def test_simulated_cost_matches_recomputation():
    p = builtin("quartic_min")
    a = AlgorithmSpec("single", (0, 1, 0))
    t = simulate(p, a, parse_schedule("+1,+1"))
    assert t.feasible and t.it_con == 2 and t.counted == [True, False]
    assert t.total_cost == schedule_cost(t) == 11
    tw = simulate(p, a, parse_schedule("+1,+1"), SearchConfig(cost_mode="residual-weighted"))
    assert tw.total_cost == schedule_cost(tw, mode="residual-weighted")
    assert tw.total_cost == tw.residuals[1] * 11 + tw.residuals[2] * 11


@given(st.lists(st.tuples(st.integers(0, 10), st.booleans()), max_size=10))
def test_removing_counted_iteration_never_increases(steps):
    sched = ",".join(f"-{ab}" for ab, _ in steps)
    counted = [c for _, c in steps]
    t = _traj((1, -1, 0), sched, [1.0] * (len(steps) + 1), counted)
    full = schedule_cost(t)
    assert full >= 0
    for i in range(len(steps)):
        rest = steps[:i] + steps[i + 1:]
        t2 = _traj((1, -1, 0), ",".join(f"-{ab}" for ab, _ in rest), [1.0] * len(steps), [c for _, c in rest])
        assert schedule_cost(t2) <= full
