import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsgps.benchmarks import IEEE57_COST, IEEE57_DEMAND, IEEE57_LIMITS, ieee57
from ddsgps.errors import ConfigError
from ddsgps.problem import (AgentProblem, Box, DiagonalQuadratic, ProblemInstance,
                            coupling_residual, dual_function, evaluate_objective, lagrangian,
                            local_argmin, subgradient, subgradient_bound)


def grid_argmin(agent, lam, points=200001):
    """Dense grid search over a scalar agent's box (reference for the closed form)."""
    grid = np.linspace(agent.box.lo[0], agent.box.hi[0], points)
    a, b = agent.objective.a[0], agent.objective.b[0]
    coeff = agent.coupling_matrix[0, 0]
    vals = a * grid**2 + b * grid + lam * coeff * grid
    return grid[np.argmin(vals)]


def test_ieee57_objective_at_lower_bounds():
    inst = ieee57()
    xs = [ag.box.lo for ag in inst.agents]
    assert evaluate_objective(inst, xs) == 0.0


def test_objective_hand_values():
    zero = ProblemInstance((AgentProblem.scalar(1.0, 0.0, -1, 1, 0.0),))
    assert evaluate_objective(zero, [[0.0]]) == 0.0
    gen2 = ProblemInstance((AgentProblem.scalar(0.01, 40.0, 0, 100, 100.0),))
    assert evaluate_objective(gen2, [[100.0]]) == pytest.approx(4100.0, rel=1e-15)


def test_objective_dimension_mismatch():
    inst = ieee57()
    with pytest.raises(ConfigError):
        evaluate_objective(inst, [[0.0]] * 6)
    with pytest.raises(ConfigError):
        evaluate_objective(inst, [[0.0, 1.0]] + [[0.0]] * 6)


def test_generator1_argmin_matches_grid():
    gen1 = ieee57().agents[0]
    x = local_argmin(gen1, [-40.0])[0]
    assert x == pytest.approx(20.0 / 0.155159, rel=1e-14)
    assert abs(x - grid_argmin(gen1, -40.0)) < 1e-3


@pytest.mark.parametrize("lam, expected", [(-40.0, 0.0), (0.0, 0.0)])
def test_generator2_argmin(lam, expected):
    gen2 = ieee57().agents[1]
    assert local_argmin(gen2, [lam])[0] == expected


def test_linear_coordinate_tie_breaks_low():
    ag = AgentProblem(DiagonalQuadratic([0.0, 0.0, 0.0], [1.0, -1.0, 2.0]),
                      Box([-1, -2, -3], [1, 2, 3]), [[0.0, 0.0, 2.0]], [0.0])
    # effective linear terms: 1, -1, 2 + 2*(-1) = 0
    np.testing.assert_array_equal(local_argmin(ag, [-1.0]), [-1.0, 2.0, -3.0])


def test_argmin_lambda_length_checked():
    with pytest.raises(ConfigError):
        local_argmin(ieee57().agents[0], [1.0, 2.0])


def test_subgradient_examples():
    agents = ieee57().agents
    assert subgradient(agents[0], [IEEE57_DEMAND[0]])[0] == 0.0
    assert subgradient(agents[1], [0.0])[0] == -100.0
    two_rows = AgentProblem(DiagonalQuadratic([1.0], [0.0]), Box([-5], [5]), [[1.0], [-1.0]], [0, 0])
    np.testing.assert_array_equal(subgradient(two_rows, [3.0]), np.array([[1.0], [-1.0]]) @ [3.0])


def test_subgradient_bound_examples():
    assert subgradient_bound(ieee57().agents[1]) == pytest.approx(100.0)
    pinned = AgentProblem.scalar(1.0, 0.0, 7.5, 7.5, 0.0)
    assert subgradient_bound(pinned) == pytest.approx(7.5)
    gen1 = ieee57().agents[0]
    vertex = max(abs(v - IEEE57_DEMAND[0]) for v in IEEE57_LIMITS[0])
    assert subgradient_bound(gen1) == pytest.approx(vertex, rel=1e-12)
    assert vertex == pytest.approx(334.8088, abs=1e-9)


def test_benchmark_table_layout():
    inst = ieee57()
    assert inst.m == 7 and inst.p == 1
    assert sum(IEEE57_DEMAND) == pytest.approx(1575.88, abs=1e-9)
    for ag, (a, b, c), (lo, hi), d in zip(inst.agents, IEEE57_COST, IEEE57_LIMITS, IEEE57_DEMAND):
        assert (ag.objective.a[0], ag.objective.b[0], ag.objective.c) == (a, b, c)
        assert (ag.box.lo[0], ag.box.hi[0]) == (lo, hi)
        assert ag.coupling_offset[0] == d


def test_negative_curvature_rejected():
    with pytest.raises(ConfigError):
        DiagonalQuadratic([-1.0], [0.0])


def test_validation_errors():
    with pytest.raises(ConfigError):
        Box([1.0], [0.0])
    with pytest.raises(ConfigError):
        Box([0.0], [np.inf])
    with pytest.raises(ConfigError):
        Box([], [])
    with pytest.raises(ConfigError):
        AgentProblem(DiagonalQuadratic([1.0, 1.0], [0.0, 0.0]), Box([0], [1]), [[1.0]], [0.0])
    with pytest.raises(ConfigError):
        ProblemInstance(())
    a1 = AgentProblem.scalar(1.0, 0.0, 0, 1, 0.0)
    a2 = AgentProblem(DiagonalQuadratic([1.0], [0.0]), Box([0], [1]), [[1.0], [1.0]], [0.0, 0.0])
    with pytest.raises(ConfigError):
        ProblemInstance((a1, a2))


def test_degenerate_box_allowed():
    ag = AgentProblem.scalar(2.0, -3.0, 4.0, 4.0, 1.0)
    assert local_argmin(ag, [123.0])[0] == 4.0


# --- properties ---------------------------------------------------------------

@st.composite
def agents(draw, max_n=4, max_p=3):
    n = draw(st.integers(1, max_n))
    p = draw(st.integers(1, max_p))
    fl = st.floats(-10, 10, allow_nan=False)
    a = [draw(st.one_of(st.just(0.0), st.floats(0.01, 5))) for _ in range(n)]
    b = [draw(fl) for _ in range(n)]
    lo = [draw(st.floats(-20, 20)) for _ in range(n)]
    hi = [l + draw(st.floats(0, 30)) for l in lo]
    A = [[draw(fl) for _ in range(n)] for _ in range(p)]
    off = [draw(fl) for _ in range(p)]
    lam = [draw(st.floats(-20, 20)) for _ in range(p)]
    return AgentProblem(DiagonalQuadratic(a, b), Box(lo, hi), A, off), np.array(lam)


def local_lagrangian(agent, x, lam):
    return agent.objective(x) + float(lam @ subgradient(agent, x))


@settings(max_examples=200, deadline=None)
@given(agents(), st.integers(0, 2**32 - 1))
def test_argmin_in_box_and_minimises(pair, seed):
    agent, lam = pair
    x = local_argmin(agent, lam)
    assert agent.box.contains(x)
    best = local_lagrangian(agent, x, lam)
    rng = np.random.default_rng(seed)
    for y in agent.box.sample(rng, 100):
        assert local_lagrangian(agent, y, lam) >= best - 1e-10 * max(1.0, abs(best))


@settings(max_examples=200, deadline=None)
@given(agents())
def test_argmin_optimality_certificate(pair):
    agent, lam = pair
    x = local_argmin(agent, lam)
    a, b = agent.objective.a, agent.objective.b
    deriv = 2 * a * x + b + agent.coupling_matrix.T @ lam
    lo, hi = agent.box.lo, agent.box.hi
    for k in range(agent.n):
        if lo[k] == hi[k]:
            continue
        scale = max(1.0, abs(b[k]) + np.abs(agent.coupling_matrix[:, k]) @ np.abs(lam) + abs(2 * a[k] * x[k]))
        at_lo, at_hi = x[k] == lo[k], x[k] == hi[k]
        # derivative pushes outward at an active bound, vanishes inside
        if at_lo:
            assert deriv[k] >= -1e-10 * scale
        elif at_hi:
            assert deriv[k] <= 1e-10 * scale
        else:
            assert abs(deriv[k]) <= 1e-10 * scale


@settings(max_examples=100, deadline=None)
@given(agents(), st.integers(0, 2**32 - 1))
def test_subgradient_bound_dominates(pair, seed):
    agent, _ = pair
    G = subgradient_bound(agent)
    rng = np.random.default_rng(seed)
    for y in agent.box.sample(rng, 1000):
        assert np.linalg.norm(subgradient(agent, y)) <= G * (1 + 1e-12) + 1e-12
    # the vertex maximum is within the interval bound as well
    verts = itertools.product(*zip(agent.box.lo, agent.box.hi))
    if agent.n <= 4:
        for v in verts:
            assert np.linalg.norm(subgradient(agent, np.array(v))) <= G * (1 + 1e-12) + 1e-12


def test_lagrangian_and_dual_function():
    inst = ieee57()
    lam = -50.0
    xs = [local_argmin(ag, [lam]) for ag in inst.agents]
    r = coupling_residual(inst, xs)
    assert lagrangian(inst, xs, [lam]) == pytest.approx(evaluate_objective(inst, xs) + lam * r[0])
    assert dual_function(inst, [lam]) == pytest.approx(lagrangian(inst, xs, [lam]))
