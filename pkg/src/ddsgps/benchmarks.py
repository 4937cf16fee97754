"""Built-in problem instances."""

from __future__ import annotations

from .problem import AgentProblem, ProblemInstance

# IEEE 57-bus system, 7 generators (buses 1, 2, 3, 6, 8, 9, 12):
# cost a p^2 + b p + c on [p_min, p_max], and the demand served at each bus.
IEEE57_BUSES = (1, 2, 3, 6, 8, 9, 12)
IEEE57_COST = (
    (0.0775795, 20.0, 0.0),
    (0.01, 40.0, 0.0),
    (0.25, 20.0, 0.0),
    (0.01, 40.0, 0.0),
    (0.0222222, 20.0, 0.0),
    (0.01, 40.0, 0.0),
    (0.0322581, 20.0, 0.0),
)
IEEE57_LIMITS = ((0.0, 575.88), (0.0, 100.0), (0.0, 140.0), (0.0, 100.0),
                 (0.0, 550.0), (0.0, 100.0), (0.0, 410.0))
IEEE57_DEMAND = (241.0712, 100.0, 74.8088, 100.0, 550.0, 100.0, 410.0)
IEEE57_TOTAL_DEMAND = 1575.88


def ieee57() -> ProblemInstance:
    """Economic dispatch: total generation must equal total demand."""
    agents = tuple(
        AgentProblem.scalar(a, b, lo, hi, demand, c=c)
        for (a, b, c), (lo, hi), demand in zip(IEEE57_COST, IEEE57_LIMITS, IEEE57_DEMAND)
    )
    return ProblemInstance(agents)


BUILTINS = {"ieee57": ieee57}
