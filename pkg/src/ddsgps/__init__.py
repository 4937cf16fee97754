"""Simulator for distributed dual sub-gradient optimisation with push-sum consensus."""

from .errors import ConfigError, InfeasibleError, InvariantViolation, PushSumUnderflow
from .graph import DigraphSnapshot, GraphSchedule, check_B_strong_connectivity
from .oracle import OracleResult, solve, solve_general_small, solve_scalar_coupling
from .problem import AgentProblem, Box, DiagonalQuadratic, ProblemInstance
from .pushsum import StepsizeSchedule, initialize, iterate, push_round, run

__version__ = "0.1.0"

__all__ = [
    "AgentProblem", "Box", "ConfigError", "DiagonalQuadratic", "DigraphSnapshot",
    "GraphSchedule", "InfeasibleError", "InvariantViolation", "OracleResult",
    "ProblemInstance", "PushSumUnderflow", "StepsizeSchedule", "check_B_strong_connectivity",
    "initialize", "iterate", "push_round", "run", "solve", "solve_general_small",
    "solve_scalar_coupling",
]
