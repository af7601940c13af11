"""Zeroth-order Nash equilibrium seeking for monotone games.

Extremum-seeking golden-ratio dynamics, comparison flows and baselines,
Lyapunov diagnostics, and the bilinear / fixed-demand experiments.
"""

from nesc.games import (
    FixedDemandParams,
    GameSpec,
    bilinear,
    evaluate_cost,
    fixed_demand,
    ne_residual,
    pseudogradient,
)
from nesc.controllers import BoxSet, EscParams, EscState, GrState, HalfSpace
from nesc.sim import SolverConfig, Trajectory, integrate

__all__ = [
    "BoxSet",
    "EscParams",
    "EscState",
    "FixedDemandParams",
    "GameSpec",
    "GrState",
    "HalfSpace",
    "SolverConfig",
    "Trajectory",
    "bilinear",
    "evaluate_cost",
    "fixed_demand",
    "integrate",
    "ne_residual",
    "pseudogradient",
]

__version__ = "0.1.0"
