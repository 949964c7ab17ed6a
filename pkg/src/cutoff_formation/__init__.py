"""Collision-free time-varying formation control for double-integrator swarms."""

from __future__ import annotations

from .controller import Controller, ControllerGains, ObstacleState
from .errors import (
    CollisionError,
    DomainError,
    FormationError,
    InfeasibleGainsError,
    InvalidGraphError,
    ScenarioError,
    UnsupportedAttitudeError,
)
from .graph import CommGraph, build_matrices
from .potential import PairPotentials, PotentialParams
from .scenario_file import builtin_scenario, dump_scenario, load_scenario, parse_scenario
from .simulator import Scenario, SimTrace, metrics, run
from .stability import StabilityReport, check_theorem, zeta
from .vehicle import AgentState, FormationSpec, ReferenceTrajectory

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "CollisionError",
    "CommGraph",
    "Controller",
    "ControllerGains",
    "DomainError",
    "FormationError",
    "FormationSpec",
    "InfeasibleGainsError",
    "InvalidGraphError",
    "ObstacleState",
    "PairPotentials",
    "PotentialParams",
    "ReferenceTrajectory",
    "Scenario",
    "ScenarioError",
    "SimTrace",
    "StabilityReport",
    "UnsupportedAttitudeError",
    "build_matrices",
    "builtin_scenario",
    "check_theorem",
    "dump_scenario",
    "load_scenario",
    "metrics",
    "parse_scenario",
    "run",
    "zeta",
]
