"""Task planning and simulation for rack-to-picker robotized warehouses."""

from .errors import (
    ConfigError,
    GeometryError,
    InvariantViolation,
    LayoutError,
    Livelock,
    NoPath,
    RackplanError,
    ReservationClash,
    SchemaError,
    StaleQuery,
)
from .pathfinding import ConflictDetectionTable, Path, PathCache, SpaceTimeGraph, astar, cache_aided_astar
from .planners import PLANNER_NAMES, make_planner
from .rl_selection import HyperParams, QTable
from .scenario import BadCaseParams, Scenario, generate_bad_case, generate_poisson, load_scenario, save_scenario
from .simulator import SimReport, run, run_episodes
from .warehouse_model import GridMap, Location, load_layout, make_block_layout, manhattan, save_layout

__all__ = [
    "BadCaseParams",
    "ConfigError",
    "ConflictDetectionTable",
    "GeometryError",
    "GridMap",
    "HyperParams",
    "InvariantViolation",
    "LayoutError",
    "Livelock",
    "Location",
    "NoPath",
    "PLANNER_NAMES",
    "Path",
    "PathCache",
    "QTable",
    "RackplanError",
    "ReservationClash",
    "Scenario",
    "SchemaError",
    "SimReport",
    "SpaceTimeGraph",
    "StaleQuery",
    "astar",
    "cache_aided_astar",
    "generate_bad_case",
    "generate_poisson",
    "load_layout",
    "load_scenario",
    "make_block_layout",
    "make_planner",
    "manhattan",
    "run",
    "run_episodes",
    "save_layout",
    "save_scenario",
]
