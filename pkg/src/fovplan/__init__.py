"""Visibility-constrained MAV path planning and trajectory optimization."""

from fovplan.map import (
    DistanceField,
    ObstacleCostParams,
    OccupancyGrid,
    compute_distance_field,
    load_scene,
    obstacle_cost,
    query_distance,
)
from fovplan.planner import PlanConfig, PlannedPath, SensorModel, plan
from fovplan.retime import MotionModel, Trajectory, time_parameterize
from fovplan.optimizer import OptimizerConfig, optimize

__all__ = [
    "DistanceField",
    "MotionModel",
    "ObstacleCostParams",
    "OccupancyGrid",
    "OptimizerConfig",
    "PlanConfig",
    "PlannedPath",
    "SensorModel",
    "Trajectory",
    "compute_distance_field",
    "load_scene",
    "obstacle_cost",
    "optimize",
    "plan",
    "query_distance",
    "time_parameterize",
]
