"""Path planning for tractor-trailers in road-aligned coordinates."""
from .errors import (ConfigurationError, DomainError, InfeasibleCorridorError, ModelDomainError,
                     PlannerError, ProjectionError, ScenarioError)
from .geometry import CartesianPose, ReferencePath, Segment, make_path
from .vehicle import SMALL_VEHICLE, RoadState, VehicleParams
from .corridor import BodyPointSet, Corridor, Obstacle
from .objectives import ObjectiveKind, ObjectiveSpec
from .qp import QpProblem, QpSettings, QpStatus, solve_qp
from .scenario import Scenario, load_fixture, load_scenario, save_scenario
from .sqp import PlannerConfig, PlanResult, Trajectory, k_sweep, make_config, plan
from .metrics import Metrics, compute_metrics

__version__ = "0.1.0"
