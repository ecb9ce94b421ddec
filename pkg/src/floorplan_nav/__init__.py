"""Floor-plan maps, VLM navigation plans, grid execution and benchmark statistics."""

from .floorplan import (
    Door,
    FloorPlan,
    Label,
    MapValidationError,
    Rect,
    Room,
    check_invariants,
    load_plan,
    save_plan,
)
from .grammar import Action, Plan, PlanParseError, parse_plan, parse_plan_json, parse_plan_lines, serialize_plan
from .graph import ConnectivityGraph, NavTask, build_connectivity, classify_task, oracle_plan, room_hop_distance
from .transforms import BridgeSpec, apply_labeling, double_map
from .validate import Verdict, evaluate_response, grade_connectivity, validate_plan
from .grid import OccupancyGrid, astar, rasterize
from .executor import approach_pose, execute
from .stats import welch_t_test, two_proportion_z_test

__version__ = "0.1.0"
