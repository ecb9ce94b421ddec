"""Run a parsed plan on an occupancy grid, one A* leg per action.

The robot starts on the cell under the start room's centre label. Door
actions use the approach pose: the free cell of the current room touching
the door, nearest to the door's middle. In the default (lenient) mode
``OpenDoor`` and ``GoThrough`` drive to that pose themselves when the robot is
not already next to the door; ``pedantic=True`` makes that a failure instead.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

from .floorplan import FloorPlan, door_key
from .graph import NavTask
from .grammar import Action, Plan
from .grid import Cell, NoPathFound, OccupancyGrid, _neighbors, astar

OPEN_REACH = 2  # cells; how close the robot must be to open a door


class ApproachError(ValueError):
    pass


@dataclass
class ActionRecord:
    action: str
    path: list[Cell]
    outcome: str
    cumulative_length: float
    room_after: str | None = None


@dataclass
class ExecutionLog:
    task: NavTask
    records: list[ActionRecord] = field(default_factory=list)
    outcome: str = "success"
    failing_index: int | None = None
    final_room: str | None = None
    detail: str = ""

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    @property
    def path_length(self) -> float:
        return self.records[-1].cumulative_length if self.records else 0.0

    def to_dict(self) -> dict:
        out = asdict(self)
        for rec in out["records"]:
            rec["path"] = [list(c) for c in rec["path"]]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), ensure_ascii=False)


def door_center_cell(grid: OccupancyGrid, plan: FloorPlan, door_id: str) -> Cell:
    mx, my = plan.door(door_id).midpoint
    cells = grid.door_cells(door_id)
    return min(cells, key=lambda c: (_dist2(grid.cell_center(c), (mx, my)), c))


def _dist2(p, q) -> float:
    return (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2


def approach_pose(grid: OccupancyGrid, plan: FloorPlan, door_id: str, from_room: str) -> Cell:
    """Free cell of ``from_room`` adjacent to the door, nearest the door middle.

    Ties go to the smaller (row, col).
    """
    door = plan.door(door_id)
    if from_room not in door.connects:
        raise ApproachError(f"door {door_id} is not on the boundary of {from_room!r}")
    ri = grid.room_ids.index(from_room)
    dcells = set(grid.door_cells(door_id))
    candidates = {
        n for c in dcells for n in _neighbors(c)
        if grid.in_bounds(n) and grid.room_index[n] == ri
    }
    if not candidates:
        raise ApproachError(f"door {door_id} has no free cell on the {from_room!r} side")
    mid = door.midpoint
    return min(candidates, key=lambda c: (_dist2(grid.cell_center(c), mid), c))


def start_cell(grid: OccupancyGrid, plan: FloorPlan, room_id: str) -> Cell:
    """Cell under the room's centre label (centroid of its largest rectangle)."""
    anchor = next((l.anchor for l in plan.labels if l.room_id == room_id and l.kind == "center"), None)
    if anchor is None:
        anchor = plan.room(room_id).largest_rect.centroid
    cell = grid.cell_at(*anchor)
    if grid.room_of(cell) != room_id:
        # centroid on a cell boundary can round into the wall ring; fall back to the nearest room cell
        cell = min(grid.room_cells(room_id), key=lambda c: (_dist2(grid.cell_center(c), anchor), c))
    return cell


def _near_door(grid: OccupancyGrid, door_id: str, pos: Cell) -> bool:
    return any(abs(pos[0] - r) + abs(pos[1] - c) <= OPEN_REACH for r, c in grid.door_cells(door_id))


def execute(grid: OccupancyGrid, plan: FloorPlan, actions: Plan, task: NavTask,
            door_states: Mapping[str, bool] | None = None, pedantic: bool = False) -> ExecutionLog:
    """Drive the plan on the grid; stop at the first action that cannot run."""
    states = {d.door_id: d.open_by_default for d in plan.doors}
    if door_states:
        states.update(door_states)
    room = plan.resolve_room(task.start_room)
    goal = plan.resolve_room(task.goal_room)
    pos = start_cell(grid, plan, room)
    log = ExecutionLog(task=task, final_room=room)
    total = 0.0
    door_lookup = {door_key(d.door_id): d.door_id for d in plan.doors}

    def fail(i: int, outcome: str, detail: str, path=None):
        log.records.append(ActionRecord(str(actions.actions[i]), path or [], outcome, total, room))
        log.outcome, log.failing_index, log.detail, log.final_room = outcome, i, detail, room
        return log

    def leg(target: Cell, open_doors: Mapping[str, bool]) -> list[Cell]:
        return astar(grid, pos, target, open_doors)

    for i, act in enumerate(actions.actions):
        path: list[Cell] = [pos]
        if act.verb == "GoTo":
            try:
                dest = plan.resolve_room(act.target)
            except KeyError:
                return fail(i, "unknown_target", f"no room {act.target!r}")
            linked = dest == room or any(
                states.get(d.door_id) for d in plan.doors if set(d.connects) == {room, dest}
            )
            if not linked:
                return fail(i, "infeasible_action", f"{dest!r} is not reachable through an open door from {room!r}")
            only = {d.door_id: True for d in plan.doors if set(d.connects) == {room, dest} and states.get(d.door_id)}
            try:
                path = leg(start_cell(grid, plan, dest), only)
            except NoPathFound as exc:
                return fail(i, "no_path", str(exc))
            room = dest
        else:
            door_id = door_lookup.get(door_key(act.target))
            if door_id is None:
                return fail(i, "unknown_target", f"no door {act.target!r}")
            door = plan.door(door_id)
            if room not in door.connects:
                return fail(i, "infeasible_action", f"door {door_id} is not on the boundary of {room!r}")
            try:
                here = approach_pose(grid, plan, door_id, room)
            except ApproachError as exc:
                return fail(i, "no_path", str(exc))

            if act.verb == "ApproachDoor" or not _near_door(grid, door_id, pos):
                if act.verb != "ApproachDoor" and pedantic:
                    return fail(i, "not_adjacent", f"robot is not next to door {door_id}")
                try:
                    path = leg(here, {})
                except NoPathFound as exc:
                    return fail(i, "no_path", str(exc))

            if act.verb == "OpenDoor":
                states[door_id] = True
            elif act.verb == "GoThrough":
                if not states.get(door_id):
                    return fail(i, "door_closed", f"door {door_id} is closed", path)
                far = approach_pose(grid, plan, door_id, door.other(room))
                try:
                    through = astar(grid, path[-1], far, {door_id: True})
                except NoPathFound as exc:
                    return fail(i, "no_path", str(exc), path)
                path = path + through[1:]
                room = door.other(room)
        total += (len(path) - 1) * grid.resolution
        pos = path[-1]
        assert grid.room_of(pos) == room, (pos, room)
        log.records.append(ActionRecord(str(act), path, "ok", total, room))

    log.final_room = room
    if room != goal:
        log.outcome = "goal_not_reached"
        log.detail = f"plan ends in {room!r}, goal is {goal!r}"
    return log
