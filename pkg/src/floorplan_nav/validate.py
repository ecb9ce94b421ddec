"""Plan correctness as a decision procedure over the connectivity graph.

A plan is correct when every verb is one the prompt defined, every action is
feasible from where the robot is, and the last room is the goal.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

from .floorplan import room_key
from .grammar import ConnectivityClaim, Plan, PlanParseError, parse_plan
from .graph import ConnectivityGraph, NavTask, room_hop_distance

OUTCOMES = ("correct", "unknown_action", "unknown_target", "infeasible_action", "goal_not_reached", "malformed")


@dataclass(frozen=True)
class Verdict:
    outcome: str
    failing_index: int | None = None
    trace: tuple[str, ...] = ()
    detail: str = ""
    minimal: bool | None = None
    offset: int | None = None

    @property
    def correct(self) -> bool:
        return self.outcome == "correct"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["trace"] = list(self.trace)
        return out

    def to_json(self) -> str:
        return json.dumps(
            {k: v for k, v in self.to_dict().items() if k in ("outcome", "failing_index", "trace", "detail", "minimal")},
            separators=(",", ":"), ensure_ascii=False,
        )


def initial_door_states(graph: ConnectivityGraph, overrides: Mapping[str, bool] | None = None) -> dict[str, bool]:
    states = {d: d in graph.open_by_default for d in graph.door_ids}
    if overrides:
        for ref, value in overrides.items():
            door = graph.resolve_door(ref)
            if door is not None:
                states[door] = bool(value)
    return states


def validate_plan(graph: ConnectivityGraph, task: NavTask, plan: Plan,
                  door_states: Mapping[str, bool] | None = None, pedantic: bool = False) -> Verdict:
    """Replay ``plan`` with a room cursor and per-door open/closed state.

    ApproachDoor/OpenDoor need the door on the current room's boundary;
    GoThrough also needs it open and moves the cursor across; GoTo needs the
    target to be the current room or joined to it by an open door. With
    ``pedantic`` the door must also have been approached (and not left) before
    OpenDoor/GoThrough.
    """
    here = graph.require_room(task.start_room)
    goal = graph.require_room(task.goal_room)
    states = initial_door_states(graph, door_states)
    trace = [here]
    approached: str | None = None

    def fail(i: int, outcome: str, detail: str) -> Verdict:
        return Verdict(outcome, i, tuple(trace), detail)

    for i, act in enumerate(plan.actions):
        if act.verb == "GoTo":
            dest = graph.resolve_room(act.target)
            if dest is None:
                return fail(i, "unknown_target", f"action {i} {act}: no room {act.target!r}")
            if dest != here:
                if not any(v == dest and states[d] for d, v in graph.neighbors(here)):
                    return fail(i, "infeasible_action", f"action {i} {act}: {dest!r} is not joined to {here!r} by an open door")
                here, approached = dest, None
        elif act.is_door_action:
            door = graph.resolve_door(act.target)
            if door is None:
                return fail(i, "unknown_target", f"action {i} {act}: no door {act.target!r}")
            a, b = graph.door_rooms(door)
            if here not in (a, b):
                return fail(i, "infeasible_action", f"action {i} {act}: door {door} is not on the boundary of {here!r}")
            if act.verb == "ApproachDoor":
                approached = door
            elif pedantic and approached != door:
                return fail(i, "infeasible_action", f"action {i} {act}: door {door} was not approached first")
            elif act.verb == "OpenDoor":
                states[door] = True
            else:
                if not states[door]:
                    return fail(i, "infeasible_action", f"action {i} {act}: door {door} is closed")
                here = b if here == a else a
                approached = door  # now standing at the far side of the same door
        else:
            return fail(i, "unknown_action", f"action {i}: undefined verb {act.verb!r}")
        trace.append(here)

    if here != goal:
        return Verdict("goal_not_reached", None, tuple(trace), f"plan ends in {here!r}, goal is {goal!r}")
    optimal = room_hop_distance(graph, task.start_room, task.goal_room)
    return Verdict("correct", None, tuple(trace), "", minimal=len(plan) == 3 * (optimal or 0))


def evaluate_response(graph: ConnectivityGraph, task: NavTask, response: str | bytes, profile: str = "strict",
                      door_states: Mapping[str, bool] | None = None, pedantic: bool = False) -> tuple[Plan | None, Verdict]:
    """Parse a raw VLM response and judge it; parse failures become verdicts."""
    try:
        plan = parse_plan(response, profile)
    except PlanParseError as exc:
        start = graph.resolve_room(task.start_room) or task.start_room
        return None, Verdict(exc.outcome, None, (start,), str(exc), offset=exc.offset)
    return plan, validate_plan(graph, task, plan, door_states, pedantic)


def grade_connectivity(claim: ConnectivityClaim, graph: ConnectivityGraph) -> tuple[float, float]:
    """(precision, recall) of claimed door edges against the true graph.

    An edge matches when the door id and the unordered room pair agree after
    id normalisation. Repeated claims count once.
    """
    actual = set()
    for door, a, b in graph.edges:
        actual.add((door, frozenset((a, b))))
    claimed = set()
    for door_ref, a_ref, b_ref in claim.claimed_edges:
        door = graph.resolve_door(door_ref) or f"?{door_ref}"
        a = graph.resolve_room(a_ref) or f"?{room_key(a_ref)}"
        b = graph.resolve_room(b_ref) or f"?{room_key(b_ref)}"
        claimed.add((door, frozenset((a, b))))
    matched = len(claimed & actual)
    precision = matched / len(claimed) if claimed else 1.0
    recall = matched / len(actual) if actual else 1.0
    if not claimed:
        recall = 0.0 if actual else 1.0
    return precision, recall
