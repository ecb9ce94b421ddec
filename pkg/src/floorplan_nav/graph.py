"""Room/door connectivity graph and the ground-truth planner built on it."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .floorplan import FloorPlan, door_key, natural_key, room_key
from .grammar import Action, Plan

DIFFICULTIES = ("easy", "hard", "degenerate")


class NoPathError(ValueError):
    pass


@dataclass(frozen=True)
class ConnectivityGraph:
    """Rooms as nodes, one edge per door. Parallel edges are allowed."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, str], ...]
    names: tuple[tuple[str, str], ...] = ()
    open_by_default: frozenset[str] = frozenset()
    map_id: str = ""

    def __post_init__(self):
        adj: dict[str, list[tuple[str, str]]] = {n: [] for n in self.nodes}
        for door, a, b in self.edges:
            adj[a].append((door, b))
            adj[b].append((door, a))
        for n in adj:
            adj[n].sort(key=lambda e: natural_key(e[0]))
        object.__setattr__(self, "_adj", adj)
        object.__setattr__(self, "_doors", {d: (a, b) for d, a, b in self.edges})
        room_keys = {}
        for n in self.nodes:
            room_keys.setdefault(room_key(n), n)
        for n, name in self.names:
            room_keys.setdefault(room_key(name), n)
        object.__setattr__(self, "_room_keys", room_keys)
        object.__setattr__(self, "_door_keys", {door_key(d): d for d in self._doors})

    def neighbors(self, room: str) -> list[tuple[str, str]]:
        """(door_id, other_room) pairs in natural door-id order."""
        return self._adj[room]

    def door_rooms(self, door_id: str) -> tuple[str, str]:
        return self._doors[door_id]

    @property
    def door_ids(self) -> list[str]:
        return sorted(self._doors, key=natural_key)

    def resolve_room(self, ref: str) -> str | None:
        return self._room_keys.get(room_key(ref))

    def resolve_door(self, ref: str) -> str | None:
        return self._door_keys.get(door_key(ref))

    def require_room(self, ref: str) -> str:
        rid = self.resolve_room(ref)
        if rid is None:
            raise KeyError(f"unknown room {ref!r}")
        return rid

    def display_name(self, room_id: str) -> str:
        return dict(self.names).get(room_id, room_id)


@dataclass(frozen=True)
class NavTask:
    map_id: str
    start_room: str
    goal_room: str
    difficulty: str = "easy"

    def __post_init__(self):
        if self.difficulty not in DIFFICULTIES:
            raise ValueError(f"unknown difficulty {self.difficulty!r}")
        if self.start_room == self.goal_room and self.difficulty != "degenerate":
            raise ValueError("start and goal coincide; use difficulty='degenerate'")


def build_connectivity(plan: FloorPlan) -> ConnectivityGraph:
    plan.validate()
    nodes = tuple(sorted((r.room_id for r in plan.rooms), key=natural_key))
    edges = tuple(
        sorted(((d.door_id, *d.connects) for d in plan.doors), key=lambda e: natural_key(e[0]))
    )
    names = tuple((r.room_id, r.display_name) for r in plan.rooms)
    return ConnectivityGraph(
        nodes=nodes,
        edges=edges,
        names=names,
        open_by_default=frozenset(d.door_id for d in plan.doors if d.open_by_default),
        map_id=plan.map_id,
    )


def _bfs(graph: ConnectivityGraph, source: str) -> dict[str, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for _, v in graph.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def room_hop_distance(graph: ConnectivityGraph, a: str, b: str) -> int | None:
    """Fewest door traversals from ``a`` to ``b``; None when unreachable."""
    a, b = graph.require_room(a), graph.require_room(b)
    return _bfs(graph, a).get(b)


def classify_task(graph: ConnectivityGraph, task: NavTask) -> str:
    d = room_hop_distance(graph, task.start_room, task.goal_room)
    if d == 1:
        return "easy"
    if d == 3:
        return "hard"
    return "other"


def oracle_plan(graph: ConnectivityGraph, task: NavTask) -> Plan:
    """Shortest door sequence as Approach/Open/GoThrough triples.

    Among equally short routes the one whose door-id sequence is smallest
    (natural order) wins; picking the smallest door at each step is enough
    since every candidate suffix has the same length.
    """
    start = graph.require_room(task.start_room)
    goal = graph.require_room(task.goal_room)
    to_goal = _bfs(graph, goal)
    if start not in to_goal:
        raise NoPathError(f"no route from {start!r} to {goal!r}")
    actions: list[Action] = []
    here = start
    while here != goal:
        door, nxt = next((d, v) for d, v in graph.neighbors(here) if to_goal.get(v) == to_goal[here] - 1)
        actions += [Action("ApproachDoor", door), Action("OpenDoor", door), Action("GoThrough", door)]
        here = nxt
    return Plan(tuple(actions), "strict")


def all_pairs_distances(graph: ConnectivityGraph) -> dict[tuple[str, str], int]:
    out = {}
    for a in graph.nodes:
        for b, d in _bfs(graph, a).items():
            out[(a, b)] = d
    return out


def bridge_doors(graph: ConnectivityGraph) -> list[str]:
    """Doors whose removal disconnects their two rooms."""
    out = []
    for door in graph.door_ids:
        pruned = ConnectivityGraph(graph.nodes, tuple(e for e in graph.edges if e[0] != door))
        a, b = graph.door_rooms(door)
        if b not in _bfs(pruned, a):
            out.append(door)
    return out
