"""Structured floor-plan maps.

A map is a set of rooms (unions of axis-aligned rectangles), doors sitting in
the wall gap between two rooms, and text labels anchored inside rooms. All
coordinates are in abstract map units; ``y`` grows downward like image rows.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

EPS = 1e-9

LABEL_KINDS = ("center", "decision_point", "open_space")


class MapValidationError(ValueError):
    """A map violates one of the structural invariants.

    ``ids`` names the offending rooms/doors so callers can report them.
    """

    def __init__(self, message: str, ids: Sequence[str] = ()):
        super().__init__(message)
        self.ids = tuple(ids)


def normalize_id(text: str) -> str:
    """Canonical matching key: trimmed, whitespace-collapsed, casefolded."""
    return " ".join(str(text).split()).casefold()


_DOOR_PREFIX = re.compile(r"^door\s+", re.IGNORECASE)
_ROOM_PREFIX = re.compile(r"^room\s+", re.IGNORECASE)


def door_key(text: str) -> str:
    """Matching key for door references ("Door D8" and "d8" both give "d8")."""
    return normalize_id(_DOOR_PREFIX.sub("", str(text).strip()))


def room_key(text: str) -> str:
    return normalize_id(_ROOM_PREFIX.sub("", str(text).strip()))


def natural_key(ident: str) -> tuple:
    """Sort key that orders D2 before D10."""
    parts = re.split(r"(\d+)", ident)
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts)


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    @property
    def x1(self) -> float:
        return self.x + self.w

    @property
    def y1(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def contains(self, px: float, py: float, tol: float = EPS) -> bool:
        return (self.x - tol <= px <= self.x1 + tol) and (self.y - tol <= py <= self.y1 + tol)

    def contains_half_open(self, px: float, py: float) -> bool:
        return self.x <= px < self.x1 and self.y <= py < self.y1

    def overlap_area(self, other: Rect) -> float:
        dx = min(self.x1, other.x1) - max(self.x, other.x)
        dy = min(self.y1, other.y1) - max(self.y, other.y)
        return max(dx, 0.0) * max(dy, 0.0)

    def touches(self, other: Rect) -> bool:
        """Overlapping, or sharing a boundary segment of positive length."""
        dx = min(self.x1, other.x1) - max(self.x, other.x)
        dy = min(self.y1, other.y1) - max(self.y, other.y)
        if dx < -EPS or dy < -EPS:
            return False
        return dx > EPS or dy > EPS

    def inside(self, outer: Rect) -> bool:
        return (
            self.x >= outer.x - EPS
            and self.y >= outer.y - EPS
            and self.x1 <= outer.x1 + EPS
            and self.y1 <= outer.y1 + EPS
        )

    def to_list(self) -> list[float]:
        return [_num(self.x), _num(self.y), _num(self.w), _num(self.h)]


def _num(v: float):
    # keep integral coordinates as ints so JSON output stays tidy and stable
    return int(v) if float(v).is_integer() else float(v)


@dataclass(frozen=True)
class Room:
    room_id: str
    display_name: str
    rectangles: tuple[Rect, ...]

    @property
    def largest_rect(self) -> Rect:
        return max(self.rectangles, key=lambda r: r.area)

    @property
    def area(self) -> float:
        return sum(r.area for r in self.rectangles)

    def contains(self, px: float, py: float) -> bool:
        return any(r.contains(px, py) for r in self.rectangles)


@dataclass(frozen=True)
class Door:
    door_id: str
    connects: tuple[str, str]
    segment: tuple[tuple[float, float], tuple[float, float]]
    width: float
    open_by_default: bool = False

    @property
    def vertical(self) -> bool:
        """True when the segment runs along y (a wall between left/right rooms)."""
        (x1, y1), (x2, y2) = self.segment
        return abs(x1 - x2) <= EPS

    @property
    def midpoint(self) -> tuple[float, float]:
        (x1, y1), (x2, y2) = self.segment
        return ((x1 + x2) / 2, (y1 + y2) / 2)

    @property
    def span(self) -> tuple[float, float]:
        """Extent of the segment along its own axis."""
        (x1, y1), (x2, y2) = self.segment
        a, b = (y1, y2) if self.vertical else (x1, x2)
        return (min(a, b), max(a, b))

    @property
    def line(self) -> float:
        """Coordinate of the segment on the perpendicular axis."""
        (x1, y1), _ = self.segment
        return x1 if self.vertical else y1

    def other(self, room_id: str) -> str:
        a, b = self.connects
        if room_id == a:
            return b
        if room_id == b:
            return a
        raise KeyError(f"door {self.door_id} does not touch room {room_id}")


@dataclass(frozen=True)
class Label:
    room_id: str
    text: str
    anchor: tuple[float, float]
    kind: str = "center"


@dataclass(frozen=True)
class FloorPlan:
    map_id: str
    rooms: tuple[Room, ...]
    doors: tuple[Door, ...]
    labels: tuple[Label, ...]
    bounds: Rect
    wall_thickness: float

    def room(self, room_id: str) -> Room:
        for r in self.rooms:
            if r.room_id == room_id:
                return r
        raise KeyError(f"unknown room {room_id!r}")

    def door(self, door_id: str) -> Door:
        for d in self.doors:
            if d.door_id == door_id:
                return d
        raise KeyError(f"unknown door {door_id!r}")

    def resolve_room(self, text: str) -> str:
        """Map a user/VLM room reference (id or display name) to a room id."""
        key = room_key(text)
        for r in self.rooms:
            if room_key(r.room_id) == key or room_key(r.display_name) == key:
                return r.room_id
        raise KeyError(f"unknown room {text!r}")

    def room_at(self, px: float, py: float) -> str | None:
        for r in self.rooms:
            if r.contains(px, py):
                return r.room_id
        return None

    def doors_of(self, room_id: str) -> list[Door]:
        return [d for d in self.doors if room_id in d.connects]

    def with_labels(self, labels: Iterable[Label]) -> FloorPlan:
        return replace(self, labels=tuple(labels))

    def validate(self) -> FloorPlan:
        check_invariants(self)
        return self


def door_sides(room: Room, door: Door, wall_thickness: float) -> set[int]:
    """Which side(s) of the door line the room abuts: -1 (low coords) or +1.

    A rectangle abuts when its facing edge is within ``wall_thickness`` of the
    door line and it covers the door's full extent along the wall.
    """
    lo, hi = door.span
    s = door.line
    sides: set[int] = set()
    for r in room.rectangles:
        if door.vertical:
            near_lo, near_hi, a0, a1 = r.x1, r.x, r.y, r.y1
        else:
            near_lo, near_hi, a0, a1 = r.y1, r.y, r.x, r.x1
        if a0 > lo + EPS or a1 < hi - EPS:
            continue
        if near_lo <= s + EPS and s - near_lo <= wall_thickness + EPS:
            sides.add(-1)
        if near_hi >= s - EPS and near_hi - s <= wall_thickness + EPS:
            sides.add(+1)
    return sides


def _rects_connected(rects: Sequence[Rect]) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j, other in enumerate(rects):
            if j not in seen and rects[i].touches(other):
                seen.add(j)
                stack.append(j)
    return len(seen) == len(rects)


def check_invariants(plan: FloorPlan) -> None:
    """Raise MapValidationError on the first violated map invariant."""
    if plan.wall_thickness <= 0:
        raise MapValidationError("wall_thickness must be positive")
    if plan.bounds.w <= 0 or plan.bounds.h <= 0:
        raise MapValidationError("bounds must have positive area")

    room_ids = [r.room_id for r in plan.rooms]
    door_ids = [d.door_id for d in plan.doors]
    for ids, what in ((room_ids, "room"), (door_ids, "door")):
        seen: set[str] = set()
        for i in ids:
            if i in seen:
                raise MapValidationError(f"duplicate {what} id {i!r}", [i])
            seen.add(i)
    shared = set(room_ids) & set(door_ids)
    if shared:
        raise MapValidationError(f"ids used by both a room and a door: {sorted(shared)}", sorted(shared))
    keys: dict[str, str] = {}
    for r in plan.rooms:
        for k in {room_key(r.room_id), room_key(r.display_name)}:
            if k in keys and keys[k] != r.room_id:
                raise MapValidationError(f"room reference {k!r} is ambiguous", [keys[k], r.room_id])
            keys[k] = r.room_id

    for r in plan.rooms:
        if not r.rectangles:
            raise MapValidationError(f"room {r.room_id!r} has no rectangles", [r.room_id])
        for rect in r.rectangles:
            if rect.w <= 0 or rect.h <= 0:
                raise MapValidationError(f"room {r.room_id!r} has a rectangle with non-positive area", [r.room_id])
            if not rect.inside(plan.bounds):
                raise MapValidationError(f"room {r.room_id!r} extends outside the map bounds", [r.room_id])
        if not _rects_connected(r.rectangles):
            raise MapValidationError(f"room {r.room_id!r} is not a connected union of rectangles", [r.room_id])

    for i, a in enumerate(plan.rooms):
        for b in plan.rooms[i + 1:]:
            if any(ra.overlap_area(rb) > EPS for ra in a.rectangles for rb in b.rectangles):
                raise MapValidationError(f"rooms {a.room_id!r} and {b.room_id!r} overlap", [a.room_id, b.room_id])

    by_id = {r.room_id: r for r in plan.rooms}
    for d in plan.doors:
        a, b = d.connects
        if a == b:
            raise MapValidationError(f"door {d.door_id!r} connects room {a!r} to itself", [d.door_id])
        for rid in (a, b):
            if rid not in by_id:
                raise MapValidationError(f"door {d.door_id!r} references unknown room {rid!r}", [d.door_id, rid])
        if d.width <= 0:
            raise MapValidationError(f"door {d.door_id!r} has non-positive width", [d.door_id])
        (x1, y1), (x2, y2) = d.segment
        if abs(x1 - x2) > EPS and abs(y1 - y2) > EPS:
            raise MapValidationError(f"door {d.door_id!r} segment is not axis-aligned", [d.door_id])
        lo, hi = d.span
        if hi - lo <= EPS:
            raise MapValidationError(f"door {d.door_id!r} segment has zero length", [d.door_id])
        sa = door_sides(by_id[a], d, plan.wall_thickness)
        sb = door_sides(by_id[b], d, plan.wall_thickness)
        if not ((-1 in sa and +1 in sb) or (+1 in sa and -1 in sb)):
            raise MapValidationError(
                f"door {d.door_id!r} does not lie on a wall shared by {a!r} and {b!r}", [d.door_id, a, b]
            )

    for lab in plan.labels:
        if lab.room_id not in by_id:
            raise MapValidationError(f"label {lab.text!r} references unknown room {lab.room_id!r}", [lab.room_id])
        if lab.kind not in LABEL_KINDS:
            raise MapValidationError(f"label {lab.text!r} has unknown kind {lab.kind!r}", [lab.room_id])
        if not by_id[lab.room_id].contains(*lab.anchor):
            raise MapValidationError(
                f"label {lab.text!r} anchor {lab.anchor} lies outside room {lab.room_id!r}", [lab.room_id]
            )


# ---------------------------------------------------------------- JSON IO

_TOP_KEYS = {"map_id", "bounds", "wall_thickness", "rooms", "doors", "labels"}
_ROOM_KEYS = {"id", "name", "rects"}
_DOOR_KEYS = {"id", "rooms", "segment", "width", "open_by_default"}
_LABEL_KEYS = {"room", "text", "anchor", "kind"}


def _check_keys(obj: dict, allowed: set[str], where: str, strict: bool) -> None:
    extra = sorted(set(obj) - allowed)
    if not extra:
        return
    if strict:
        raise MapValidationError(f"unknown keys in {where}: {extra}")
    log.warning("ignoring unknown keys in %s: %s", where, extra)


def plan_from_dict(data: dict, strict: bool = True, validate: bool = True) -> FloorPlan:
    if not isinstance(data, dict):
        raise MapValidationError("map document must be a JSON object")
    _check_keys(data, _TOP_KEYS, "map", strict)
    try:
        rooms = []
        for r in data["rooms"]:
            _check_keys(r, _ROOM_KEYS, f"room {r.get('id')!r}", strict)
            rooms.append(
                Room(
                    room_id=str(r["id"]),
                    display_name=str(r.get("name", r["id"])),
                    rectangles=tuple(Rect(*map(float, rect)) for rect in r["rects"]),
                )
            )
        doors = []
        for d in data.get("doors", []):
            _check_keys(d, _DOOR_KEYS, f"door {d.get('id')!r}", strict)
            (p, q) = d["segment"]
            a, b = d["rooms"]
            doors.append(
                Door(
                    door_id=str(d["id"]),
                    connects=(str(a), str(b)),
                    segment=((float(p[0]), float(p[1])), (float(q[0]), float(q[1]))),
                    width=float(d["width"]),
                    open_by_default=bool(d.get("open_by_default", False)),
                )
            )
        labels = []
        for lab in data.get("labels", []):
            _check_keys(lab, _LABEL_KEYS, "label", strict)
            labels.append(
                Label(
                    room_id=str(lab["room"]),
                    text=str(lab["text"]),
                    anchor=(float(lab["anchor"][0]), float(lab["anchor"][1])),
                    kind=str(lab.get("kind", "center")),
                )
            )
        plan = FloorPlan(
            map_id=str(data["map_id"]),
            rooms=tuple(rooms),
            doors=tuple(doors),
            labels=tuple(labels),
            bounds=Rect(*map(float, data["bounds"])),
            wall_thickness=float(data["wall_thickness"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MapValidationError):
            raise
        raise MapValidationError(f"malformed map document: {exc!r}") from exc
    if validate:
        plan.validate()
    return plan


def plan_to_dict(plan: FloorPlan) -> dict:
    doors = []
    for d in plan.doors:
        entry = {
            "id": d.door_id,
            "rooms": list(d.connects),
            "segment": [[_num(c) for c in p] for p in d.segment],
            "width": _num(d.width),
        }
        if d.open_by_default:
            entry["open_by_default"] = True
        doors.append(entry)
    return {
        "map_id": plan.map_id,
        "bounds": plan.bounds.to_list(),
        "wall_thickness": _num(plan.wall_thickness),
        "rooms": [
            {"id": r.room_id, "name": r.display_name, "rects": [x.to_list() for x in r.rectangles]}
            for r in plan.rooms
        ],
        "doors": doors,
        "labels": [
            {"room": l.room_id, "text": l.text, "anchor": [_num(l.anchor[0]), _num(l.anchor[1])], "kind": l.kind}
            for l in plan.labels
        ],
    }


def dumps_plan(plan: FloorPlan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2, ensure_ascii=False) + "\n"


def loads_plan(text: str, strict: bool = True) -> FloorPlan:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapValidationError(f"map is not valid JSON: {exc}") from exc
    return plan_from_dict(data, strict=strict)


BUILTIN_MAPS = ("map1", "two_room", "single_room", "open_plan")


def builtin_map_path(name: str) -> Path:
    return Path(str(resources.files("floorplan_nav") / "data" / "maps" / f"{name}.json"))


def load_plan(path: str | Path, strict: bool = True) -> FloorPlan:
    """Load a map file. ``builtin:NAME`` selects one of the shipped fixtures."""
    p = str(path)
    if p.startswith("builtin:"):
        path = builtin_map_path(p.split(":", 1)[1])
    return loads_plan(Path(path).read_text(encoding="utf-8"), strict=strict)


def save_plan(plan: FloorPlan, path: str | Path) -> None:
    Path(path).write_text(dumps_plan(plan), encoding="utf-8")
